//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use hetclust::similarity::{lr_pvalue, make_cluster, merge_clusters};
use hetclust::{ClusterStats, ClusteringConfig, ClusteringResult, GroupId, GroupMetric};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// The likelihood ratio written with square roots of the precision ratio,
/// `(S_a + S_b)^-1 (sqrt(S_b / S_a) D_a - sqrt(S_a / S_b) D_b)^2`.
pub fn lr_sqrt_form(a: &ClusterStats, b: &ClusterStats) -> f64 {
    let (sa, sb) = (a.precision_sum(), b.precision_sum());
    let inner = (sb / sa).sqrt() * a.weighted_sum() - (sa / sb).sqrt() * b.weighted_sum();
    inner * inner / (sa + sb)
}

/// Cluster statistics summed directly from the member metrics.
pub fn cluster_of(metrics: &[GroupMetric]) -> ClusterStats {
    let mut it = metrics.iter();
    let mut c = make_cluster(it.next().expect("nonempty"));
    for m in it {
        c = merge_clusters(&c, &make_cluster(m)).unwrap();
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub rejected: bool,
    pub partition: Vec<Vec<GroupId>>,
    pub trace: Vec<(Vec<GroupId>, Vec<GroupId>, f64)>,
    pub decision_pvalue: Option<f64>,
}

impl Outcome {
    pub fn of(result: &ClusteringResult) -> Self {
        Outcome {
            rejected: result.rejected,
            partition: result.partition(),
            trace: result
                .trace
                .iter()
                .map(|s| (s.merged_pair.0.clone(), s.merged_pair.1.clone(), s.max_pvalue.value()))
                .collect(),
            decision_pvalue: result.decision_pvalue.map(|p| p.value()),
        }
    }

    /// Same decision, partition and merge order, ignoring p-values.
    pub fn same_shape(&self, other: &Outcome) -> bool {
        self.rejected == other.rejected
            && self.partition == other.partition
            && self.trace.len() == other.trace.len()
            && self
                .trace
                .iter()
                .zip(&other.trace)
                .all(|(x, y)| x.0 == y.0 && x.1 == y.1)
    }
}

/// Brute-force clustering: the full p-value table is rebuilt from scratch at
/// every iteration and scanned for its maximum.
pub fn brute_force(metrics: &[GroupMetric], config: &ClusteringConfig) -> Outcome {
    let threshold = config.threshold(metrics.len());
    let mut clusters: Vec<ClusterStats> = metrics.iter().map(make_cluster).collect();
    let mut trace = Vec::new();
    loop {
        if clusters.len() == 1 {
            return Outcome {
                rejected: false,
                partition: sorted(clusters),
                trace,
                decision_pvalue: None,
            };
        }
        let mut best: Option<(f64, (GroupId, GroupId), usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in 0..clusters.len() {
                if i == j {
                    continue;
                }
                let p = lr_pvalue(&clusters[i], &clusters[j]).unwrap().value();
                let (x, y) = (clusters[i].members()[0].clone(), clusters[j].members()[0].clone());
                let key = if x < y { (x, y) } else { (y, x) };
                let take = match &best {
                    None => true,
                    Some((bp, bkey, _, _)) => p > *bp || (p == *bp && key < *bkey),
                };
                if take {
                    best = Some((p, key, i, j));
                }
            }
        }
        let (p, _, i, j) = best.unwrap();
        if p < threshold {
            return Outcome {
                rejected: true,
                partition: sorted(clusters),
                trace,
                decision_pvalue: Some(p),
            };
        }
        let (lo, hi) = if clusters[i].members()[0] < clusters[j].members()[0] {
            (i, j)
        } else {
            (j, i)
        };
        trace.push((clusters[lo].members().to_vec(), clusters[hi].members().to_vec(), p));
        let merged = merge_clusters(&clusters[lo], &clusters[hi]).unwrap();
        let (first, second) = (i.max(j), i.min(j));
        clusters.remove(first);
        clusters.remove(second);
        clusters.push(merged);
    }
}

fn sorted(mut clusters: Vec<ClusterStats>) -> Vec<Vec<GroupId>> {
    clusters.sort_by(|a, b| a.members()[0].cmp(&b.members()[0]));
    clusters.into_iter().map(|c| c.members().to_vec()).collect()
}

/// Random instance with a few latent effect levels, so that runs mix
/// merges with rejections. Ids are shuffled relative to the levels.
pub fn random_instance(rng: &mut ChaCha8Rng, k: usize) -> Vec<GroupMetric> {
    let levels: Vec<f64> = (0..rng.random_range(1..=3))
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let mut names: Vec<usize> = (0..k).collect();
    names.shuffle(rng);
    (0..k)
        .map(|i| {
            let sd: f64 = rng.random_range(0.02..0.3);
            let mu = levels[rng.random_range(0..levels.len())];
            let z: f64 = StandardNormal.sample(rng);
            GroupMetric::new(format!("g{:03}", names[i]), mu + sd * z, sd).unwrap()
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct FixtureRow {
    pub function: String,
    pub x: f64,
    pub expected: f64,
}

pub fn special_function_fixtures() -> Vec<FixtureRow> {
    let text = include_str!("../fixtures/special_functions.csv");
    text.lines()
        .skip(1)
        .map(|line| {
            let mut parts = line.split(',');
            let function = parts.next().unwrap().to_owned();
            let x = parts.next().unwrap().parse().unwrap();
            let expected = parts.next().unwrap().parse().unwrap();
            FixtureRow { function, x, expected }
        })
        .collect()
}
