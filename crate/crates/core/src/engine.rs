//! Sequential test-and-merge clustering.
//!
//! At every iteration the engine looks at the pair of clusters with the
//! largest similarity p-value `p*`. If `p*` falls below the threshold, every
//! pair is significantly dissimilar: the global null "all groups are similar"
//! is rejected and the current clusters are reported. Otherwise the pair is
//! merged and the loop continues. With one cluster left the procedure stops
//! without rejecting.
//!
//! The implementation keeps a dense p-value matrix plus, for each live
//! cluster, its best partner. A merge costs one new p-value per surviving
//! cluster, so a full run evaluates at most `K(K-1)/2 + (K-1)(K-2)/2`
//! p-values.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{make_cluster, merge_clusters, ClusterStats, GroupId, GroupMetric, SimilarityNotion};
use crate::stats::PValue;

/// How the per-iteration rejection threshold is derived from `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    /// `alpha / K`. Valid when the p-values of successive iterations are
    /// independent of earlier merge decisions, e.g. each iteration is tested
    /// on its own split of the data.
    #[serde(rename = "per-k")]
    PerIterationK,
    /// `alpha / K^2`, a Bonferroni bound over all pairwise hypotheses the run
    /// can visit. The default for a single dataset.
    #[default]
    #[serde(rename = "bonferroni-k2")]
    BonferroniK2,
}

impl ThresholdPolicy {
    pub fn threshold(self, alpha: f64, k: usize) -> f64 {
        let k = k as f64;
        match self {
            ThresholdPolicy::PerIterationK => alpha / k,
            ThresholdPolicy::BonferroniK2 => alpha / (k * k),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdPolicy::PerIterationK => "per-k",
            ThresholdPolicy::BonferroniK2 => "bonferroni-k2",
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-k" => Ok(ThresholdPolicy::PerIterationK),
            "bonferroni-k2" => Ok(ThresholdPolicy::BonferroniK2),
            other => Err(Error::InvalidConfig(format!(
                "unknown threshold policy `{other}` (expected per-k or bonferroni-k2)"
            ))),
        }
    }
}

/// Rule for choosing among pairs that share the maximum p-value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    /// Order each pair by the smallest member id of its two clusters,
    /// `(min(a, b), max(a, b))`, and take the lexicographically smallest.
    #[default]
    #[serde(rename = "smallest-member-ids")]
    SmallestMemberIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub alpha: f64,
    pub threshold_policy: ThresholdPolicy,
    pub tie_break: TieBreak,
}

impl ClusteringConfig {
    pub fn new(alpha: f64, threshold_policy: ThresholdPolicy) -> Result<Self> {
        let config = ClusteringConfig {
            alpha,
            threshold_policy,
            tie_break: TieBreak::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn threshold(&self, k: usize) -> f64 {
        self.threshold_policy.threshold(self.alpha, k)
    }
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        ClusteringConfig {
            alpha: 0.05,
            threshold_policy: ThresholdPolicy::default(),
            tie_break: TieBreak::default(),
        }
    }
}

/// One non-rejecting iteration. Clusters are recorded by membership only;
/// their statistics can be recomputed from the input metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub iteration: usize,
    /// The merged pair, ordered by smallest member id.
    pub merged_pair: (Vec<GroupId>, Vec<GroupId>),
    pub max_pvalue: PValue,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    /// Whether the hypothesis that all groups are similar was rejected.
    pub rejected: bool,
    /// Clusters at the stopping iteration, ordered by smallest member id.
    pub final_clusters: Vec<ClusterStats>,
    pub trace: Vec<MergeStep>,
    /// `p*` at the stopping iteration; `None` when no pair was left to test.
    pub decision_pvalue: Option<PValue>,
    pub threshold: f64,
    /// Number of pairwise p-values evaluated during the run.
    pub pvalue_evaluations: usize,
}

impl ClusteringResult {
    /// Final partition as sorted member lists.
    pub fn partition(&self) -> Vec<Vec<GroupId>> {
        self.final_clusters.iter().map(|c| c.members().to_vec()).collect()
    }
}

/// Symmetric table of p-values over every unordered pair of clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct PValueTable {
    n: usize,
    // upper triangle, row-major
    values: Vec<PValue>,
    keys: Vec<GroupId>,
}

impl PValueTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of clusters the table covers.
    pub fn clusters(&self) -> usize {
        self.n
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.n);
        i * (2 * self.n - i - 1) / 2 + (j - i - 1)
    }

    /// p-value for clusters `i` and `j`; `None` on the diagonal.
    pub fn get(&self, i: usize, j: usize) -> Option<PValue> {
        match i.cmp(&j) {
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Less => Some(self.values[self.offset(i, j)]),
            std::cmp::Ordering::Greater => Some(self.values[self.offset(j, i)]),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), PValue)> + '_ {
        (0..self.n)
            .flat_map(move |i| (i + 1..self.n).map(move |j| (i, j)))
            .zip(self.values.iter().copied())
    }
}

/// Evaluates `notion` on every unordered pair of `clusters`.
pub fn pairwise_pvalue_table<N: SimilarityNotion + ?Sized>(
    clusters: &[ClusterStats],
    notion: &N,
) -> Result<PValueTable> {
    if clusters.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a p-value table needs at least 2 clusters, got {}",
            clusters.len()
        )));
    }
    let n = clusters.len();
    let mut values = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            values.push(notion.pvalue(&clusters[i], &clusters[j])?);
        }
    }
    let keys = clusters.iter().map(|c| c.min_member().clone()).collect();
    Ok(PValueTable { n, values, keys })
}

/// Largest entry of `table`, ties resolved by `tie_break`.
pub fn argmax_pair(table: &PValueTable, tie_break: TieBreak) -> Result<((usize, usize), PValue)> {
    let TieBreak::SmallestMemberIds = tie_break;
    let ordered_key = |(i, j): (usize, usize)| {
        let (a, b) = (&table.keys[i], &table.keys[j]);
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    };
    let mut best: Option<((usize, usize), PValue)> = None;
    for (pair, p) in table.entries() {
        let better = match best {
            None => true,
            Some((best_pair, best_p)) => {
                p.value() > best_p.value()
                    || (p.value() == best_p.value() && ordered_key(pair) < ordered_key(best_pair))
            }
        };
        if better {
            best = Some((pair, p));
        }
    }
    best.ok_or_else(|| Error::InvalidInput("cannot take the maximum of an empty p-value table".into()))
}

/// Runs the sequential test-and-merge procedure on `metrics`.
pub fn run_clustering<N: SimilarityNotion + ?Sized>(
    metrics: &[GroupMetric],
    notion: &N,
    config: &ClusteringConfig,
) -> Result<ClusteringResult> {
    config.validate()?;
    if metrics.is_empty() {
        return Err(Error::InvalidInput("no groups to cluster".into()));
    }
    let k = metrics.len();

    // rank[i] = position of metric i's id in sorted order
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| metrics[a].group_id().cmp(metrics[b].group_id()));
    for w in order.windows(2) {
        if metrics[w[0]].group_id() == metrics[w[1]].group_id() {
            return Err(Error::DuplicateGroup(metrics[w[0]].group_id().to_string()));
        }
    }
    let mut rank = vec![0; k];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let threshold = config.threshold(k);
    let mut state = MergeState::new(metrics.iter().map(make_cluster).collect(), rank, notion)?;
    let mut trace = Vec::new();
    let mut decision_pvalue = None;
    let mut rejected = false;

    for iteration in 0.. {
        if state.live == 1 {
            break;
        }
        let (a, b, p) = state.best_pair();
        if p.value() < threshold {
            rejected = true;
            decision_pvalue = Some(p);
            break;
        }
        trace.push(MergeStep {
            iteration,
            merged_pair: (state.members(a).to_vec(), state.members(b).to_vec()),
            max_pvalue: p,
            threshold_used: threshold,
        });
        state.merge(a, b, notion)?;
    }

    let mut final_clusters: Vec<ClusterStats> = state.slots.into_iter().flatten().collect();
    final_clusters.sort_by(|x, y| x.min_member().cmp(y.min_member()));
    Ok(ClusteringResult {
        rejected,
        final_clusters,
        trace,
        decision_pvalue,
        threshold,
        pvalue_evaluations: state.evaluations,
    })
}

struct MergeState {
    k: usize,
    slots: Vec<Option<ClusterStats>>,
    /// Rank of each slot's smallest member id.
    key: Vec<usize>,
    /// Dense `k x k` p-values between live slots.
    pvalues: Vec<f64>,
    /// Best partner of each live slot.
    best: Vec<Option<(usize, f64)>>,
    live: usize,
    evaluations: usize,
}

impl MergeState {
    fn new<N: SimilarityNotion + ?Sized>(clusters: Vec<ClusterStats>, key: Vec<usize>, notion: &N) -> Result<Self> {
        let k = clusters.len();
        let mut state = MergeState {
            k,
            slots: clusters.into_iter().map(Some).collect(),
            key,
            pvalues: vec![f64::NAN; k * k],
            best: vec![None; k],
            live: k,
            evaluations: 0,
        };
        for i in 0..k {
            for j in i + 1..k {
                state.evaluate(i, j, notion)?;
            }
        }
        for i in 0..k {
            state.rescan(i);
        }
        Ok(state)
    }

    fn members(&self, slot: usize) -> &[GroupId] {
        self.slots[slot].as_ref().expect("live slot").members()
    }

    fn evaluate<N: SimilarityNotion + ?Sized>(&mut self, i: usize, j: usize, notion: &N) -> Result<()> {
        let (lo, hi) = if self.key[i] < self.key[j] { (i, j) } else { (j, i) };
        let p = notion.pvalue(
            self.slots[lo].as_ref().expect("live slot"),
            self.slots[hi].as_ref().expect("live slot"),
        )?;
        self.evaluations += 1;
        self.pvalues[i * self.k + j] = p.value();
        self.pvalues[j * self.k + i] = p.value();
        Ok(())
    }

    #[inline]
    fn pair_key(&self, i: usize, j: usize) -> (usize, usize) {
        let (a, b) = (self.key[i], self.key[j]);
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Whether pair `(i, j)` with p-value `p` beats pair `(x, y)` with `q`.
    #[inline]
    fn beats(&self, p: f64, (i, j): (usize, usize), q: f64, (x, y): (usize, usize)) -> bool {
        p > q || (p == q && self.pair_key(i, j) < self.pair_key(x, y))
    }

    fn rescan(&mut self, i: usize) {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.k {
            if j == i || self.slots[j].is_none() {
                continue;
            }
            let p = self.pvalues[i * self.k + j];
            best = match best {
                Some((bj, bp)) if !self.beats(p, (i, j), bp, (i, bj)) => Some((bj, bp)),
                _ => Some((j, p)),
            };
        }
        self.best[i] = best;
    }

    /// Live pair with the largest p-value, ordered by smallest member id.
    fn best_pair(&self) -> (usize, usize, PValue) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.k {
            let Some((j, p)) = self.best[i] else { continue };
            best = match best {
                Some((bi, bj, bp)) if !self.beats(p, (i, j), bp, (bi, bj)) => Some((bi, bj, bp)),
                _ => Some((i, j, p)),
            };
        }
        let (i, j, p) = best.expect("at least two live clusters");
        let (a, b) = if self.key[i] < self.key[j] { (i, j) } else { (j, i) };
        (a, b, PValue::new(p).expect("stored p-values are valid"))
    }

    /// Merges slot `b` into slot `a` and refreshes the affected p-values.
    fn merge<N: SimilarityNotion + ?Sized>(&mut self, a: usize, b: usize, notion: &N) -> Result<()> {
        let removed = self.slots[b].take().expect("live slot");
        let kept = self.slots[a].take().expect("live slot");
        self.slots[a] = Some(merge_clusters(&kept, &removed)?);
        self.key[a] = self.key[a].min(self.key[b]);
        self.best[b] = None;
        self.live -= 1;

        for j in 0..self.k {
            if j != a && self.slots[j].is_some() {
                self.evaluate(a, j, notion)?;
            }
        }
        for j in 0..self.k {
            if j == a || self.slots[j].is_none() {
                continue;
            }
            match self.best[j] {
                Some((partner, _)) if partner == a || partner == b => self.rescan(j),
                Some((partner, q)) => {
                    let p = self.pvalues[j * self.k + a];
                    if self.beats(p, (j, a), q, (j, partner)) {
                        self.best[j] = Some((a, p));
                    }
                }
                None => self.rescan(j),
            }
        }
        self.rescan(a);
        Ok(())
    }
}
