//! Seeded Monte Carlo studies of the clustering procedure.
//!
//! Two synthetic set-ups are provided:
//!
//! - a two-continent experiment in which every "Asia" group has treatment
//!   effect `-mu` and every "Africa" group `+mu`, used to measure how often
//!   the procedure recovers the Asia groups as exactly one cluster;
//! - a null experiment in which every group has zero effect, used to measure
//!   how often the procedure falsely rejects.
//!
//! Member outcomes are `Normal(0, noise_sd)` in control and
//! `Normal(effect, noise_sd)` in treatment. Each (replicate, group, arm)
//! triple draws from its own ChaCha stream derived from the study seed, so
//! replicates can run in any order or in parallel and still reproduce
//! bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_clustering, ClusteringConfig, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::similarity::{GroupId, GroupMetric, LikelihoodRatio};
use crate::stats::{welch_summary, SampleSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Continent {
    /// Treatment shifts outcomes by `-mu`.
    Asia,
    /// Treatment shifts outcomes by `+mu`.
    Africa,
}

impl Continent {
    fn sign(self) -> f64 {
        match self {
            Continent::Asia => -1.0,
            Continent::Africa => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group_id: GroupId,
    pub continent: Continent,
    pub n_control: usize,
    pub n_treatment: usize,
}

/// Generative description of a synthetic experiment and how to analyse it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub groups: Vec<GroupSpec>,
    pub effect_mu: f64,
    pub noise_sd: f64,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(default)]
    pub threshold_policy: ThresholdPolicy,
}

pub const DEFAULT_SEED: u64 = 20_200_117;
pub const DEFAULT_NOISE_SD: f64 = 0.1;
pub const DEFAULT_MEMBERS_PER_ARM: usize = 100;

impl SimulationSpec {
    /// `n_asia` groups followed by `n_africa` groups, each with
    /// `members_per_arm` members in both arms. Ids are `asia_NN` and
    /// `africa_NN`.
    pub fn two_continents(n_asia: usize, n_africa: usize, members_per_arm: usize) -> Self {
        let roster = |continent: Continent, prefix: &'static str, n: usize| {
            (0..n).map(move |i| GroupSpec {
                group_id: GroupId::from(format!("{prefix}_{i:02}")),
                continent,
                n_control: members_per_arm,
                n_treatment: members_per_arm,
            })
        };
        let groups = roster(Continent::Asia, "asia", n_asia)
            .chain(roster(Continent::Africa, "africa", n_africa))
            .collect();
        SimulationSpec {
            groups,
            effect_mu: 0.0,
            noise_sd: DEFAULT_NOISE_SD,
            replications: 100,
            seed: DEFAULT_SEED,
            alpha: 0.05,
            threshold_policy: ThresholdPolicy::BonferroniK2,
        }
    }

    /// 20 Asia and 20 Africa groups, 100 members per arm.
    pub fn desk_preset() -> Self {
        Self::two_continents(20, 20, DEFAULT_MEMBERS_PER_ARM)
    }

    /// One group per country: 48 in Asia, 54 in Africa.
    pub fn full_preset() -> Self {
        Self::two_continents(48, 54, DEFAULT_MEMBERS_PER_ARM)
    }

    pub fn with_mu(&self, mu: f64) -> Self {
        SimulationSpec {
            effect_mu: mu,
            ..self.clone()
        }
    }

    pub fn clustering_config(&self) -> Result<ClusteringConfig> {
        ClusteringConfig::new(self.alpha, self.threshold_policy)
    }

    /// Sorted ids of the Asia groups.
    pub fn asia_ids(&self) -> Vec<GroupId> {
        let mut ids: Vec<GroupId> = self
            .groups
            .iter()
            .filter(|g| g.continent == Continent::Asia)
            .map(|g| g.group_id.clone())
            .collect();
        ids.sort();
        ids
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.groups.is_empty() {
            problems.push("groups: at least one group is required".to_string());
        }
        for g in &self.groups {
            if g.n_control < 2 {
                problems.push(format!(
                    "groups[{}].n_control: must be >= 2, got {}",
                    g.group_id, g.n_control
                ));
            }
            if g.n_treatment < 2 {
                problems.push(format!(
                    "groups[{}].n_treatment: must be >= 2, got {}",
                    g.group_id, g.n_treatment
                ));
            }
        }
        let mut ids: Vec<&GroupId> = self.groups.iter().map(|g| &g.group_id).collect();
        ids.sort();
        for w in ids.windows(2) {
            if w[0] == w[1] {
                problems.push(format!("groups: duplicate group id `{}`", w[0]));
            }
        }
        if !self.effect_mu.is_finite() {
            problems.push(format!("effect_mu: must be finite, got {}", self.effect_mu));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            problems.push(format!("noise_sd: must be positive and finite, got {}", self.noise_sd));
        }
        if self.replications == 0 {
            problems.push("replications: must be >= 1".to_string());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            problems.push(format!("alpha: must be in (0, 1), got {}", self.alpha));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Arm {
    Control = 0,
    Treatment = 1,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_seed(seed: u64, rep_index: u64, group_index: u64, arm: Arm) -> u64 {
    [rep_index, group_index, arm as u64]
        .iter()
        .fold(mix(seed), |acc, &x| mix(acc ^ x))
}

fn draw_arm(seed: u64, n: usize, mean: f64, sd: f64, buf: &mut Vec<f64>) -> SampleSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(mean, sd).expect("validated noise_sd");
    buf.clear();
    buf.extend((0..n).map(|_| dist.sample(&mut rng)));
    SampleSummary::from_values(buf)
}

/// Draws one replicate of the experiment and summarizes each group as a
/// difference in means with its standard error.
pub fn simulate_two_continent_replicate(spec: &SimulationSpec, rep_index: u64) -> Result<Vec<GroupMetric>> {
    spec.validate()?;
    simulate_unchecked(spec, rep_index)
}

fn simulate_unchecked(spec: &SimulationSpec, rep_index: u64) -> Result<Vec<GroupMetric>> {
    let mut buf = Vec::new();
    spec.groups
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let gi = gi as u64;
            let control = draw_arm(
                stream_seed(spec.seed, rep_index, gi, Arm::Control),
                g.n_control,
                0.0,
                spec.noise_sd,
                &mut buf,
            );
            let treatment = draw_arm(
                stream_seed(spec.seed, rep_index, gi, Arm::Treatment),
                g.n_treatment,
                g.continent.sign() * spec.effect_mu,
                spec.noise_sd,
                &mut buf,
            );
            welch_summary(g.group_id.clone(), &treatment, &control)
        })
        .collect()
}

/// Monte Carlo standard error of a proportion.
pub fn proportion_se(rate: f64, replications: usize) -> f64 {
    (rate * (1.0 - rate) / replications as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerCurvePoint {
    pub mu: f64,
    pub exact_recovery_rate: f64,
    pub rejection_rate: f64,
    pub replications: usize,
}

impl PowerCurvePoint {
    pub fn recovery_se(&self) -> f64 {
        proportion_se(self.exact_recovery_rate, self.replications)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FprCurvePoint {
    pub alpha: f64,
    pub false_rejection_rate: f64,
    pub replications: usize,
}

impl FprCurvePoint {
    pub fn se(&self) -> f64 {
        proportion_se(self.false_rejection_rate, self.replications)
    }
}

/// `n` equispaced points from 0 to 1 inclusive.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

/// For each `mu` in the grid, clusters `replications` replicates and records
/// how often one final cluster is exactly the set of Asia groups, and how
/// often the procedure rejects.
///
/// Replicate `r` uses the same random streams at every grid point, so the
/// curve is computed with common random numbers.
pub fn power_curve(template: &SimulationSpec, mu_grid: &[f64]) -> Result<Vec<PowerCurvePoint>> {
    if mu_grid.is_empty() {
        return Err(Error::InvalidConfig("mu grid: at least one value is required".into()));
    }
    template.validate()?;
    if let Some(bad) = mu_grid.iter().find(|m| !m.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "mu grid: values must be finite, got {bad}"
        )));
    }
    let config = template.clustering_config()?;
    let asia = template.asia_ids();

    mu_grid
        .iter()
        .map(|&mu| {
            let spec = template.with_mu(mu);
            let outcomes = (0..spec.replications as u64)
                .into_par_iter()
                .map(|rep| {
                    let metrics = simulate_unchecked(&spec, rep)?;
                    let result = run_clustering(&metrics, &LikelihoodRatio, &config)?;
                    let recovered = result.final_clusters.iter().any(|c| c.members() == asia.as_slice());
                    Ok((recovered, result.rejected))
                })
                .collect::<Result<Vec<(bool, bool)>>>()?;
            let n = outcomes.len();
            let recovered = outcomes.iter().filter(|o| o.0).count();
            let rejected = outcomes.iter().filter(|o| o.1).count();
            Ok(PowerCurvePoint {
                mu,
                exact_recovery_rate: recovered as f64 / n as f64,
                rejection_rate: rejected as f64 / n as f64,
                replications: n,
            })
        })
        .collect()
}

/// Null study: every group has zero treatment effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullStudy {
    pub n_groups: usize,
    pub members_per_arm: usize,
    pub noise_sd: f64,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub threshold_policy: ThresholdPolicy,
}

impl NullStudy {
    pub fn new(n_groups: usize, replications: usize, seed: u64) -> Self {
        NullStudy {
            n_groups,
            members_per_arm: DEFAULT_MEMBERS_PER_ARM,
            noise_sd: DEFAULT_NOISE_SD,
            replications,
            seed,
            threshold_policy: ThresholdPolicy::BonferroniK2,
        }
    }

    fn simulation_spec(&self) -> SimulationSpec {
        let mut spec = SimulationSpec::two_continents(self.n_groups, 0, self.members_per_arm);
        spec.noise_sd = self.noise_sd;
        spec.replications = self.replications;
        spec.seed = self.seed;
        spec.threshold_policy = self.threshold_policy;
        spec
    }
}

/// False rejection rate of the procedure at each `alpha`, under the null.
/// Every alpha is evaluated on the same replicates.
pub fn fpr_curve(study: &NullStudy, alpha_grid: &[f64]) -> Result<Vec<FprCurvePoint>> {
    if study.n_groups < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_groups: must be >= 2, got {}",
            study.n_groups
        )));
    }
    if alpha_grid.is_empty() {
        return Err(Error::InvalidConfig(
            "alpha grid: at least one value is required".into(),
        ));
    }
    let configs = alpha_grid
        .iter()
        .map(|&a| ClusteringConfig::new(a, study.threshold_policy))
        .collect::<Result<Vec<_>>>()?;
    let spec = study.simulation_spec();
    spec.validate()?;

    let rejections = (0..study.replications as u64)
        .into_par_iter()
        .map(|rep| {
            let metrics = simulate_unchecked(&spec, rep)?;
            configs
                .iter()
                .map(|c| Ok(run_clustering(&metrics, &LikelihoodRatio, c)?.rejected))
                .collect::<Result<Vec<bool>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(alpha_grid
        .iter()
        .enumerate()
        .map(|(i, &alpha)| {
            let count = rejections.iter().filter(|r| r[i]).count();
            FprCurvePoint {
                alpha,
                false_rejection_rate: count as f64 / study.replications as f64,
                replications: study.replications,
            }
        })
        .collect())
}
