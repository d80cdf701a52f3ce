//! Cluster sufficient statistics and the likelihood-ratio similarity test.
//!
//! Every group is summarized as an estimate with a standard error and modelled
//! as `estimate ~ N(mu, sd^2)`. A cluster carries two additive statistics,
//! the precision sum `S = sum(1 / sd^2)` and the precision-weighted sum
//! `D = sum(estimate / sd^2)`, from which the maximum-likelihood common mean
//! is `D / S`. Testing whether two clusters share a mean with a generalized
//! likelihood ratio gives a statistic that is chi-square with one degree of
//! freedom under the null.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{chi2_sf_1df, PValue};

/// Opaque, totally ordered group identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(String);

impl GroupId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GroupId {
    fn from(s: &str) -> Self {
        GroupId(s.to_owned())
    }
}

impl From<String> for GroupId {
    fn from(s: String) -> Self {
        GroupId(s)
    }
}

/// One group's estimated effect (a lift, a treatment effect or a classifier
/// rate) together with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupMetric {
    group_id: GroupId,
    estimate: f64,
    sd: f64,
}

impl GroupMetric {
    pub fn new(group_id: impl Into<GroupId>, estimate: f64, sd: f64) -> Result<Self> {
        let group_id = group_id.into();
        if !estimate.is_finite() {
            return Err(Error::InvalidMetric {
                group: group_id.to_string(),
                reason: format!("estimate {estimate} is not finite"),
            });
        }
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(Error::InvalidMetric {
                group: group_id.to_string(),
                reason: format!("standard error {sd} must be positive and finite"),
            });
        }
        Ok(GroupMetric { group_id, estimate, sd })
    }

    pub fn group_id(&self) -> &GroupId {
        &self.group_id
    }

    pub fn estimate(&self) -> f64 {
        self.estimate
    }

    pub fn sd(&self) -> f64 {
        self.sd
    }
}

/// A set of groups with its cached sufficient statistics.
///
/// `members` is kept sorted so that clusters compare and serialize
/// canonically regardless of merge order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    members: Vec<GroupId>,
    precision_sum: f64,
    weighted_sum: f64,
}

impl ClusterStats {
    pub fn members(&self) -> &[GroupId] {
        &self.members
    }

    /// Smallest member id; used for deterministic tie-breaking.
    pub fn min_member(&self) -> &GroupId {
        &self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn precision_sum(&self) -> f64 {
        self.precision_sum
    }

    pub fn weighted_sum(&self) -> f64 {
        self.weighted_sum
    }

    /// Precision-weighted mean, the maximum-likelihood common effect.
    pub fn mle_mean(&self) -> f64 {
        self.weighted_sum / self.precision_sum
    }

    /// Standard error of [`ClusterStats::mle_mean`].
    pub fn mle_sd(&self) -> f64 {
        self.precision_sum.recip().sqrt()
    }
}

/// Singleton cluster for one group.
pub fn make_cluster(metric: &GroupMetric) -> ClusterStats {
    let precision = 1.0 / (metric.sd * metric.sd);
    ClusterStats {
        members: vec![metric.group_id.clone()],
        precision_sum: precision,
        weighted_sum: metric.estimate * precision,
    }
}

/// Union of two disjoint clusters. Both statistics are plain sums, so the
/// operation is commutative, and associative up to floating-point rounding.
pub fn merge_clusters(a: &ClusterStats, b: &ClusterStats) -> Result<ClusterStats> {
    let members = merge_sorted(&a.members, &b.members).map_err(Error::InvalidMerge)?;
    Ok(ClusterStats {
        members,
        precision_sum: a.precision_sum + b.precision_sum,
        weighted_sum: a.weighted_sum + b.weighted_sum,
    })
}

fn merge_sorted(a: &[GroupId], b: &[GroupId]) -> std::result::Result<Vec<GroupId>, String> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            Ordering::Equal => return Err(a[i].to_string()),
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    Ok(out)
}

fn shared_member<'a>(a: &'a [GroupId], b: &[GroupId]) -> Option<&'a GroupId> {
    // sorted inputs: cheap range rejection first
    if a.is_empty() || b.is_empty() || a[a.len() - 1] < b[0] || b[b.len() - 1] < a[0] {
        return None;
    }
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => return Some(&a[i]),
        }
    }
    None
}

/// Likelihood-ratio statistic for `H: mu_a = mu_b`.
///
/// Evaluated as `S_a S_b / (S_a + S_b) * (mu_a - mu_b)^2`, which is exact
/// for any precision ratio and exactly symmetric in its arguments. For two
/// singletons it reduces to `(x_a - x_b)^2 / (sd_a^2 + sd_b^2)`.
pub fn lr_statistic(a: &ClusterStats, b: &ClusterStats) -> Result<f64> {
    if let Some(id) = shared_member(&a.members, &b.members) {
        return Err(Error::InvalidPair(id.to_string()));
    }
    Ok(lr_unchecked(a, b))
}

#[inline]
fn lr_unchecked(a: &ClusterStats, b: &ClusterStats) -> f64 {
    let diff = a.mle_mean() - b.mle_mean();
    a.precision_sum * b.precision_sum / (a.precision_sum + b.precision_sum) * (diff * diff)
}

/// Chi-square(1) p-value of [`lr_statistic`].
pub fn lr_pvalue(a: &ClusterStats, b: &ClusterStats) -> Result<PValue> {
    chi2_sf_1df(lr_statistic(a, b)?)
}

/// A notion of similarity between clusters together with a test for it.
///
/// Implementations must be merge invariant: if three clusters are pairwise
/// similar, each one is also similar to the merger of the other two. The
/// sequential procedure's error control relies on it.
pub trait SimilarityNotion: Send + Sync {
    /// p-value for the hypothesis that `a` and `b` are similar.
    fn pvalue(&self, a: &ClusterStats, b: &ClusterStats) -> Result<PValue>;
}

/// Equality of the underlying mean effect, tested with the likelihood ratio.
///
/// Merge invariant: if every member of two clusters shares the mean `mu`, so
/// does their union, and the union's maximum-likelihood mean still estimates
/// `mu`. The same holds for ratio metrics such as lift, and for classifier
/// rates, whose pooled value is a weighted average of the parts.
#[derive(Debug, Clone, Copy, Default)]
pub struct LikelihoodRatio;

impl SimilarityNotion for LikelihoodRatio {
    fn pvalue(&self, a: &ClusterStats, b: &ClusterStats) -> Result<PValue> {
        lr_pvalue(a, b)
    }
}

/// One scored example from a binary classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub label: bool,
    pub classification: bool,
}

impl Prediction {
    pub fn new(label: bool, classification: bool) -> Self {
        Prediction { label, classification }
    }
}

/// Classifier rate whose parity across groups is tested.
///
/// Equalized odds corresponds to running the procedure once with
/// [`RateKind::FalsePositiveRate`] and once with
/// [`RateKind::TruePositiveRate`], i.e. separately per label stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateKind {
    #[serde(rename = "fpr")]
    FalsePositiveRate,
    #[serde(rename = "tpr")]
    TruePositiveRate,
    PositiveRate,
    #[serde(rename = "misclassification")]
    MisclassificationRate,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::FalsePositiveRate => "fpr",
            RateKind::TruePositiveRate => "tpr",
            RateKind::PositiveRate => "positive-rate",
            RateKind::MisclassificationRate => "misclassification",
        }
    }

    /// Whether the row enters the denominator of the rate.
    fn relevant(self, p: &Prediction) -> bool {
        match self {
            RateKind::FalsePositiveRate => !p.label,
            RateKind::TruePositiveRate => p.label,
            RateKind::PositiveRate | RateKind::MisclassificationRate => true,
        }
    }

    /// Whether the row counts towards the numerator.
    fn event(self, p: &Prediction) -> bool {
        match self {
            RateKind::MisclassificationRate => p.classification != p.label,
            _ => p.classification,
        }
    }
}

impl fmt::Display for RateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fpr" => Ok(RateKind::FalsePositiveRate),
            "tpr" => Ok(RateKind::TruePositiveRate),
            "positive-rate" => Ok(RateKind::PositiveRate),
            "misclassification" => Ok(RateKind::MisclassificationRate),
            other => Err(Error::InvalidConfig(format!(
                "unknown metric `{other}` (expected fpr, tpr, positive-rate or misclassification)"
            ))),
        }
    }
}

/// Empirical classifier rate for one group with its plug-in binomial
/// standard error `sqrt(r (1 - r) / m)`.
pub fn classifier_rate_metric(
    group_id: impl Into<GroupId>,
    predictions: &[Prediction],
    kind: RateKind,
) -> Result<GroupMetric> {
    let group_id = group_id.into();
    let (mut m, mut hits) = (0usize, 0usize);
    for p in predictions.iter().filter(|p| kind.relevant(p)) {
        m += 1;
        if kind.event(p) {
            hits += 1;
        }
    }
    if m == 0 {
        return Err(Error::InsufficientData(format!(
            "group `{group_id}` has no rows relevant to {kind}"
        )));
    }
    let rate = hits as f64 / m as f64;
    if hits == 0 || hits == m {
        return Err(Error::DegenerateRate {
            group: group_id.to_string(),
            rate,
        });
    }
    let sd = (rate * (1.0 - rate) / m as f64).sqrt();
    GroupMetric::new(group_id, rate, sd)
}
