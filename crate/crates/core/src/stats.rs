//! Special functions and elementary two-sample summaries.
//!
//! The complementary error function is a port of the FreeBSD `s_erf.c`
//! rational approximations (Copyright (C) 1993 by Sun Microsystems, Inc.,
//! freely redistributable with this notice preserved). The rational fits have
//! a documented error below 2^-57 on every sub-interval, so the survival
//! functions built on top of it carry relative error close to machine
//! precision over the ranges the clustering engine uses.
//!
//! Tests in this crate use a normal (large-sample) reference distribution
//! throughout. For small arms the exact Student t reference would be somewhat
//! wider and is not modelled.
#![allow(clippy::excessive_precision)]

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::{GroupId, GroupMetric};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PValue(f64);

impl PValue {
    pub const ONE: PValue = PValue(1.0);
    pub const ZERO: PValue = PValue(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(PValue(value))
        } else {
            Err(Error::InvalidPValue(value))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PValue {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        PValue::new(value)
    }
}

impl From<PValue> for f64 {
    fn from(p: PValue) -> f64 {
        p.0
    }
}

impl std::fmt::Display for PValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Count, mean and unbiased sample variance of one arm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl SampleSummary {
    pub fn new(count: usize, mean: f64, variance: f64) -> Self {
        SampleSummary { count, mean, variance }
    }

    /// Summarize raw observations with Welford's update. The variance uses
    /// the `n - 1` denominator and is `NaN` for fewer than two values.
    pub fn from_values(values: &[f64]) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let count = values.len();
        let variance = if count >= 2 { m2 / (count - 1) as f64 } else { f64::NAN };
        SampleSummary { count, mean, variance }
    }
}

const ERX: f64 = 8.45062911510467529297e-01;

// erf on [0, 0.84375]
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;

// erf on [0.84375, 1.25]
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;

// erfc on [1.25, 1/0.35]
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;

// erfc on [1/0.35, 28]
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

/// Complementary error function, `1 - erf(x)`, accurate in relative terms
/// across the whole real line (it underflows to zero past x = 28).
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let negative = x < 0.0;
    let ax = x.abs();

    if ax < 0.84375 {
        if ax < f64::EPSILON / 8.0 {
            return 1.0 - x;
        }
        let z = x * x;
        let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
        let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
        let y = r / s;
        return if x < 0.25 {
            // includes all negative x in range
            1.0 - (x + x * y)
        } else {
            0.5 - (x * y + (x - 0.5))
        };
    }

    if ax < 1.25 {
        let s = ax - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        return if negative { 1.0 + ERX + p / q } else { 1.0 - ERX - p / q };
    }

    if ax >= 28.0 {
        return if negative { 2.0 } else { 0.0 };
    }
    if negative && ax > 6.0 {
        return 2.0;
    }

    let s = 1.0 / (ax * ax);
    let (r, q) = if ax < 1.0 / 0.35 {
        (
            RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
            1.0 + s * (SA1 + s * (SA2 + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
        )
    } else {
        (
            RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
            1.0 + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
        )
    };
    // Split x into a short head so that exp(-x^2) is evaluated without
    // cancellation: -x^2 = -h^2 + (h - x)(h + x).
    let head = f64::from_bits(ax.to_bits() & 0xffff_ffff_0000_0000);
    let tail = (-head * head - 0.5625).exp() * ((head - ax) * (head + ax) + r / q).exp() / ax;
    if negative {
        2.0 - tail
    } else {
        tail
    }
}

/// Upper-tail probability of the standard normal distribution.
pub fn normal_sf(z: f64) -> Result<PValue> {
    if !z.is_finite() {
        return Err(Error::Domain {
            function: "normal_sf",
            value: z,
        });
    }
    Ok(PValue(clamp_unit(0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2))))
}

/// Survival function `P[X >= x]` of the chi-square distribution with one
/// degree of freedom, computed as `erfc(sqrt(x / 2))`.
pub fn chi2_sf_1df(x: f64) -> Result<PValue> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::Domain {
            function: "chi2_sf_1df",
            value: x,
        });
    }
    Ok(PValue(clamp_unit(erfc((0.5 * x).sqrt()))))
}

/// Inverse of [`normal_sf`]: the `z` with `P[Z >= z] = p`.
///
/// Acklam's rational starting point refined with Halley steps against
/// [`erfc`], which brings the result to within a few ulps.
pub fn normal_isf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            function: "normal_isf",
            value: p,
        });
    }
    let mut z = -acklam_quantile(p);
    for _ in 0..3 {
        let f = 0.5 * erfc(z * std::f64::consts::FRAC_1_SQRT_2) - p;
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density == 0.0 {
            break;
        }
        // d/dz sf = -density, second derivative = z * density
        let u = f / -density;
        z -= u / (1.0 + 0.5 * z * u);
    }
    Ok(z)
}

/// Inverse of [`chi2_sf_1df`].
pub fn chi2_isf_1df(p: f64) -> Result<f64> {
    if p == 1.0 {
        return Ok(0.0);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            function: "chi2_isf_1df",
            value: p,
        });
    }
    let z = normal_isf(0.5 * p)?;
    Ok(z * z)
}

fn acklam_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const LOW: f64 = 0.02425;

    if p < LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Difference in means between two arms and its standard error, packaged as
/// a [`GroupMetric`] for the clustering engine.
pub fn welch_summary(group_id: GroupId, treatment: &SampleSummary, control: &SampleSummary) -> Result<GroupMetric> {
    for (arm, s) in [("treatment", treatment), ("control", control)] {
        if s.count < 2 {
            return Err(Error::InsufficientData(format!(
                "group `{group_id}` {arm} arm has {} observation(s), need at least 2",
                s.count
            )));
        }
        if s.variance.is_nan() || s.variance < 0.0 || !s.variance.is_finite() || !s.mean.is_finite() {
            return Err(Error::InvalidInput(format!(
                "group `{group_id}` {arm} arm has mean {} and variance {}",
                s.mean, s.variance
            )));
        }
    }
    let estimate = treatment.mean - control.mean;
    let sd = (treatment.variance / treatment.count as f64 + control.variance / control.count as f64).sqrt();
    if sd == 0.0 {
        return Err(Error::DegenerateVariance(format!(
            "group `{group_id}` has zero variance in both arms"
        )));
    }
    GroupMetric::new(group_id, estimate, sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gid(s: &str) -> GroupId {
        GroupId::from(s)
    }

    #[test]
    fn pvalue_rejects_out_of_range() {
        assert!(PValue::new(-1e-300).is_err());
        assert!(PValue::new(1.0 + 1e-15).is_err());
        assert!(PValue::new(f64::NAN).is_err());
        assert_eq!(PValue::new(0.25).unwrap().value(), 0.25);
    }

    #[test]
    fn pvalue_serde_validates() {
        assert!(serde_json::from_str::<PValue>("0.5").is_ok());
        assert!(serde_json::from_str::<PValue>("1.5").is_err());
    }

    #[test]
    fn survival_functions_at_reference_points() {
        assert_eq!(chi2_sf_1df(0.0).unwrap().value(), 1.0);
        assert_eq!(normal_sf(0.0).unwrap().value(), 0.5);
        assert!((chi2_sf_1df(3.841458820694124).unwrap().value() - 0.05).abs() < 1e-9);
        assert!((chi2_sf_1df(6.634896601021213).unwrap().value() - 0.01).abs() < 1e-9);
        assert!((normal_sf(1.959963984540054).unwrap().value() - 0.025).abs() < 1e-9);
        assert!((normal_sf(-1.959963984540054).unwrap().value() - 0.975).abs() < 1e-9);
    }

    #[test]
    fn survival_functions_reject_bad_input() {
        assert!(matches!(chi2_sf_1df(-0.1), Err(Error::Domain { .. })));
        assert!(chi2_sf_1df(f64::INFINITY).is_err());
        assert!(chi2_sf_1df(f64::NAN).is_err());
        assert!(normal_sf(f64::NAN).is_err());
        assert!(normal_sf(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn erfc_limits() {
        assert_eq!(erfc(0.0), 1.0);
        assert_eq!(erfc(30.0), 0.0);
        assert_eq!(erfc(-30.0), 2.0);
        assert_eq!(erfc(-7.0), 2.0);
        assert!(erfc(f64::NAN).is_nan());
        assert!((erfc(-1.0) + erfc(1.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normal_symmetry() {
        let mut z = -8.0;
        while z <= 8.0 {
            let s = normal_sf(z).unwrap().value() + normal_sf(-z).unwrap().value();
            assert!((s - 1.0).abs() <= 1e-14, "z = {z}: {s}");
            z += 0.0625;
        }
    }

    #[test]
    fn chi2_matches_two_sided_normal() {
        for i in 0..=4000 {
            let x = i as f64 * 0.01;
            let a = chi2_sf_1df(x).unwrap().value();
            let b = 2.0 * normal_sf(x.sqrt()).unwrap().value();
            assert!(
                (a - b).abs() <= 1e-12 * a.max(1e-300) || (a - b).abs() <= 1e-16,
                "x = {x}"
            );
        }
    }

    #[test]
    fn monotone_on_grid() {
        let mut prev = f64::INFINITY;
        for i in 0..=10_000 {
            let p = chi2_sf_1df(i as f64 * 0.004).unwrap().value();
            assert!(p <= prev);
            prev = p;
        }
        let mut prev = f64::INFINITY;
        for i in -5000..=5000 {
            let p = normal_sf(i as f64 * 0.002).unwrap().value();
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn quantiles_invert() {
        for &p in &[1e-12, 1e-6, 0.001, 0.025, 0.3, 0.5, 0.77, 0.999] {
            let z = normal_isf(p).unwrap();
            let back = normal_sf(z).unwrap().value();
            assert!(((back - p) / p).abs() < 1e-12, "p = {p}: {back}");
        }
        assert!((chi2_isf_1df(0.05).unwrap() - 3.841458820694124).abs() < 1e-9);
        assert_eq!(chi2_isf_1df(1.0).unwrap(), 0.0);
        assert!(chi2_isf_1df(0.0).is_err());
    }

    #[test]
    fn welch_example() {
        let t = SampleSummary::new(100, 0.3, 0.01);
        let c = SampleSummary::new(100, 0.1, 0.01);
        let m = welch_summary(gid("g"), &t, &c).unwrap();
        assert!((m.estimate() - 0.2).abs() < 1e-15);
        assert!((m.sd() - 0.0002f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn welch_matches_brute_force_on_raw_samples() {
        // values chosen so the arm summaries are easy to check by hand
        let treatment: Vec<f64> = (0..50).map(|i| 0.3 + 0.01 * ((i % 7) as f64 - 3.0)).collect();
        let control: Vec<f64> = (0..40).map(|i| 0.1 + 0.02 * ((i % 5) as f64 - 2.0)).collect();

        let naive = |xs: &[f64]| {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
            (mean, var, n)
        };
        let (mt, vt, nt) = naive(&treatment);
        let (mc, vc, nc) = naive(&control);

        let m = welch_summary(
            gid("g"),
            &SampleSummary::from_values(&treatment),
            &SampleSummary::from_values(&control),
        )
        .unwrap();
        assert!((m.estimate() - (mt - mc)).abs() < 1e-14);
        assert!((m.sd() - (vt / nt + vc / nc).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn welch_identical_arms_and_swap() {
        let a = SampleSummary::new(30, 1.5, 2.0);
        let b = SampleSummary::new(12, 0.5, 0.7);
        assert_eq!(welch_summary(gid("g"), &a, &a).unwrap().estimate(), 0.0);
        let ab = welch_summary(gid("g"), &a, &b).unwrap();
        let ba = welch_summary(gid("g"), &b, &a).unwrap();
        assert_eq!(ab.estimate(), -ba.estimate());
        assert_eq!(ab.sd(), ba.sd());
    }

    #[test]
    fn welch_errors() {
        let one = SampleSummary::new(1, 0.0, 0.0);
        let ok = SampleSummary::new(10, 0.0, 1.0);
        assert!(matches!(
            welch_summary(gid("g"), &one, &ok),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            welch_summary(gid("g"), &ok, &one),
            Err(Error::InsufficientData(_))
        ));
        let flat = SampleSummary::new(10, 1.0, 0.0);
        assert!(matches!(
            welch_summary(gid("g"), &flat, &flat),
            Err(Error::DegenerateVariance(_))
        ));
    }
}
