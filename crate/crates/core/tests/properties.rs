mod common;

use hetclust::similarity::{lr_pvalue, lr_statistic, make_cluster, merge_clusters};
use hetclust::stats::{chi2_isf_1df, chi2_sf_1df, normal_sf, welch_summary};
use hetclust::{ClusterStats, GroupId, GroupMetric, SampleSummary};
use proptest::prelude::*;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn metric_strategy() -> impl Strategy<Value = (f64, f64)> {
    (-10.0f64..10.0, 1e-3f64..10.0)
}

/// Two disjoint clusters with 1..=20 members each.
fn cluster_pair() -> impl Strategy<Value = (ClusterStats, ClusterStats)> {
    (
        prop::collection::vec(metric_strategy(), 1..=20),
        prop::collection::vec(metric_strategy(), 1..=20),
    )
        .prop_map(|(a, b)| {
            let build = |prefix: &str, xs: &[(f64, f64)]| {
                let metrics: Vec<GroupMetric> = xs
                    .iter()
                    .enumerate()
                    .map(|(i, &(e, s))| GroupMetric::new(format!("{prefix}{i:02}"), e, s).unwrap())
                    .collect();
                common::cluster_of(&metrics)
            };
            (build("a", &a), build("b", &b))
        })
}

proptest! {
    #[test]
    fn canonical_and_sqrt_forms_agree((a, b) in cluster_pair()) {
        let canonical = lr_statistic(&a, &b).unwrap();
        let sqrt_form = common::lr_sqrt_form(&a, &b);
        prop_assert!(canonical >= 0.0);
        prop_assert!(close(canonical, sqrt_form, 1e-10), "{} vs {}", canonical, sqrt_form);
    }

    #[test]
    fn lr_is_symmetric((a, b) in cluster_pair()) {
        prop_assert_eq!(lr_statistic(&a, &b).unwrap(), lr_statistic(&b, &a).unwrap());
    }

    #[test]
    fn singleton_reduction((x, sx) in metric_strategy(), (y, sy) in metric_strategy()) {
        let a = make_cluster(&GroupMetric::new("a", x, sx).unwrap());
        let b = make_cluster(&GroupMetric::new("b", y, sy).unwrap());
        let direct = (x - y).powi(2) / (sx * sx + sy * sy);
        let lr = lr_statistic(&a, &b).unwrap();
        prop_assert!((lr - direct).abs() <= 1e-12 * direct.max(1e-300) || (lr - direct).abs() < 1e-290,
            "{} vs {}", lr, direct);
    }

    #[test]
    fn merge_is_exact_addition((a, b) in cluster_pair()) {
        let m = merge_clusters(&a, &b).unwrap();
        prop_assert_eq!(m.precision_sum(), a.precision_sum() + b.precision_sum());
        prop_assert_eq!(m.weighted_sum(), a.weighted_sum() + b.weighted_sum());
        prop_assert_eq!(m.len(), a.len() + b.len());
        prop_assert_eq!(&merge_clusters(&b, &a).unwrap(), &m);
        prop_assert!(m.members().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn location_shift_leaves_lr_unchanged(
        xs in prop::collection::vec(metric_strategy(), 2..=8),
        shift in -10.0f64..10.0,
    ) {
        let build = |c: f64| -> Vec<ClusterStats> {
            xs.iter().enumerate()
                .map(|(i, &(e, s))| make_cluster(&GroupMetric::new(format!("g{i}"), e + c, s).unwrap()))
                .collect()
        };
        let (base, shifted) = (build(0.0), build(shift));
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                let l0 = lr_statistic(&base[i], &base[j]).unwrap();
                let l1 = lr_statistic(&shifted[i], &shifted[j]).unwrap();
                prop_assert!(close(l0, l1, 1e-10), "{} vs {}", l0, l1);
            }
        }
    }

    #[test]
    fn common_scale_leaves_lr_unchanged(
        xs in prop::collection::vec(metric_strategy(), 2..=8),
        scale in 0.01f64..100.0,
    ) {
        let build = |c: f64| -> Vec<ClusterStats> {
            xs.iter().enumerate()
                .map(|(i, &(e, s))| make_cluster(&GroupMetric::new(format!("g{i}"), e * c, s * c).unwrap()))
                .collect()
        };
        let (base, scaled) = (build(1.0), build(scale));
        for i in 0..xs.len() {
            for j in i + 1..xs.len() {
                let l0 = lr_statistic(&base[i], &base[j]).unwrap();
                let l1 = lr_statistic(&scaled[i], &scaled[j]).unwrap();
                prop_assert!(close(l0, l1, 1e-10), "{} vs {}", l0, l1);
            }
        }
    }

    #[test]
    fn pvalue_inverts_to_statistic(lr in 0.001f64..30.0) {
        let a = make_cluster(&GroupMetric::new("a", lr.sqrt(), 1.0 / 2f64.sqrt()).unwrap());
        let b = make_cluster(&GroupMetric::new("b", 0.0, 1.0 / 2f64.sqrt()).unwrap());
        let stat = lr_statistic(&a, &b).unwrap();
        let p = lr_pvalue(&a, &b).unwrap().value();
        let back = chi2_isf_1df(p).unwrap();
        prop_assert!(((back - stat) / stat).abs() <= 1e-8, "{} -> {} -> {}", stat, p, back);
    }

    #[test]
    fn pvalue_decreases_with_statistic(x in 0.0f64..60.0, dx in 1e-6f64..5.0) {
        let p0 = chi2_sf_1df(x).unwrap().value();
        let p1 = chi2_sf_1df(x + dx).unwrap().value();
        prop_assert!(p1 <= p0);
        prop_assert!((0.0..=1.0).contains(&p0));
    }

    #[test]
    fn chi2_is_two_sided_normal(x in 0.0f64..40.0) {
        let a = chi2_sf_1df(x).unwrap().value();
        let b = 2.0 * normal_sf(x.sqrt()).unwrap().value();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn welch_is_antisymmetric(
        n1 in 2usize..500, m1 in -5.0f64..5.0, v1 in 0.0f64..4.0,
        n2 in 2usize..500, m2 in -5.0f64..5.0, v2 in 1e-6f64..4.0,
    ) {
        let a = SampleSummary::new(n1, m1, v1);
        let b = SampleSummary::new(n2, m2, v2);
        let ab = welch_summary(GroupId::from("g"), &a, &b).unwrap();
        let ba = welch_summary(GroupId::from("g"), &b, &a).unwrap();
        prop_assert_eq!(ab.estimate(), -ba.estimate());
        prop_assert_eq!(ab.sd(), ba.sd());
    }
}
