use mplab::ensemble::EntryDistribution;
use mplab::linalg::CMat;
use mplab::moments::{
    inequality_ratio_scan, martingale_decomposition_check, CoefficientFamily, Inequality, RatioScanSettings,
};
use num_complex::Complex64;

fn untruncated_gaussian() -> EntryDistribution {
    EntryDistribution::gaussian().with_truncation(1e6)
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

#[test]
fn single_entry_martingale_has_zero_mean() {
    let mut a = CMat::zeros(3, 3);
    a[(1, 0)] = Complex64::new(1.0, 0.0);
    let rep = martingale_decomposition_check(&a, EntryDistribution::gaussian().with_truncation(2.0), 20_000, 3).unwrap();
    assert!(rep.max_decomposition_residual < 1e-14);
    assert!(rep.passes(5.0), "{rep:?}");
}

#[test]
fn random_coefficients_pass_martingale_checks() {
    let a = CoefficientFamily::RandomUnitNorm.matrix(16, 5).unwrap();
    let rep = martingale_decomposition_check(&a, EntryDistribution::rademacher(), 20_000, 8).unwrap();
    assert!(rep.passes(5.0), "{rep:?}");
    for r in &rep.conditional_ratio {
        assert!((r - 1.0).abs() < 0.05, "{rep:?}");
    }
}

#[test]
fn gaussian_linear_forms_match_factorial_moments() {
    let rows = inequality_ratio_scan(&RatioScanSettings {
        orders: vec![2, 4, 6],
        n: 32,
        dist: untruncated_gaussian(),
        families: vec![
            CoefficientFamily::SingleCoordinate,
            CoefficientFamily::Uniform,
            CoefficientFamily::RandomUnitNorm,
        ],
        n_samples: 40_000,
        seed: 17,
    })
    .unwrap();
    for r in rows.iter().filter(|r| r.inequality == Inequality::Rosenthal) {
        let exact = factorial(r.p / 2);
        assert!(
            (r.lhs - exact).abs() <= 5.0 * r.lhs_stderr,
            "{} p={} lhs={} ± {} exact={exact}",
            r.family,
            r.p,
            r.lhs,
            r.lhs_stderr
        );
    }
}

#[test]
fn ratios_are_finite_and_positive() {
    let rows = inequality_ratio_scan(&RatioScanSettings {
        orders: vec![2, 4],
        n: 16,
        dist: EntryDistribution::heavy_tail(6.0).with_truncation(2.0),
        families: CoefficientFamily::ALL.to_vec(),
        n_samples: 10_000,
        seed: 2,
    })
    .unwrap();
    assert_eq!(rows.len(), 3 * 2 + 4 * 2);
    assert!(rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0 && r.ratio < 1.0));
}

#[test]
fn odd_order_is_rejected() {
    let settings = RatioScanSettings {
        orders: vec![3],
        n: 8,
        dist: EntryDistribution::gaussian().with_truncation(2.0),
        families: vec![CoefficientFamily::Uniform],
        n_samples: 100,
        seed: 0,
    };
    assert!(inequality_ratio_scan(&settings).is_err());
}
