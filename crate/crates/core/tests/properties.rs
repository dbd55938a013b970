use mplab::analytics::{classical_location, mp_cdf, mp_density, mp_stieltjes, DomainParams, SpectralPoint};
use mplab::counting::{segment_quadrature, PointMass, StieltjesTransform};
use mplab::ensemble::{sample_matrix, EntryDistribution};
use mplab::linalg::CMat;
use mplab::local_law::fluctuation_record;
use mplab::moments::MartingaleDecomposition;
use mplab::resolvent::{build_resolvents, identity_suite, IndexSets};
use num_complex::Complex64;
use proptest::prelude::*;

fn law(which: u8) -> EntryDistribution {
    match which % 3 {
        0 => EntryDistribution::gaussian().with_truncation(2.0),
        1 => EntryDistribution::rademacher(),
        _ => EntryDistribution::heavy_tail(6.0).with_truncation(1.5),
    }
}

fn removals(n: usize, a: usize, b: usize, c: usize) -> IndexSets {
    let j1: Vec<usize> = [a % n, b % n].into_iter().take(c % 3).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let j2: Vec<usize> = [(a + 1) % n].into_iter().take(c % 2).collect();
    IndexSets::new(j1, j2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn stieltjes_is_herglotz(e in -10.0..10.0f64, eta in 1e-4..10.0f64) {
        let d = mp_stieltjes(SpectralPoint::new(e, eta)).unwrap();
        prop_assert!(d.im > 0.0);
    }

    #[test]
    fn stieltjes_solves_the_fixed_point(e in -5.0..10.0f64, eta in 1e-3..5.0f64) {
        let theta = Complex64::new(e, eta);
        let d = mp_stieltjes(SpectralPoint::new(e, eta)).unwrap();
        prop_assert!((theta * d * (d + 1.0) + 1.0).norm() <= 1e-12);
    }

    #[test]
    fn stieltjes_is_conjugate_symmetric(e in -5.0..10.0f64, eta in 1e-3..5.0f64) {
        let p = SpectralPoint::new(e, eta);
        let up = mp_stieltjes(p).unwrap();
        let down = mp_stieltjes(p.conj()).unwrap();
        prop_assert!((up.conj() - down).norm() <= 1e-14 * up.norm().max(1.0));
    }

    #[test]
    fn cdf_derivative_is_the_density(e in 0.05..3.95f64) {
        let h = 1e-5;
        let slope = (mp_cdf(e + h) - mp_cdf(e - h)) / (2.0 * h);
        let rho = mp_density(e, 1.0).unwrap();
        prop_assert!((slope - rho).abs() <= 1e-6 * rho.max(1.0), "{} vs {}", slope, rho);
    }

    #[test]
    fn classical_locations_invert_the_cdf(n in 2usize..5000, frac in 0.0..1.0f64) {
        let a = 1 + ((n - 1) as f64 * frac) as usize;
        let g = classical_location(a, n).unwrap();
        prop_assert!((0.0..=4.0).contains(&g));
        prop_assert!((mp_cdf(g) - a as f64 / n as f64).abs() <= 1e-10);
        if a > 1 {
            prop_assert!(classical_location(a - 1, n).unwrap() <= g);
        }
    }

    #[test]
    fn truncation_bound(seed in any::<u64>(), n in 2usize..48, which in any::<u8>()) {
        let l = law(which);
        let x = sample_matrix(n, l, seed).unwrap();
        prop_assert!(x.max_modulus() <= l.truncation * (n as f64).powf(0.25));
    }

    #[test]
    fn pole_segments_match_quadrature(
        s in -2.0..6.0f64,
        a in (-3.0..7.0f64, 0.1..3.0f64),
        b in (-3.0..7.0f64, 0.1..3.0f64),
        flip in any::<bool>(),
    ) {
        let sign = if flip { -1.0 } else { 1.0 };
        let za = Complex64::new(a.0, a.1 * sign);
        let zb = Complex64::new(b.0, b.1 * sign);
        let m = PointMass { location: s, weight: 1.0 };
        let exact = m.segment_integral(za, zb);
        let quad = segment_quadrature(&m, za, zb);
        prop_assert!((exact - quad).norm() <= 1e-8, "{} vs {}", exact, quad);
    }

    #[test]
    fn martingale_decomposition_is_exact(seed in any::<u64>(), n in 2usize..12) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |r: &mut rand_chacha::ChaCha8Rng| Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let a = CMat::from_fn(n, n, |i, j| if i == j { Complex64::new(0.0, 0.0) } else { draw(&mut rng) });
        let x: Vec<Complex64> = (0..n).map(|_| draw(&mut rng)).collect();
        let d = MartingaleDecomposition::new(&a, &x);
        prop_assert!(d.residual() <= 1e-13 * (n * n) as f64);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ward_identity_and_bounds(
        seed in any::<u64>(), n in 6usize..20, which in any::<u8>(),
        e in -1.0..6.0f64, eta in 0.1..2.0f64,
        a in any::<usize>(), b in any::<usize>(), c in any::<usize>(),
    ) {
        let x = sample_matrix(n, law(which), seed).unwrap();
        let theta = SpectralPoint::new(e, eta);
        let sets = removals(n, a, b, c);
        let keep: Vec<usize> = (0..n).filter(|i| !sets.removes_column(*i) && !sets.removes_row(*i)).collect();
        let k = keep[0];
        let l = keep[keep.len() - 1];
        let rep = identity_suite(&x, theta, &sets, k, l).unwrap();
        for name in ["ward-g", "ward-curly", "minor-g", "minor-curly", "trace-relation", "schur-g", "t-k-closed-form"] {
            let r = rep.get(name).and_then(|r| r.residual);
            prop_assert!(r.is_some_and(|v| v <= 1e-9), "{}: {:?}", name, r);
        }
        for name in ["ward-square-g", "t-k-bound", "offdiag-bound-g", "offdiag-bound-curly"] {
            let s = rep.get(name).and_then(|r| r.slack);
            prop_assert!(s.is_some_and(|v| v >= -1e-10), "{}: {:?}", name, s);
        }
        prop_assert!(rep.violations().next().is_none());
    }

    #[test]
    fn minor_identity(seed in any::<u64>(), n in 4usize..14, e in -1.0..6.0f64, eta in 0.1..2.0f64, k in any::<usize>()) {
        let x = sample_matrix(n, law(0), seed).unwrap();
        let theta = SpectralPoint::new(e, eta);
        let k = k % n;
        let full = build_resolvents(&x, theta, &IndexSets::empty()).unwrap();
        let minor = build_resolvents(&x, theta, &IndexSets::columns(vec![k]).unwrap()).unwrap();
        for i in (0..n).filter(|i| *i != k) {
            for j in (0..n).filter(|j| *j != k) {
                let rhs = minor.g_at(i, j) + full.g_at(i, k) * full.g_at(k, j) / full.g_at(k, k);
                prop_assert!((full.g_at(i, j) - rhs).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn vieta_relations(
        seed in any::<u64>(), n in 8usize..32, which in any::<u8>(),
        e in -1.0..6.0f64, eta in 0.1..2.0f64,
        a in any::<usize>(), b in any::<usize>(), c in any::<usize>(),
    ) {
        let x = sample_matrix(n, law(which), seed).unwrap();
        let sets = removals(n, a, b, c);
        let rec = fluctuation_record(&x, SpectralPoint::new(e, eta), &sets, &DomainParams::default()).unwrap();
        prop_assert!(rec.vieta_sum_residual <= 1e-9);
        prop_assert!(rec.vieta_product_residual <= 1e-9);
        prop_assert!(rec.quad_residual <= 1e-9);
    }
}
