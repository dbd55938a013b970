use mplab::ensemble::{moment_report, replica_seed, sample_matrix, EntryDistribution, MatrixSample};

fn laws() -> [EntryDistribution; 4] {
    [
        EntryDistribution::gaussian(),
        EntryDistribution::gaussian().with_truncation(2.0),
        EntryDistribution::rademacher(),
        EntryDistribution::heavy_tail(6.0).with_truncation(1.5),
    ]
}

#[test]
fn regeneration_is_bit_identical() {
    for law in laws() {
        let a = sample_matrix(24, law, 99).unwrap();
        let b = sample_matrix(24, law, 99).unwrap();
        let c = sample_matrix(24, law, 100).unwrap();
        assert!(a.entries == b.entries, "{law}");
        assert!(a.entries != c.entries, "{law}");
    }
}

#[test]
fn truncation_bound_holds() {
    for law in laws() {
        for n in [16, 64, 256] {
            let x = sample_matrix(n, law, 7).unwrap();
            let cap = law.truncation * (n as f64).powf(0.25);
            assert!(x.max_modulus() <= cap, "{law} N = {n}: {} > {cap}", x.max_modulus());
        }
    }
}

#[test]
fn pooled_components_are_standardized() {
    let law = EntryDistribution::gaussian().with_truncation(2.0);
    let mut values = Vec::with_capacity(4 * 512 * 512 * 2);
    for r in 0..4 {
        let x = sample_matrix(512, law, replica_seed(5, r)).unwrap();
        for j in 0..512 {
            for i in 0..512 {
                let z = x.raw(i, j);
                values.push(z.re);
                values.push(z.im);
            }
        }
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let fourth = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    let se_mean = (var / m).sqrt();
    let se_var = ((fourth - var * var) / m).sqrt();
    assert!(mean.abs() <= 4.0 * se_mean, "mean {mean} ± {se_mean}");
    assert!((var - 0.5).abs() <= 4.0 * se_var, "variance {var} ± {se_var}");
}

#[test]
fn moment_examples() {
    let g = moment_report(EntryDistribution::gaussian().with_truncation(1e6), 200_000, 3, 64).unwrap();
    assert!((g.fourth_moment - 2.0).abs() <= 5.0 * g.fourth_moment_stderr, "{g:?}");
    assert!(!g.variance_violation);

    let r = moment_report(EntryDistribution::rademacher(), 10_000, 3, 64).unwrap();
    assert!((r.fourth_moment - 1.0).abs() < 1e-12);
    assert!((r.second_moment - 1.0).abs() < 1e-12);

    for law in laws() {
        let rep = moment_report(law, 50_000, 11, 256).unwrap();
        assert!(!rep.variance_violation, "{law}: {rep:?}");
        assert!((rep.fourth_moment - rep.analytic_fourth_moment).abs() <= 5.0 * rep.fourth_moment_stderr + 1e-12, "{law}: {rep:?}");
    }
    assert!(moment_report(EntryDistribution::gaussian(), 100, 0, 64).is_err());
}

#[test]
fn invalid_requests_are_rejected() {
    assert!(sample_matrix(1, EntryDistribution::gaussian(), 0).is_err());
    assert!(sample_matrix(8, EntryDistribution::gaussian().with_truncation(-1.0), 0).is_err());
    assert!(sample_matrix(8, EntryDistribution::heavy_tail(3.0), 0).is_err());
}

#[test]
fn dump_round_trip() {
    let x = sample_matrix(12, EntryDistribution::heavy_tail(6.0).with_truncation(2.0), 8).unwrap();
    let mut buf = Vec::new();
    x.write_dump(&mut buf).unwrap();
    let y = MatrixSample::read_dump(buf.as_slice()).unwrap();
    assert!(x.entries == y.entries);
    assert_eq!((x.n, x.seed, x.distribution, x.scaled), (y.n, y.seed, y.distribution, y.scaled));
    buf[0] ^= 1;
    assert!(MatrixSample::read_dump(buf.as_slice()).is_err());
}
