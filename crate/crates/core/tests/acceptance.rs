//! End-to-end acceptance run. Every criterion prints one `PASS` or `FAIL`
//! line with its measured figures; the process exits non-zero when any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use mplab::analytics::{classical_location, mp_cdf, mp_stieltjes, DomainParams, SpectralPoint};
use mplab::counting::{counting_deviation, pleijel_count, pleijel_interval, pleijel_scan, rigidity_scan, ContourSpec, PointMass};
use mplab::ensemble::{moment_report, replica_seed, rng_from_seed, sample_matrix, EntryDistribution};
use mplab::experiment::{execute, random_removals, size_seed, EtaRule, ExitStatus, ExperimentConfig, ExperimentKind};
use mplab::local_law::{fluctuation_record, lambda_solutions, q_recursion_check, replica_spectra};
use mplab::moments::{inequality_ratio_scan, martingale_decomposition_check, CoefficientFamily, Inequality, RatioScanSettings};
use mplab::resolvent::{empirical_stieltjes, identity_suite, quadratic_forms, SpectrumSample};
use num_complex::Complex64;
use rand::Rng;

const MASTER_SEED: u64 = 20_240_601;
const SCALING_SIZES: [usize; 3] = [256, 512, 1024];
const LAW_REPLICAS: usize = 200;
const SCALING_REPLICAS: usize = 100;
/// `M` in `η₀ = M√E/N`.
const PLEIJEL_M: f64 = 1.0;

type Outcome = Result<String, String>;

fn gaussian() -> EntryDistribution {
    EntryDistribution::gaussian().with_truncation(2.0)
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn spread(xs: &[f64]) -> f64 {
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    hi / lo
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(outcome: Outcome, elapsed: Duration, limit: Duration) -> Outcome {
    let note = format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs());
    match outcome {
        Ok(d) if elapsed <= limit => Ok(format!("{d}; {note}")),
        Ok(d) => Err(format!("{d}; too slow: {note}")),
        Err(d) => Err(format!("{d}; {note}")),
    }
}

/// Gaussian spectra shared by the scaling criteria, `LAW_REPLICAS` per size.
struct SpectraCache {
    by_n: BTreeMap<usize, Vec<SpectrumSample>>,
}

impl SpectraCache {
    fn new() -> Self {
        Self { by_n: BTreeMap::new() }
    }

    fn get(&mut self, n: usize, replicas: usize) -> &[SpectrumSample] {
        let spectra = self.by_n.entry(n).or_insert_with(|| {
            replica_spectra(n, LAW_REPLICAS, gaussian(), size_seed(MASTER_SEED, n)).expect("spectra")
        });
        &spectra[..replicas]
    }
}

fn analytics_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let e = -1.0 + 7.0 * i as f64 / 9.0;
        for j in 0..10 {
            let eta = 10f64.powf(-3.0 + 3.0 * j as f64 / 9.0);
            let theta = Complex64::new(e, eta);
            let d = mp_stieltjes(SpectralPoint::new(e, eta)).map_err(|err| err.to_string())?;
            worst = worst.max((theta * d * (d + 1.0) + 1.0).norm());
        }
    }
    let cdf = (mp_cdf(4.0) - 1.0).abs();
    let loc = [10, 1000, 100_000]
        .iter()
        .map(|&n| (classical_location(n, n).unwrap() - 4.0).abs())
        .fold(0.0, f64::max);
    let outcome = check(
        worst <= 1e-12 && cdf <= 1e-10 && loc <= 1e-8,
        format!("max |θΔ(Δ+1)+1| = {worst:.2e}, |F(4)−1| = {cdf:.1e}, |γ_N−4| = {loc:.1e}"),
    );
    within_time(outcome, start.elapsed(), Duration::from_secs(1))
}

fn identity_suite_criterion() -> Outcome {
    let start = Instant::now();
    let laws = [
        gaussian(),
        EntryDistribution::rademacher(),
        EntryDistribution::heavy_tail(6.0).with_truncation(2.0),
    ];
    let mut rng = rng_from_seed(replica_seed(MASTER_SEED, 2));
    let mut worst_residual: f64 = 0.0;
    let mut worst_slack = f64::INFINITY;
    let mut checked = 0usize;
    for n in [8, 16, 32] {
        for (li, law) in laws.iter().enumerate() {
            let x = sample_matrix(n, *law, replica_seed(size_seed(MASTER_SEED, n), li as u64)).map_err(|e| e.to_string())?;
            for _ in 0..20 {
                let theta = SpectralPoint::new(rng.random_range(-1.0..6.0), rng.random_range(0.1..2.0));
                let (sets, k, l) = random_removals(&mut rng, n).map_err(|e| e.to_string())?;
                let rep = identity_suite(&x, theta, &sets, k, l).map_err(|e| e.to_string())?;
                worst_residual = worst_residual.max(rep.max_residual());
                worst_slack = worst_slack.min(rep.min_slack());
                let qf = quadratic_forms(&x, theta, &sets, k, l).map_err(|e| e.to_string())?;
                worst_residual = worst_residual
                    .max(qf.decomposition_residual)
                    .max(qf.k_factorization_residual)
                    .max(qf.curly_k_factorization_residual);
                let (_, q) = q_recursion_check(&x, theta, &sets, 2).map_err(|e| e.to_string())?;
                worst_slack = worst_slack.min(q.min_slack(2));
                worst_residual = worst_residual.max(q.max_decomposition_residual);
                checked += 1;
            }
        }
    }
    let outcome = check(
        worst_residual <= 1e-9 && worst_slack >= -1e-10,
        format!("{checked} cases, max residual {worst_residual:.2e}, min slack {worst_slack:.2e}"),
    );
    within_time(outcome, start.elapsed(), Duration::from_secs(60))
}

fn quadratic_master_check() -> Outcome {
    let start = Instant::now();
    let theta = SpectralPoint::new(2.0, 1.0);
    let (mut quad, mut vieta): (f64, f64) = (0.0, 0.0);
    for n in [32, 64, 128] {
        for r in 0..10 {
            let x = sample_matrix(n, gaussian(), replica_seed(size_seed(MASTER_SEED, n), r)).map_err(|e| e.to_string())?;
            let rec = fluctuation_record(&x, theta, &Default::default(), &DomainParams::default())
                .map_err(|e| e.to_string())?;
            quad = quad.max(rec.quad_residual);
            vieta = vieta.max(rec.vieta_sum_residual).max(rec.vieta_product_residual);
        }
    }
    let outcome = check(
        quad <= 1e-9 && vieta <= 1e-9,
        format!("max quadratic residual {quad:.2e}, max Vieta residual {vieta:.2e}"),
    );
    within_time(outcome, start.elapsed(), Duration::from_secs(120))
}

fn local_law_scaling(cache: &mut SpectraCache) -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut ok = true;
    for e in [2.0, -0.5] {
        let mut medians = Vec::new();
        for n in SCALING_SIZES {
            let theta = SpectralPoint::new(e, 20.0 / n as f64);
            let scaled: Vec<f64> = cache
                .get(n, LAW_REPLICAS)
                .iter()
                .map(|s| {
                    let dn = empirical_stieltjes(s, theta).unwrap();
                    n as f64 * theta.eta * lambda_solutions(dn, theta).unwrap().lambda.norm()
                })
                .collect();
            medians.push(median(&scaled));
        }
        let ratio = spread(&medians);
        ok &= ratio <= 2.0;
        lines.push(format!(
            "E = {e}: medians {} (ratio {ratio:.2})",
            medians.iter().map(|m| format!("{m:.3}")).collect::<Vec<_>>().join("/")
        ));
    }
    within_time(check(ok, lines.join("; ")), start.elapsed(), Duration::from_secs(1800))
}

fn pleijel_exactness() -> Outcome {
    let spectra = replica_spectra(128, 50, gaussian(), size_seed(MASTER_SEED, 128)).map_err(|e| e.to_string())?;
    let checks = pleijel_scan(&spectra, 2.0, PLEIJEL_M).map_err(|e| e.to_string())?;
    let within = checks.iter().filter(|c| c.error_in_units <= 0.5).count();
    let origin = PointMass { location: 0.0, weight: 1.0 };
    let far = PointMass { location: 5.0, weight: 1.0 };
    let count = ContourSpec::count(1.0, 1e-4);
    let point_errors = [
        (pleijel_count(&origin, &count).map_err(|e| e.to_string())?.estimate - 1.0).abs(),
        pleijel_count(&far, &count).map_err(|e| e.to_string())?.estimate.abs(),
        (pleijel_interval(&origin, &ContourSpec::interval(-1.0, 1.0, 1e-4)).map_err(|e| e.to_string())?.estimate - 1.0)
            .abs(),
    ];
    let point = point_errors.iter().copied().fold(0.0, f64::max);
    check(
        within * 10 >= checks.len() * 9 && point <= 1e-3,
        format!("{within}/{} replicas within 0.5/N, point-mass error {point:.1e}", checks.len()),
    )
}

fn counting_scaling(cache: &mut SpectraCache) -> Outcome {
    let grid: Vec<f64> = vec![0.001, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 3.9];
    let mut q95 = Vec::new();
    for n in [256, 1024] {
        let (_, summary) = counting_deviation(cache.get(n, SCALING_REPLICAS), &grid).map_err(|e| e.to_string())?;
        let v = summary
            .iter()
            .find(|r| r.stat == "sup_normalized" && r.quantile == 0.95)
            .map(|r| r.value)
            .ok_or("missing sup_normalized quantile")?;
        q95.push(v);
    }
    let ratio = spread(&q95);
    check(
        ratio <= 2.0,
        format!("95th percentiles {:.3}/{:.3} (ratio {ratio:.2})", q95[0], q95[1]),
    )
}

fn rigidity_scaling(cache: &mut SpectraCache) -> Outcome {
    let mut bulk = Vec::new();
    let mut edge = Vec::new();
    for n in SCALING_SIZES {
        let rep = rigidity_scan(cache.get(n, SCALING_REPLICAS)).map_err(|e| e.to_string())?;
        bulk.push(rep.bulk_quantile(0.95));
        edge.push(rep.smallest_median());
    }
    let (rb, re) = (spread(&bulk), spread(&edge));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join("/");
    check(
        rb <= 2.0 && re <= 2.0 && edge.iter().all(|v| v.is_finite()),
        format!("bulk q95 {} (ratio {rb:.2}), hard-edge median {} (ratio {re:.2})", fmt(&bulk), fmt(&edge)),
    )
}

fn factorial(m: u32) -> f64 {
    (1..=m).map(f64::from).product()
}

fn moment_harness() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let a = CoefficientFamily::RandomUnitNorm.matrix(32, MASTER_SEED).map_err(|e| e.to_string())?;
    let mart = martingale_decomposition_check(&a, gaussian(), 10_000, MASTER_SEED).map_err(|e| e.to_string())?;
    ok &= mart.max_decomposition_residual <= 1e-10;
    notes.push(format!("decomposition residual {:.1e}", mart.max_decomposition_residual));

    let orders = vec![2, 4, 6];
    let mut ratios: BTreeMap<(String, u32, String), Vec<f64>> = BTreeMap::new();
    for n in [64, 256] {
        let rows = inequality_ratio_scan(&RatioScanSettings {
            orders: orders.clone(),
            n,
            dist: gaussian(),
            families: CoefficientFamily::ALL.to_vec(),
            n_samples: 10_000,
            seed: replica_seed(MASTER_SEED, n as u64),
        })
        .map_err(|e| e.to_string())?;
        for r in rows {
            ratios.entry((r.inequality.tag().to_string(), r.p, r.family.clone())).or_default().push(r.ratio);
        }
    }
    let mut worst: f64 = 0.0;
    for v in ratios.values() {
        let finite = v.len() == 2 && v.iter().all(|r| r.is_finite() && *r > 0.0);
        ok &= finite;
        if finite {
            worst = worst.max(spread(v));
        }
    }
    ok &= worst <= 4.0;
    notes.push(format!("{} ratio series, worst max/min {worst:.2}", ratios.len()));

    let exact = inequality_ratio_scan(&RatioScanSettings {
        orders,
        n: 32,
        dist: EntryDistribution::gaussian().with_truncation(1e6),
        families: vec![CoefficientFamily::SingleCoordinate, CoefficientFamily::Uniform, CoefficientFamily::RandomUnitNorm],
        n_samples: 40_000,
        seed: MASTER_SEED,
    })
    .map_err(|e| e.to_string())?;
    let mut z: f64 = 0.0;
    for r in exact.iter().filter(|r| r.inequality == Inequality::Rosenthal) {
        z = z.max((r.lhs - factorial(r.p / 2)).abs() / r.lhs_stderr);
    }
    let m4 = moment_report(EntryDistribution::gaussian().with_truncation(1e6), 200_000, MASTER_SEED, 64)
        .map_err(|e| e.to_string())?;
    z = z.max((m4.fourth_moment - 2.0).abs() / m4.fourth_moment_stderr);
    ok &= z <= 5.0;
    notes.push(format!("closed-form moments within {z:.2} standard errors"));
    check(ok, notes.join(", "))
}

fn reproducibility() -> Outcome {
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0usize;
    for kind in ExperimentKind::ALL {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.ns = vec![16, 24];
        cfg.replicas = 20;
        cfg.seed = MASTER_SEED;
        cfg.distribution = gaussian();
        cfg.grid.energies = vec![0.5, 2.0];
        cfg.grid.eta = EtaRule::Fixed(0.3);
        if kind == ExperimentKind::Inequalities {
            cfg.params.insert("samples".into(), "10000".into());
        }
        let mut bodies = Vec::new();
        for (run, workers) in [1usize, 8, 1].into_iter().enumerate() {
            cfg.workers = workers;
            cfg.out_dir = base.path().join(format!("{}-{run}", kind.tag()));
            let out = execute(&cfg);
            if out.status != ExitStatus::Success {
                return Err(format!("{} run failed: {:?}", kind.tag(), out.message));
            }
            let mut csv: Vec<(String, Vec<u8>)> = out
                .files
                .iter()
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(p).unwrap()))
                .collect();
            csv.sort();
            bodies.push(csv);
        }
        if bodies[0].is_empty() || bodies[0] != bodies[1] || bodies[0] != bodies[2] {
            return Err(format!("{} output differs between runs", kind.tag()));
        }
        compared += bodies[0].len();
    }
    Ok(format!("{compared} CSV files identical across reruns with 1 and 8 workers"))
}

fn run(index: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &outcome {
        Ok(d) => println!("criterion {index} PASS {name}: {d} [{secs:.1}s]"),
        Err(d) => println!("criterion {index} FAIL {name}: {d} [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut cache = SpectraCache::new();
    let results = [
        run(1, "analytics exactness", analytics_exactness),
        run(2, "deterministic identity suite", identity_suite_criterion),
        run(3, "Λ-quadratic master check", quadratic_master_check),
        run(4, "local-law scaling", || local_law_scaling(&mut cache)),
        run(5, "Pleijel exactness", pleijel_exactness),
        run(6, "counting-function scaling", || counting_scaling(&mut cache)),
        run(7, "rigidity scaling", || rigidity_scaling(&mut cache)),
        run(8, "moment-inequality harness", moment_harness),
        run(9, "reproducibility", reproducibility),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
