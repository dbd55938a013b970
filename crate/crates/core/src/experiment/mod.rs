//! Experiment orchestration: configuration, a worker pool over
//! `(N, replica)` pairs, and CSV/JSON persistence.
//!
//! Every replica is a pure function of its derived seed, and results are
//! folded in replica order, so output bytes do not depend on the worker
//! count. The CSV schema of each table is fixed by its kind; see the
//! `HEADER_*` constants.

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use crate::analytics::{in_domain_s, mp_cdf, mp_density, mp_stieltjes, SpectralPoint};
use crate::counting::{counting_deviation, pleijel_count, rigidity_scan, ContourSpec, EmpiricalTransform};
use crate::ensemble::{replica_seed, rng_from_seed, sample_matrix};
use crate::error::{Error, Result};
use crate::local_law::{fluctuation_scan, q_recursion_check, replica_spectra, LawScanSettings};
use crate::moments::{inequality_ratio_scan, martingale_decomposition_check, CoefficientFamily, RatioScanSettings};
use crate::resolvent::{identity_suite, quadratic_forms, IdentityRecord, IndexSets, RESIDUAL_TOLERANCE, SLACK_TOLERANCE};

pub use config::{EtaRule, ExperimentConfig, ExperimentKind, GridSpec};
pub use output::{emit_results, GridAnnotation, ReplicaSeeds, RunSummary, Table};

use output::{int, labels, num, opt};

pub const HEADER_IDENTITIES: &[&str] =
    &["N", "dist", "replica", "E", "eta", "J1", "J2", "k", "l", "identity", "residual", "slack", "asserted"];
pub const HEADER_QF: &[&str] = &[
    "N",
    "dist",
    "replica",
    "E",
    "eta",
    "J1",
    "J2",
    "k",
    "l",
    "upsilon_re",
    "upsilon_im",
    "y_re",
    "y_im",
    "t_k_re",
    "t_k_im",
    "curly_t_k_re",
    "curly_t_k_im",
    "eps1_re",
    "eps1_im",
    "eps2_re",
    "eps2_im",
    "k_kl_re",
    "k_kl_im",
    "curly_k_kl_re",
    "curly_k_kl_im",
    "decomposition_residual",
    "k_factorization_residual",
    "curly_k_factorization_residual",
];
pub const HEADER_LAW_SCAN: &[&str] = &["E", "eta", "N", "dist", "replicas", "stat_name", "value", "stderr"];
pub const HEADER_Q_RECURSION: &[&str] = &[
    "N",
    "dist",
    "replica",
    "E",
    "eta",
    "level",
    "Q",
    "Q_hat",
    "Q1_re",
    "Q1_im",
    "Q2_re",
    "Q2_im",
    "Q3_re",
    "Q3_im",
    "decomposition_residual",
    "slack_diagonal",
    "slack_column_sums",
    "slack_row_sums",
];
pub const HEADER_Q_HOLDER: &[&str] = &["N", "dist", "replica", "E", "eta", "power", "lhs", "m1", "m2", "m3"];
pub const HEADER_PLEIJEL: &[&str] =
    &["N", "dist", "replica", "E", "eta0", "estimate", "direct", "remainder", "error_units"];
pub const HEADER_PLEIJEL_SUMMARY: &[&str] =
    &["N", "dist", "E", "eta0", "replicas", "fraction_within_half_unit", "max_error_units"];
pub const HEADER_COUNTING: &[&str] = &["N", "dist", "replica", "E", "n_N", "n_MP", "deviation", "normalized"];
pub const HEADER_COUNTING_SUMMARY: &[&str] = &["N", "E", "stat", "quantile", "value"];
pub const HEADER_RIGIDITY: &[&str] = &["N", "dist", "replica", "a", "lambda_a", "gamma_a", "stat_bulk", "stat_edge"];
pub const HEADER_RIGIDITY_SUMMARY: &[&str] = &["N", "dist", "replica", "max_bulk", "max_edge", "smallest_scaled"];
pub const HEADER_INEQUALITIES: &[&str] =
    &["inequality", "p", "N", "family", "dist", "ratio", "stderr", "lhs", "lhs_stderr", "rhs"];
pub const HEADER_MARTINGALE: &[&str] = &[
    "N",
    "family",
    "dist",
    "samples",
    "max_decomposition_residual",
    "max_mean_z",
    "max_orthogonality_z",
    "max_conditional_z",
];
pub const HEADER_MP_EVAL: &[&str] = &[
    "N",
    "E",
    "eta",
    "delta_re",
    "delta_im",
    "equation_residual",
    "density",
    "cdf",
    "in_domain_S",
    "scale_ratio",
];

/// Tolerance on `|θΔ(Δ+1)+1|` in `mp-eval`.
pub const MP_EQUATION_TOLERANCE: f64 = 1e-10;
/// Tolerance on the per-sample martingale decomposition.
pub const MARTINGALE_TOLERANCE: f64 = 1e-10;
/// Deepest recursion level whose bounds are asserted.
pub const ASSERTED_Q_LEVEL: usize = 2;

/// Tables and detected invariant violations of one run.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub tables: Vec<Table>,
    pub violations: Vec<serde_json::Value>,
    /// Constants in effect, including defaults.
    pub calibration: BTreeMap<String, f64>,
}

/// Process exit status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    Violation = 2,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Exit status for an error raised before or during a run.
    pub fn for_error(err: &Error) -> Self {
        match err {
            Error::Config { .. } | Error::InvalidArgument(_) | Error::Domain(_) | Error::DenseCapExceeded { .. } => {
                ExitStatus::Validation
            }
            _ => ExitStatus::Violation,
        }
    }
}

/// Result of [`execute`].
#[derive(Debug)]
pub struct Outcome {
    pub status: ExitStatus,
    pub files: Vec<PathBuf>,
    pub summary: Option<RunSummary>,
    /// Error or violation text for stderr.
    pub message: Option<String>,
}

/// Master seed of the replicas at size `n`.
pub fn size_seed(master: u64, n: usize) -> u64 {
    replica_seed(master, n as u64)
}

/// Grid points at every `N` with their domain flags.
pub fn annotate_grid(cfg: &ExperimentConfig) -> Vec<GridAnnotation> {
    cfg.ns
        .iter()
        .flat_map(|&n| {
            cfg.grid.points(n).into_iter().map(move |p| {
                let ratio = p.scale_ratio(n);
                GridAnnotation {
                    n,
                    e: p.e,
                    eta: p.eta,
                    in_domain_s: in_domain_s(p.e, p.eta, &cfg.domain),
                    scale_ratio: ratio,
                    above_threshold: ratio >= cfg.domain.m,
                }
            })
        })
        .collect()
}

/// Validates, runs and writes results; never panics on bad input.
pub fn execute(cfg: &ExperimentConfig) -> Outcome {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let fail = |status, err: Error| Outcome {
        status,
        files: Vec::new(),
        summary: None,
        message: Some(err.to_string()),
    };
    if let Err(e) = cfg.validate() {
        return fail(ExitStatus::Validation, e);
    }
    let report = match run_experiment(cfg) {
        Ok(r) => r,
        Err(e) => return fail(ExitStatus::for_error(&e), e),
    };
    let mut summary = RunSummary {
        config: cfg.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_seconds: started,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        calibration: report.calibration.clone(),
        grid: annotate_grid(cfg),
        seeds: cfg
            .ns
            .iter()
            .map(|&n| {
                let s = size_seed(cfg.seed, n);
                ReplicaSeeds {
                    n,
                    size_seed: s,
                    replica_seeds: (0..cfg.replicas as u64).map(|i| replica_seed(s, i)).collect(),
                }
            })
            .collect(),
        files: report.tables.iter().map(|t| t.file_name(cfg.seed)).collect(),
        violations: report.violations.clone(),
    };
    summary.files.push(summary.file_name());
    let files = match emit_results(&report.tables, &summary, &cfg.out_dir) {
        Ok(f) => f,
        Err(e) => return fail(ExitStatus::Violation, e),
    };
    let (status, message) = match report.violations.first() {
        None => (ExitStatus::Success, None),
        Some(v) => (
            ExitStatus::Violation,
            Some(format!(
                "{} invariant violation(s); first: {}",
                report.violations.len(),
                serde_json::to_string(v).unwrap_or_default()
            )),
        ),
    };
    Outcome {
        status,
        files,
        summary: Some(summary),
        message,
    }
}

/// Runs the configured experiment on a pool of `cfg.workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {} workers: {e}", cfg.workers)))?;
    pool.install(|| {
        let mut report = RunReport::default();
        for &n in &cfg.ns {
            match cfg.kind {
                ExperimentKind::Identities => run_identities(cfg, n, &mut report)?,
                ExperimentKind::Qf => run_qf(cfg, n, &mut report)?,
                ExperimentKind::LawScan => run_law_scan(cfg, n, &mut report)?,
                ExperimentKind::QRecursion => run_q_recursion(cfg, n, &mut report)?,
                ExperimentKind::Pleijel => run_pleijel(cfg, n, &mut report)?,
                ExperimentKind::Counting => run_counting(cfg, n, &mut report)?,
                ExperimentKind::Rigidity => run_rigidity(cfg, n, &mut report)?,
                ExperimentKind::Inequalities => run_inequalities(cfg, n, &mut report)?,
                ExperimentKind::MpEval => run_mp_eval(cfg, n, &mut report)?,
            }
        }
        Ok(report)
    })
}

/// Random removals of at most two columns and two rows, plus two distinct
/// surviving indices `k`, `l`.
pub fn random_removals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<(IndexSets, usize, usize)> {
    if n < 2 {
        return Err(Error::invalid(format!("N = {n} leaves no pair of indices")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let (k, l) = (perm[0], perm[1]);
    let rest = &mut perm[2..];
    let cap = rest.len().min(2);
    let s1 = rng.random_range(0..=cap);
    let j1 = rest[..s1].to_vec();
    rest.shuffle(rng);
    let s2 = rng.random_range(0..=cap);
    let j2 = rest[..s2].to_vec();
    Ok((IndexSets::new(j1, j2)?, k, l))
}

fn dist_tag(cfg: &ExperimentConfig) -> &'static str {
    cfg.distribution.tag()
}

fn q_records(
    n: usize,
    theta: SpectralPoint,
    sets: &IndexSets,
    x: &crate::ensemble::MatrixSample,
) -> Result<Vec<IdentityRecord>> {
    let (states, slacks) = q_recursion_check(x, theta, sets, ASSERTED_Q_LEVEL)?;
    let base = |name: String, residual: Option<f64>, slack: Option<f64>| IdentityRecord {
        identity: name,
        n,
        theta,
        j1: sets.j1().to_vec(),
        j2: sets.j2().to_vec(),
        residual,
        slack,
        asserted: true,
    };
    let mut out = Vec::new();
    for (nu, s) in states.iter().enumerate() {
        out.push(base(
            format!("q-decomposition-nu{nu}"),
            Some(s.decomposition_residual / s.q.abs().max(1.0)),
            None,
        ));
        out.push(base(format!("q-bound-diagonal-nu{nu}"), None, Some(slacks.diagonal[nu])));
        out.push(base(format!("q-bound-column-sums-nu{nu}"), None, Some(slacks.column_sums[nu])));
        out.push(base(format!("q-bound-row-sums-nu{nu}"), None, Some(slacks.row_sums[nu])));
    }
    if let Some(h) = slacks.holder {
        out.push(base("q-holder-chain".to_string(), None, Some(h.min_slack())));
    }
    Ok(out)
}

fn run_identities(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let seed = size_seed(cfg.seed, n);
    let thetas = cfg.grid.points(n);
    let per_replica: Vec<Vec<(IdentityRecord, usize, usize)>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, r as u64);
            let x = sample_matrix(n, cfg.distribution, s)?;
            let mut rng = rng_from_seed(replica_seed(s, u64::MAX));
            let mut out = Vec::new();
            for &theta in &thetas {
                let (sets, k, l) = random_removals(&mut rng, n)?;
                let suite = identity_suite(&x, theta, &sets, k, l)?;
                let extra = q_records(n, theta, &sets, &x)?;
                out.extend(suite.records.into_iter().chain(extra).map(|rec| (rec, k, l)));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(ExperimentKind::Identities.tag(), n, HEADER_IDENTITIES);
    for (r, recs) in per_replica.into_iter().enumerate() {
        for (rec, k, l) in recs {
            if rec.violates() {
                report.violations.push(json!({ "table": table.name, "replica": r, "record": rec }));
            }
            table.push(vec![
                int(n),
                dist_tag(cfg).to_string(),
                int(r),
                num(rec.theta.e),
                num(rec.theta.eta),
                labels(&rec.j1),
                labels(&rec.j2),
                int(k),
                int(l),
                rec.identity.clone(),
                opt(rec.residual),
                opt(rec.slack),
                rec.asserted.to_string(),
            ]);
        }
    }
    report.calibration.insert("residual_tolerance".into(), RESIDUAL_TOLERANCE);
    report.calibration.insert("slack_tolerance".into(), SLACK_TOLERANCE);
    report.tables.push(table);
    Ok(())
}

fn run_qf(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let seed = size_seed(cfg.seed, n);
    let thetas = cfg.grid.points(n);
    let per_replica: Vec<Vec<Vec<String>>> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_seed(seed, r as u64);
            let x = sample_matrix(n, cfg.distribution, s)?;
            let mut rng = rng_from_seed(replica_seed(s, u64::MAX));
            let mut rows = Vec::new();
            for &theta in &thetas {
                let (sets, k, l) = random_removals(&mut rng, n)?;
                let q = quadratic_forms(&x, theta, &sets, k, l)?;
                let mut row = vec![
                    int(n),
                    dist_tag(cfg).to_string(),
                    int(r),
                    num(theta.e),
                    num(theta.eta),
                    labels(sets.j1()),
                    labels(sets.j2()),
                    int(k),
                    int(l),
                ];
                for z in [q.upsilon, q.y, q.t_k, q.curly_t_k, q.eps1, q.eps2, q.k_kl, q.curly_k_kl] {
                    row.push(num(z.re));
                    row.push(num(z.im));
                }
                row.push(num(q.decomposition_residual));
                row.push(num(q.k_factorization_residual));
                row.push(num(q.curly_k_factorization_residual));
                rows.push(row);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let mut table = Table::new(ExperimentKind::Qf.tag(), n, HEADER_QF);
    let width = HEADER_QF.len();
    for row in per_replica.into_iter().flatten() {
        let worst = row[width - 3..].iter().map(|c| c.parse::<f64>().unwrap_or(f64::NAN)).fold(0.0, |a: f64, b| {
            if b.is_nan() {
                f64::INFINITY
            } else {
                a.max(b)
            }
        });
        if worst > RESIDUAL_TOLERANCE {
            let record: BTreeMap<&str, &String> = HEADER_QF.iter().copied().zip(row.iter()).collect();
            report.violations.push(json!({ "table": table.name, "record": record }));
        }
        table.push(row);
    }
    report.calibration.insert("residual_tolerance".into(), RESIDUAL_TOLERANCE);
    report.tables.push(table);
    Ok(())
}

fn run_law_scan(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let mut settings =
        LawScanSettings::new(n, cfg.replicas, cfg.distribution, size_seed(cfg.seed, n), cfg.grid.points(n));
    settings.domain = cfg.domain;
    settings.tail_k = cfg.param_f64("tail_k", settings.tail_k)?;
    settings.composite_c = cfg.calibration_or("composite_c", settings.composite_c);
    settings.dense_cap = cfg.param_usize("dense_cap", settings.dense_cap)?;
    settings.w_columns = cfg.param_usize("w_columns", settings.w_columns)?;
    settings.w_resamples = cfg.param_usize("w_resamples", settings.w_resamples)?;
    let rows = fluctuation_scan(&settings)?;
    let mut table = Table::new(ExperimentKind::LawScan.tag(), n, HEADER_LAW_SCAN);
    for r in rows {
        let bad = match r.stat_name.as_str() {
            "max_quad_residual" | "max_vieta_residual" => !(r.value <= RESIDUAL_TOLERANCE),
            _ => false,
        };
        if bad {
            report.violations.push(json!({ "table": table.name, "record": r }));
        }
        table.push(vec![
            num(r.e),
            num(r.eta),
            int(r.n),
            r.dist.clone(),
            int(r.replicas),
            r.stat_name.clone(),
            num(r.value),
            num(r.stderr),
        ]);
    }
    report.calibration.insert("tail_k".into(), settings.tail_k);
    report.calibration.insert("composite_c".into(), settings.composite_c);
    report.calibration.insert("c".into(), cfg.domain.c);
    report.calibration.insert("M".into(), cfg.domain.m);
    report.tables.push(table);
    Ok(())
}

type QRows = (Vec<Vec<String>>, Vec<Vec<String>>, Vec<serde_json::Value>);

fn run_q_recursion(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let levels = cfg.param_usize("levels", ASSERTED_Q_LEVEL)?;
    let seed = size_seed(cfg.seed, n);
    let thetas = cfg.grid.points(n);
    let dist = dist_tag(cfg);
    let per_replica: Vec<QRows> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let x = sample_matrix(n, cfg.distribution, replica_seed(seed, r as u64))?;
            let mut out: QRows = Default::default();
            for &theta in &thetas {
                let (states, slacks) = q_recursion_check(&x, theta, &IndexSets::empty(), levels)?;
                let lead = || vec![int(n), dist.to_string(), int(r), num(theta.e), num(theta.eta)];
                for (nu, s) in states.iter().enumerate() {
                    let mut row = lead();
                    row.extend([
                        int(nu),
                        num(s.q),
                        num(s.q_hat),
                        num(s.q1.re),
                        num(s.q1.im),
                        num(s.q2.re),
                        num(s.q2.im),
                        num(s.q3.re),
                        num(s.q3.im),
                        num(s.decomposition_residual),
                        num(slacks.diagonal[nu]),
                        num(slacks.column_sums[nu]),
                        num(slacks.row_sums[nu]),
                    ]);
                    let rel = s.decomposition_residual / s.q.abs().max(1.0);
                    let slack = slacks.diagonal[nu].min(slacks.column_sums[nu]).min(slacks.row_sums[nu]);
                    if !(rel <= RESIDUAL_TOLERANCE) || (nu <= ASSERTED_Q_LEVEL && !(slack >= SLACK_TOLERANCE)) {
                        let record: BTreeMap<&str, &String> = HEADER_Q_RECURSION.iter().copied().zip(row.iter()).collect();
                        out.2.push(json!({ "table": "q-recursion", "record": record }));
                    }
                    out.0.push(row);
                }
                if let Some(h) = slacks.holder {
                    let mut row = lead();
                    row.extend([num(h.power), num(h.lhs), num(h.m1), num(h.m2), num(h.m3)]);
                    if !(h.min_slack() >= SLACK_TOLERANCE) {
                        let record: BTreeMap<&str, &String> = HEADER_Q_HOLDER.iter().copied().zip(row.iter()).collect();
                        out.2.push(json!({ "table": "q-recursion-holder", "record": record }));
                    }
                    out.1.push(row);
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut levels_t = Table::new(ExperimentKind::QRecursion.tag(), n, HEADER_Q_RECURSION);
    let mut holder_t = Table::new("q-recursion-holder", n, HEADER_Q_HOLDER);
    for (a, b, v) in per_replica {
        a.into_iter().for_each(|row| levels_t.push(row));
        b.into_iter().for_each(|row| holder_t.push(row));
        report.violations.extend(v);
    }
    report.tables.push(levels_t);
    if !holder_t.rows.is_empty() {
        report.tables.push(holder_t);
    }
    Ok(())
}

fn run_pleijel(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let spectra = replica_spectra(n, cfg.replicas, cfg.distribution, size_seed(cfg.seed, n))?;
    let anchor = cfg.param_f64("left_anchor", crate::counting::DEFAULT_LEFT_ANCHOR)?;
    let height = cfg.param_f64("height", crate::counting::DEFAULT_HEIGHT)?;
    let dist = dist_tag(cfg);
    let mut table = Table::new(ExperimentKind::Pleijel.tag(), n, HEADER_PLEIJEL);
    let mut summary = Table::new("pleijel-summary", n, HEADER_PLEIJEL_SUMMARY);
    for &e in &cfg.grid.energies {
        let eta0 = cfg.grid.eta.eta(e, n);
        let contour = ContourSpec::count(e, eta0).with_left_anchor(anchor).with_height(height);
        contour.validate()?;
        let checks: Vec<(f64, f64, f64)> = spectra
            .par_iter()
            .map(|s| {
                let est = pleijel_count(&EmpiricalTransform::new(s), &contour)?;
                Ok((est.estimate, s.counting_function(e), est.remainder))
            })
            .collect::<Result<_>>()?;
        let mut within = 0usize;
        let mut worst = 0.0_f64;
        for (r, (estimate, direct, remainder)) in checks.into_iter().enumerate() {
            let units = (estimate - direct).abs() * n as f64;
            if units <= 0.5 {
                within += 1;
            }
            worst = worst.max(units);
            table.push(vec![
                int(n),
                dist.to_string(),
                int(r),
                num(e),
                num(eta0),
                num(estimate),
                num(direct),
                num(remainder),
                num(units),
            ]);
        }
        summary.push(vec![
            int(n),
            dist.to_string(),
            num(e),
            num(eta0),
            int(spectra.len()),
            num(within as f64 / spectra.len() as f64),
            num(worst),
        ]);
    }
    report.calibration.insert("left_anchor".into(), anchor);
    report.calibration.insert("height".into(), height);
    report.tables.push(table);
    report.tables.push(summary);
    Ok(())
}

fn run_counting(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let spectra = replica_spectra(n, cfg.replicas, cfg.distribution, size_seed(cfg.seed, n))?;
    let (rows, summary_rows) = counting_deviation(&spectra, &cfg.grid.energies)?;
    let dist = dist_tag(cfg);
    let mut table = Table::new(ExperimentKind::Counting.tag(), n, HEADER_COUNTING);
    for r in rows {
        table.push(vec![
            int(r.n),
            dist.to_string(),
            int(r.replica),
            num(r.e),
            num(r.n_empirical),
            num(r.n_mp),
            num(r.deviation),
            num(r.normalized),
        ]);
    }
    let mut summary = Table::new("counting-summary", n, HEADER_COUNTING_SUMMARY);
    for q in summary_rows {
        summary.push(vec![int(q.n), num(q.e), q.stat.clone(), num(q.quantile), num(q.value)]);
    }
    report.tables.push(table);
    report.tables.push(summary);
    Ok(())
}

fn run_rigidity(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let spectra = replica_spectra(n, cfg.replicas, cfg.distribution, size_seed(cfg.seed, n))?;
    let rep = rigidity_scan(&spectra)?;
    let dist = dist_tag(cfg);
    let mut table = Table::new(ExperimentKind::Rigidity.tag(), n, HEADER_RIGIDITY);
    for r in &rep.rows {
        table.push(vec![
            int(r.n),
            dist.to_string(),
            int(r.replica),
            int(r.a),
            num(r.lambda_a),
            num(r.gamma_a),
            num(r.stat_bulk),
            opt(r.stat_edge),
        ]);
    }
    let mut summary = Table::new("rigidity-summary", n, HEADER_RIGIDITY_SUMMARY);
    for s in &rep.summaries {
        summary.push(vec![
            int(n),
            dist.to_string(),
            int(s.replica),
            num(s.max_bulk),
            num(s.max_edge),
            num(s.smallest_scaled),
        ]);
    }
    report.tables.push(table);
    report.tables.push(summary);
    Ok(())
}

fn parse_families(cfg: &ExperimentConfig) -> Result<Vec<CoefficientFamily>> {
    match cfg.params.get("families") {
        None => Ok(CoefficientFamily::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                CoefficientFamily::ALL
                    .into_iter()
                    .find(|f| f.tag() == s)
                    .ok_or_else(|| Error::invalid(format!("params.families: unknown family '{s}'")))
            })
            .collect(),
    }
}

fn run_inequalities(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let seed = size_seed(cfg.seed, n);
    let families = parse_families(cfg)?;
    let n_samples = cfg.param_usize("samples", crate::moments::MIN_SAMPLES)?;
    let settings = RatioScanSettings {
        orders: cfg.param_list_u32("orders", &[2, 4, 6])?,
        n,
        dist: cfg.distribution,
        families: families.clone(),
        n_samples,
        seed,
    };
    let rows = inequality_ratio_scan(&settings)?;
    let dist = dist_tag(cfg);
    let mut table = Table::new(ExperimentKind::Inequalities.tag(), n, HEADER_INEQUALITIES);
    for r in rows {
        table.push(vec![
            r.inequality.tag().to_string(),
            int(r.p),
            int(r.n),
            r.family.clone(),
            r.dist.clone(),
            num(r.ratio),
            num(r.stderr),
            num(r.lhs),
            num(r.lhs_stderr),
            num(r.rhs),
        ]);
    }
    let mut mart = Table::new("inequalities-martingale", n, HEADER_MARTINGALE);
    for (i, fam) in families.iter().enumerate() {
        let a = fam.matrix(n, replica_seed(seed, i as u64))?;
        let rep = martingale_decomposition_check(&a, cfg.distribution, n_samples, replica_seed(seed, 1000 + i as u64))?;
        let max_cond = rep.conditional_z.iter().copied().fold(0.0, f64::max);
        let row = vec![
            int(n),
            fam.tag().to_string(),
            dist.to_string(),
            int(rep.samples),
            num(rep.max_decomposition_residual),
            num(rep.max_mean_z),
            num(rep.max_orthogonality_z),
            num(max_cond),
        ];
        if !(rep.max_decomposition_residual <= MARTINGALE_TOLERANCE) {
            report.violations.push(json!({ "table": mart.name, "family": fam.tag(), "record": rep }));
        }
        mart.push(row);
    }
    report.calibration.insert("samples".into(), n_samples as f64);
    report.calibration.insert("martingale_tolerance".into(), MARTINGALE_TOLERANCE);
    report.tables.push(table);
    report.tables.push(mart);
    Ok(())
}

fn run_mp_eval(cfg: &ExperimentConfig, n: usize, report: &mut RunReport) -> Result<()> {
    let tolerance = cfg.calibration_or("equation_tolerance", MP_EQUATION_TOLERANCE);
    let mut table = Table::new(ExperimentKind::MpEval.tag(), n, HEADER_MP_EVAL);
    for p in cfg.grid.points(n) {
        let delta = mp_stieltjes(p)?;
        let theta = p.theta();
        let residual = (theta * delta * (delta + 1.0) + 1.0).norm();
        let density = mp_density(p.e, 1.0)?;
        let row = vec![
            int(n),
            num(p.e),
            num(p.eta),
            num(delta.re),
            num(delta.im),
            num(residual),
            num(density),
            num(mp_cdf(p.e)),
            in_domain_s(p.e, p.eta, &cfg.domain).to_string(),
            num(p.scale_ratio(n)),
        ];
        if !(residual <= tolerance) {
            let record: BTreeMap<&str, &String> = HEADER_MP_EVAL.iter().copied().zip(row.iter()).collect();
            report.violations.push(json!({ "table": table.name, "record": record }));
        }
        table.push(row);
    }
    report.calibration.insert("equation_tolerance".into(), tolerance);
    report.tables.push(table);
    Ok(())
}
