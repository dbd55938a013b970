//! The fluctuation `Λ = Δ_N − Δ`, the error term `R`, the quadratic relation
//! tying them together, the `Q_ν` recursion and Monte-Carlo scans of `Λ`.
//!
//! With `J1` columns removed, summing the Schur formula for `G_kk` over the
//! surviving columns gives
//!
//! ```text
//! θΔΛ² + (θΔ² − 1)Λ + θΔR − |J1|Δ/N = 0,
//! ```
//!
//! so for `J1 = ∅` the two roots satisfy `Λ + Λ̃ = −(2Δ + 1)` and `ΛΛ̃ = R`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{in_domain_s, mp_stieltjes, DomainParams, SpectralPoint};
use crate::ensemble::{replica_seed, rng_from_seed, sample_matrix, EntryDistribution, MatrixSample};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::resolvent::{
    build_resolvents, column_vector, compute_spectrum, empirical_stieltjes, minor_sweep_from, resolvent_curly,
    IndexSets, MinorTerms, ResolventPair, SpectrumSample, DEFAULT_DENSE_CAP,
};
use crate::stats::{self, Estimate};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `Λ`, the second root `Λ̃ = −Λ − 2Δ − 1`, and `Δ` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPair {
    pub lambda: Complex64,
    pub lambda_tilde: Complex64,
    pub delta: Complex64,
}

pub fn lambda_solutions(delta_n: Complex64, theta: SpectralPoint) -> Result<LambdaPair> {
    if theta.eta == 0.0 && theta.e >= 0.0 {
        return Err(Error::domain(format!(
            "Λ needs η ≠ 0 or E < 0, got E = {}",
            theta.e
        )));
    }
    let delta = mp_stieltjes(theta)?;
    let lambda = delta_n - delta;
    Ok(LambdaPair {
        lambda,
        lambda_tilde: -lambda - 2.0 * delta - 1.0,
        delta,
    })
}

/// `|θΔΛ² + (θΔ² − 1)Λ + θΔR − fΔ|` with `f = |J1|/N`.
pub fn quadratic_residual(
    theta: SpectralPoint,
    delta: Complex64,
    lambda: Complex64,
    r: Complex64,
    removed_fraction: f64,
) -> f64 {
    let z = theta.theta();
    let td = z * delta;
    (td * lambda * lambda + (td * delta - 1.0) * lambda + td * r - removed_fraction * delta).norm()
}

/// `R = N⁻¹ Σ_k G_kk (T_k + Υ_k)` with its summands.
#[derive(Debug, Clone, PartialEq)]
pub struct RReport {
    pub r: Complex64,
    pub delta_n: Complex64,
    /// `(k, G_kk(T_k + Υ_k)/N)` for every surviving column.
    pub summands: Vec<(usize, Complex64)>,
    pub terms: Vec<MinorTerms>,
}

pub fn compute_r(x: &MatrixSample, theta: SpectralPoint, sets: &IndexSets) -> Result<RReport> {
    theta.require_off_axis()?;
    let pair = build_resolvents(x, theta, sets)?;
    Ok(r_from_pair(x, &pair))
}

pub fn r_from_pair(x: &MatrixSample, pair: &ResolventPair) -> RReport {
    let nf = pair.n as f64;
    let terms = minor_sweep_from(x, pair);
    let summands: Vec<(usize, Complex64)> = terms.iter().map(|t| (t.k, t.g_kk * (t.t_k + t.upsilon) / nf)).collect();
    RReport {
        r: summands.iter().map(|s| s.1).sum(),
        delta_n: pair.delta_n(),
        summands,
        terms,
    }
}

/// One realization's `Λ`, `Λ̃`, `R` and consistency residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluctuationRecord {
    pub theta: SpectralPoint,
    pub lambda_n: Complex64,
    pub lambda_tilde: Complex64,
    pub delta: Complex64,
    pub r: Complex64,
    pub quad_residual: f64,
    /// `|Λ + Λ̃ + 2Δ + 1|`.
    pub vieta_sum_residual: f64,
    /// `|ΛΛ̃ − R + |J1|/(Nθ)|`.
    pub vieta_product_residual: f64,
    pub lambda_composite: f64,
    pub in_domain: bool,
}

pub fn fluctuation_record(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
    domain: &DomainParams,
) -> Result<FluctuationRecord> {
    let rep = compute_r(x, theta, sets)?;
    record_from_r(theta, &rep, sets.j1().len(), x.n, domain)
}

fn record_from_r(
    theta: SpectralPoint,
    rep: &RReport,
    removed: usize,
    n: usize,
    domain: &DomainParams,
) -> Result<FluctuationRecord> {
    let lp = lambda_solutions(rep.delta_n, theta)?;
    let f = removed as f64 / n as f64;
    let z = theta.theta();
    let in_domain = in_domain_s(theta.e, theta.eta, domain);
    Ok(FluctuationRecord {
        theta,
        lambda_n: lp.lambda,
        lambda_tilde: lp.lambda_tilde,
        delta: lp.delta,
        r: rep.r,
        quad_residual: quadratic_residual(theta, lp.delta, lp.lambda, rep.r, f),
        vieta_sum_residual: (lp.lambda + lp.lambda_tilde + 2.0 * lp.delta + 1.0).norm(),
        vieta_product_residual: (lp.lambda * lp.lambda_tilde - rep.r + f / z).norm(),
        lambda_composite: composite_value(lp.lambda, lp.lambda_tilde, in_domain),
        in_domain,
    })
}

fn composite_value(lambda: Complex64, lambda_tilde: Complex64, in_domain: bool) -> f64 {
    let first = if in_domain { lambda.norm() } else { 0.0 };
    first.max(lambda.norm().min(lambda_tilde.norm())).max(lambda.im.abs())
}

/// `λ` together with the bound `C·min{|R|/|Δ + 1/2|, √|R|}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeReport {
    pub lambda: f64,
    pub bound: f64,
    pub slack: f64,
}

/// `λ = max{|Λ|·1[θ ∈ S], min{|Λ|, |Λ̃|}, |Im Λ|}` and its bound with
/// calibration constant `c`.
pub fn lambda_composite(record: &FluctuationRecord, c: f64) -> CompositeReport {
    let lambda = composite_value(record.lambda_n, record.lambda_tilde, record.in_domain);
    let r = record.r.norm();
    let bound = c * (r / (record.delta + 0.5).norm()).min(r.sqrt());
    CompositeReport {
        lambda,
        bound,
        slack: bound - lambda,
    }
}

/// One level of the `Q_ν` recursion.
#[derive(Debug, Clone)]
pub struct QRecursionState {
    pub level: usize,
    pub a: CMat,
    pub q: f64,
    pub q_hat: f64,
    pub q1: Complex64,
    pub q2: Complex64,
    pub q3: Complex64,
    /// `|Q_ν − Q_ν1 − Q_ν2 − Q_ν3|`.
    pub decomposition_residual: f64,
}

/// Terms of the Hölder chain at level zero with power `p`:
/// `lhs ≤ m1 ≤ m2 ≤ m3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderChain {
    pub power: f64,
    pub lhs: f64,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
}

impl HolderChain {
    /// Smallest relative gap along the chain; negative on a violation.
    pub fn min_slack(&self) -> f64 {
        let gap = |a: f64, b: f64| (b - a) / b.abs().max(f64::MIN_POSITIVE);
        gap(self.lhs, self.m1).min(gap(self.m1, self.m2)).min(gap(self.m2, self.m3))
    }
}

/// Per-level slacks of `max{|a^{(ν+1)}_rr|, Σ_j |a^{(ν)}_jr|²} ≤ A^{2^ν − 1} B_r`,
/// minimized over `r`, with `A = Im Tr 𝒢/(Nη)` and `B_r = Im 𝒢_rr/(Nη)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSlackReport {
    pub diagonal: Vec<f64>,
    pub column_sums: Vec<f64>,
    pub row_sums: Vec<f64>,
    pub holder: Option<HolderChain>,
    pub max_decomposition_residual: f64,
}

impl QSlackReport {
    /// Minimum bound slack over levels `0..=max_level`.
    pub fn min_slack(&self, max_level: usize) -> f64 {
        [&self.diagonal, &self.column_sums, &self.row_sums]
            .iter()
            .flat_map(|v| v.iter().take(max_level + 1))
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `a^{(ν+1)}_rl = Σ_{j > max(r,l)} a_rj conj(a_lj)`.
pub fn next_coefficients(a: &CMat) -> CMat {
    let m = a.nrows();
    let mut out = CMat::zeros(m, m);
    for r in 0..m {
        for l in 0..m {
            let mut acc = ZERO;
            for j in r.max(l) + 1..m {
                acc += a[(r, j)] * a[(l, j)].conj();
            }
            out[(r, l)] = acc;
        }
    }
    out
}

fn q_value(a: &CMat, x: &[Complex64], transposed: bool) -> f64 {
    let m = a.nrows();
    let mut total = 0.0;
    for j in 0..m {
        let mut inner = ZERO;
        for k in 0..j {
            let coef = if transposed { a[(j, k)] } else { a[(k, j)] };
            inner += x[k] * coef;
        }
        total += inner.norm_sqr();
    }
    total
}

/// Builds `a^{(ν)}` for `ν = 0..=levels + 1` from `𝒢 = 𝒢^{(J1 ∪ {k})}_{(J2)}`
/// with `k` the first surviving column and `x = x^k`, and checks the
/// decomposition and deterministic bounds at every level.
pub fn q_recursion_check(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
    levels: usize,
) -> Result<(Vec<QRecursionState>, QSlackReport)> {
    theta.require_off_axis()?;
    if levels > 4 {
        return Err(Error::invalid(format!("recursion depth {levels} exceeds 4")));
    }
    sets.check(x.n)?;
    let k = (0..x.n)
        .find(|k| !sets.removes_column(*k))
        .ok_or_else(|| Error::invalid("no surviving column"))?;
    let minor = sets.with_column(k);
    minor.check(x.n)?;
    let (curly, rows) = resolvent_curly(x, theta, &minor)?;
    let v = column_vector(x, k, &rows);
    Ok(q_recursion_from(&curly, &v, x.n, theta.eta, levels))
}

/// The recursion for an explicit resolvent `curly` and vector `v`.
pub fn q_recursion_from(
    curly: &CMat,
    v: &[Complex64],
    n: usize,
    eta: f64,
    levels: usize,
) -> (Vec<QRecursionState>, QSlackReport) {
    let nf = n as f64;
    let m = curly.nrows();
    let inv_sqrt = 1.0 / nf.sqrt();
    let mut chain = vec![CMat::from_fn(m, m, |i, j| curly[(i, j)] * inv_sqrt)];
    for _ in 0..=levels {
        let next = next_coefficients(chain.last().expect("non-empty"));
        chain.push(next);
    }
    let big_a = linalg::trace(curly).im / (nf * eta);
    let b: Vec<f64> = (0..m).map(|r| curly[(r, r)].im / (nf * eta)).collect();

    let mut states = Vec::with_capacity(levels + 1);
    let mut report = QSlackReport {
        diagonal: Vec::new(),
        column_sums: Vec::new(),
        row_sums: Vec::new(),
        holder: None,
        max_decomposition_residual: 0.0,
    };
    for nu in 0..=levels {
        let a = &chain[nu];
        let a1 = &chain[nu + 1];
        let q = q_value(a, v, false);
        let q_hat = q_value(a, v, true);
        let mut q1 = ZERO;
        let mut q2 = ZERO;
        let mut q3 = ZERO;
        for l in 0..m {
            q1 += a1[(l, l)];
            q2 += (v[l].norm_sqr() - 1.0) * a1[(l, l)];
            for j in 0..m {
                if j != l {
                    q3 += v[l] * v[j].conj() * a1[(l, j)];
                }
            }
        }
        let decomposition_residual = (Complex64::new(q, 0.0) - q1 - q2 - q3).norm();
        report.max_decomposition_residual = report.max_decomposition_residual.max(decomposition_residual);

        let power = big_a.powi((1_i32 << nu) - 1);
        let (mut d, mut c, mut rw) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
        for r in 0..m {
            let bound = power * b[r];
            let col: f64 = (0..m).map(|j| a[(j, r)].norm_sqr()).sum();
            let row: f64 = (0..m).map(|j| a[(r, j)].norm_sqr()).sum();
            d = d.min(bound - a1[(r, r)].norm());
            c = c.min(bound - col);
            rw = rw.min(bound - row);
        }
        report.diagonal.push(d);
        report.column_sums.push(c);
        report.row_sums.push(rw);

        states.push(QRecursionState {
            level: nu,
            a: a.clone(),
            q,
            q_hat,
            q1,
            q2,
            q3,
            decomposition_residual,
        });
    }

    if levels >= 1 {
        let p = (1_u32 << levels) as f64;
        let a0 = &chain[0];
        let a1 = &chain[1];
        let s: Vec<f64> = (0..m).map(|r| (0..m).map(|l| a0[(r, l)].norm_sqr()).sum()).collect();
        let mut lhs = 0.0;
        let mut m1 = 0.0;
        for j in 0..m {
            for r in 0..m {
                if r != j {
                    lhs += a1[(r, j)].norm().powf(p);
                    m1 += (s[r] * s[j]).powf(p / 2.0);
                }
            }
        }
        let half: f64 = s.iter().map(|v| v.powf(p / 2.0)).sum::<f64>() / nf;
        let full: f64 = s.iter().map(|v| v.powf(p)).sum::<f64>() / nf;
        report.holder = Some(HolderChain {
            power: p,
            lhs: lhs / (nf * nf),
            m1: m1 / (nf * nf),
            m2: half * half,
            m3: full,
        });
    }
    (states, report)
}

/// `ℰ_q = 1/(N^q|θ|^{q/2}) + max{([Im(|θ|Δ)]^q + E|θΛ|^q)/(Nη)^q, |θ|^q/(Nη)^{2q}}`.
pub fn control_parameter(q: f64, theta: SpectralPoint, n: usize, delta: Complex64, moment_theta_lambda: f64) -> f64 {
    let nf = n as f64;
    let abs_theta = theta.theta().norm();
    let neta = nf * theta.eta.abs();
    let first = 1.0 / (nf.powf(q) * abs_theta.powf(q / 2.0));
    let im = (abs_theta * delta).im;
    let a = (im.powf(q) + moment_theta_lambda) / neta.powf(q);
    let b = abs_theta.powf(q) / neta.powf(2.0 * q);
    first + a.max(b)
}

/// One row of a scan table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "E")]
    pub e: f64,
    pub eta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub dist: String,
    pub replicas: usize,
    pub stat_name: String,
    pub value: f64,
    pub stderr: f64,
}

/// Moment orders of the `|√θΛ|^q` scan.
pub const MOMENT_ORDERS: [u32; 3] = [1, 2, 4];

/// Inputs of [`fluctuation_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct LawScanSettings {
    pub n: usize,
    pub replicas: usize,
    pub dist: EntryDistribution,
    pub seed: u64,
    pub thetas: Vec<SpectralPoint>,
    /// Threshold `K` of the tail probability `P(Nη|Λ| ≥ K)`.
    pub tail_k: f64,
    pub domain: DomainParams,
    /// Constant `C` of the composite bound.
    pub composite_c: f64,
    /// Resolvent diagnostics are added when `n` is at most this cap.
    pub dense_cap: usize,
    /// Columns per realization for which `E_k W_k` is estimated.
    pub w_columns: usize,
    /// Fresh columns drawn per estimate of `E_k W_k`.
    pub w_resamples: usize,
}

impl LawScanSettings {
    pub fn new(n: usize, replicas: usize, dist: EntryDistribution, seed: u64, thetas: Vec<SpectralPoint>) -> Self {
        Self {
            n,
            replicas,
            dist,
            seed,
            thetas,
            tail_k: 5.0,
            domain: DomainParams::default(),
            composite_c: 4.0,
            dense_cap: 0,
            w_columns: 4,
            w_resamples: 16,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::invalid("empty θ grid"));
        }
        if self.replicas < 20 {
            return Err(Error::invalid(format!("scan needs at least 20 replicas, got {}", self.replicas)));
        }
        if self.n < 2 {
            return Err(Error::invalid(format!("N = {} is too small", self.n)));
        }
        self.dist.validate()?;
        for t in &self.thetas {
            t.require_off_axis()?;
        }
        Ok(())
    }
}

/// Spectra of `replicas` independent realizations, in replica order.
pub fn replica_spectra(n: usize, replicas: usize, dist: EntryDistribution, seed: u64) -> Result<Vec<SpectrumSample>> {
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let x = sample_matrix(n, dist, replica_seed(seed, i as u64))?;
            compute_spectrum(&x, &IndexSets::empty())
        })
        .collect()
}

/// Scan statistics at one θ from per-replica values of `Λ`.
pub fn lambda_rows(
    theta: SpectralPoint,
    n: usize,
    dist: &str,
    lambdas: &[Complex64],
    tail_k: f64,
    domain: &DomainParams,
) -> Result<Vec<ScanRow>> {
    let delta = mp_stieltjes(theta)?;
    let nf = n as f64;
    let neta = nf * theta.eta.abs();
    let abs: Vec<f64> = lambdas.iter().map(|l| neta * l.norm()).collect();
    let im: Vec<f64> = lambdas.iter().map(|l| neta * l.im.abs()).collect();
    let mut rows = Vec::new();
    let mut push = |name: &str, est: Estimate| {
        rows.push(ScanRow {
            e: theta.e,
            eta: theta.eta,
            n,
            dist: dist.to_string(),
            replicas: lambdas.len(),
            stat_name: name.to_string(),
            value: est.value,
            stderr: est.stderr,
        })
    };
    push("in_domain_S", Estimate::exact(f64::from(u8::from(in_domain_s(theta.e, theta.eta, domain)))));
    push("scale_ratio", Estimate::exact(theta.scale_ratio(n)));
    push("above_threshold", Estimate::exact(f64::from(u8::from(theta.scale_ratio(n) >= domain.m))));
    for (tag, xs) in [("abs", &abs), ("im", &im)] {
        push(&format!("neta_{tag}_lambda_mean"), stats::mean(xs));
        push(&format!("neta_{tag}_lambda_median"), stats::median(xs));
        push(&format!("neta_{tag}_lambda_q10"), stats::quantile(xs, 0.1));
        push(&format!("neta_{tag}_lambda_q90"), stats::quantile(xs, 0.9));
    }
    push("tail_probability", stats::exceedance(&abs, tail_k));
    let sq = theta.sqrt_theta();
    let z = theta.theta();
    for q in MOMENT_ORDERS {
        let m: Vec<f64> = lambdas.iter().map(|l| (sq * l).norm().powi(q as i32)).collect();
        push(&format!("moment_sqrt_theta_lambda_q{q}"), stats::mean(&m));
        let e_theta: f64 = lambdas.iter().map(|l| (z * l).norm().powi(q as i32)).sum::<f64>() / lambdas.len() as f64;
        push(
            &format!("control_parameter_q{q}"),
            Estimate::exact(control_parameter(q as f64, theta, n, delta, e_theta)),
        );
    }
    Ok(rows)
}

/// `Λ` scan statistics at every θ from precomputed spectra.
pub fn fluctuation_scan_from_spectra(
    spectra: &[SpectrumSample],
    thetas: &[SpectralPoint],
    tail_k: f64,
    domain: &DomainParams,
) -> Result<Vec<ScanRow>> {
    if spectra.is_empty() || thetas.is_empty() {
        return Err(Error::invalid("scan needs at least one spectrum and one θ"));
    }
    let n = spectra[0].n;
    let dist = spectra[0].dist.clone();
    let mut rows = Vec::new();
    for &theta in thetas {
        let lambdas = spectra
            .iter()
            .map(|s| Ok(lambda_solutions(empirical_stieltjes(s, theta)?, theta)?.lambda))
            .collect::<Result<Vec<_>>>()?;
        rows.extend(lambda_rows(theta, n, &dist, &lambdas, tail_k, domain)?);
    }
    Ok(rows)
}

/// Resolvent diagnostics of one realization at one θ.
#[derive(Debug, Clone, Copy, PartialEq)]
struct DenseDiagnostics {
    max_abs_g: f64,
    max_reciprocal: f64,
    max_centered_reciprocal: f64,
    max_offdiag: f64,
    abs_r: f64,
    quad_residual: f64,
    vieta_residual: f64,
    composite_slack: f64,
    w_abs: f64,
    w_conditional: f64,
    w_centered: f64,
}

fn dense_diagnostics(x: &MatrixSample, theta: SpectralPoint, settings: &LawScanSettings) -> Result<DenseDiagnostics> {
    let pair = build_resolvents(x, theta, &IndexSets::empty())?;
    let rep = r_from_pair(x, &pair);
    let rec = record_from_r(theta, &rep, 0, x.n, &settings.domain)?;
    let sq = theta.sqrt_theta();
    let z = theta.theta();
    let nf = x.n as f64;
    let mut d = DenseDiagnostics {
        max_abs_g: 0.0,
        max_reciprocal: 0.0,
        max_centered_reciprocal: 0.0,
        max_offdiag: 0.0,
        abs_r: rec.r.norm(),
        quad_residual: rec.quad_residual,
        vieta_residual: rec.vieta_sum_residual.max(rec.vieta_product_residual),
        composite_slack: lambda_composite(&rec, settings.composite_c).slack,
        w_abs: 0.0,
        w_conditional: 0.0,
        w_centered: 0.0,
    };
    for t in &rep.terms {
        let sg = sq * t.g_kk;
        d.max_abs_g = d.max_abs_g.max(sg.norm());
        d.max_reciprocal = d.max_reciprocal.max(sg.inv().norm());
        d.max_centered_reciprocal = d.max_centered_reciprocal.max((sq * t.upsilon).norm());
    }
    let m = pair.g.nrows();
    for i in 0..m {
        for j in 0..m {
            if i != j {
                d.max_offdiag = d.max_offdiag.max((sq * pair.g[(i, j)]).norm());
            }
        }
    }

    // E_k W_k by redrawing column k, with 𝒢^{(k)} applied through a rank-one downdate
    let law = settings.dist.component_law(x.n)?;
    let mut rng = rng_from_seed(replica_seed(x.seed, 0x5745_4b00));
    let cols = settings.w_columns.min(rep.terms.len()).max(1);
    let rows = pair.rows().to_vec();
    let inv_sqrt = 1.0 / nf.sqrt();
    let (mut w_abs, mut w_cond, mut w_cent) = (0.0, 0.0, 0.0);
    for t in rep.terms.iter().take(cols) {
        let y: Vec<Complex64> = column_vector(x, t.k, &rows).iter().map(|c| c * inv_sqrt).collect();
        let gy = linalg::mat_vec(&pair.curly_g, &y);
        let yg = linalg::vec_mat(&y, &pair.curly_g);
        let a: Complex64 = y.iter().zip(&gy).map(|(u, w)| u.conj() * w).sum();
        let w_k = z * t.upsilon * t.g_kk;
        let mut acc = ZERO;
        for _ in 0..settings.w_resamples.max(1) {
            let fresh: Vec<Complex64> = (0..rows.len()).map(|_| law.sample(&mut rng) * inv_sqrt).collect();
            let gf = linalg::mat_vec(&pair.curly_g, &fresh);
            let ff: Complex64 = fresh.iter().zip(&gf).map(|(u, w)| u.conj() * w).sum();
            let fy: Complex64 = linalg::vec_mat(&fresh, &pair.curly_g).iter().zip(&y).map(|(u, w)| u * w).sum();
            let yf: Complex64 = yg.iter().zip(&fresh).map(|(u, w)| u * w).sum();
            let form = ff + fy * yf / (1.0 - a);
            let g_new = -(z * (1.0 + form)).inv();
            let ups_new = form - t.trace_minor;
            acc += z * ups_new * g_new;
        }
        let conditional = acc / settings.w_resamples.max(1) as f64;
        w_abs += w_k.norm();
        w_cond += conditional.norm();
        w_cent += (w_k - conditional).norm();
    }
    d.w_abs = w_abs / cols as f64;
    d.w_conditional = w_cond / cols as f64;
    d.w_centered = w_cent / cols as f64;
    Ok(d)
}

/// Monte-Carlo scan of `Λ` over a θ grid at one `N`.
///
/// Every replica draws its own matrix from a derived seed; results are
/// folded in replica order, so the output does not depend on scheduling.
/// When `N` is at most `dense_cap`, resolvent diagnostics (`R`, the
/// quadratic residual, the monitored entries and `W_k`) are appended.
pub fn fluctuation_scan(settings: &LawScanSettings) -> Result<Vec<ScanRow>> {
    settings.validate()?;
    let dense = settings.n <= settings.dense_cap.min(DEFAULT_DENSE_CAP);
    let per_replica: Vec<(Vec<Complex64>, Vec<DenseDiagnostics>)> = (0..settings.replicas)
        .into_par_iter()
        .map(|i| {
            let x = sample_matrix(settings.n, settings.dist, replica_seed(settings.seed, i as u64))?;
            let spectrum = compute_spectrum(&x, &IndexSets::empty())?;
            let lambdas = settings
                .thetas
                .iter()
                .map(|&t| Ok(lambda_solutions(empirical_stieltjes(&spectrum, t)?, t)?.lambda))
                .collect::<Result<Vec<_>>>()?;
            let diags = if dense {
                settings
                    .thetas
                    .iter()
                    .map(|&t| dense_diagnostics(&x, t, settings))
                    .collect::<Result<Vec<_>>>()?
            } else {
                Vec::new()
            };
            Ok((lambdas, diags))
        })
        .collect::<Result<Vec<_>>>()?;

    let dist = settings.dist.tag();
    let mut rows = Vec::new();
    for (ti, &theta) in settings.thetas.iter().enumerate() {
        let lambdas: Vec<Complex64> = per_replica.iter().map(|r| r.0[ti]).collect();
        rows.extend(lambda_rows(theta, settings.n, dist, &lambdas, settings.tail_k, &settings.domain)?);
        if dense {
            let diag: Vec<DenseDiagnostics> = per_replica.iter().map(|r| r.1[ti]).collect();
            let col = |f: fn(&DenseDiagnostics) -> f64| diag.iter().map(f).collect::<Vec<f64>>();
            let mut push = |name: &str, est: Estimate| {
                rows.push(ScanRow {
                    e: theta.e,
                    eta: theta.eta,
                    n: settings.n,
                    dist: dist.to_string(),
                    replicas: settings.replicas,
                    stat_name: name.to_string(),
                    value: est.value,
                    stderr: est.stderr,
                })
            };
            push("max_abs_sqrt_theta_gkk", stats::mean(&col(|d| d.max_abs_g)));
            push("max_reciprocal_sqrt_theta_gkk", stats::mean(&col(|d| d.max_reciprocal)));
            push("max_centered_reciprocal", stats::mean(&col(|d| d.max_centered_reciprocal)));
            push("max_abs_sqrt_theta_gkl", stats::mean(&col(|d| d.max_offdiag)));
            push("abs_r", stats::mean(&col(|d| d.abs_r)));
            let worst = |xs: Vec<f64>| Estimate::exact(xs.into_iter().fold(0.0, f64::max));
            push("max_quad_residual", worst(col(|d| d.quad_residual)));
            push("max_vieta_residual", worst(col(|d| d.vieta_residual)));
            let min_slack = col(|d| d.composite_slack).into_iter().fold(f64::INFINITY, f64::min);
            push("min_composite_slack", Estimate::exact(min_slack));
            push("w_abs", stats::mean(&col(|d| d.w_abs)));
            push("w_conditional_abs", stats::mean(&col(|d| d.w_conditional)));
            push("w_centered_abs", stats::mean(&col(|d| d.w_centered)));
        }
    }
    Ok(rows)
}

/// Looks up a statistic in scan rows.
pub fn find_stat<'a>(rows: &'a [ScanRow], theta: SpectralPoint, name: &str) -> Option<&'a ScanRow> {
    rows.iter().find(|r| r.e == theta.e && r.eta == theta.eta && r.stat_name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fluctuation() {
        let theta = SpectralPoint::new(2.0, 0.5);
        let delta = mp_stieltjes(theta).unwrap();
        let lp = lambda_solutions(delta, theta).unwrap();
        assert_eq!(lp.lambda, ZERO);
        assert!((lp.lambda_tilde + 2.0 * delta + 1.0).norm() < 1e-15);
    }

    #[test]
    fn zero_matrix_on_negative_axis() {
        let lp = lambda_solutions(Complex64::new(1.0, 0.0), SpectralPoint::new(-1.0, 0.0)).unwrap();
        let golden = (5.0_f64.sqrt() - 1.0) / 2.0;
        assert!((lp.lambda.re - (1.0 - golden)).abs() < 1e-14);
        assert!((lp.lambda + lp.lambda_tilde + 2.0 * lp.delta + 1.0).norm() < 1e-12);
        assert!(lambda_solutions(ZERO, SpectralPoint::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn composite_selection() {
        let base = FluctuationRecord {
            theta: SpectralPoint::new(2.0, 0.5),
            lambda_n: Complex64::new(0.3, 0.01),
            lambda_tilde: Complex64::new(0.1, 0.0),
            delta: ZERO,
            r: ZERO,
            quad_residual: 0.0,
            vieta_sum_residual: 0.0,
            vieta_product_residual: 0.0,
            lambda_composite: 0.0,
            in_domain: true,
        };
        assert!((lambda_composite(&base, 1.0).lambda - base.lambda_n.norm()).abs() < 1e-15);
        let outside = FluctuationRecord { in_domain: false, ..base };
        assert!((lambda_composite(&outside, 1.0).lambda - 0.1).abs() < 1e-15);
    }

    #[test]
    fn injected_zero_fluctuation_scan() {
        let theta = SpectralPoint::new(2.0, 0.3);
        let rows = lambda_rows(theta, 64, "gaussian", &[ZERO; 25], 1.0, &DomainParams::default()).unwrap();
        for r in rows.iter().filter(|r| r.stat_name.contains("lambda")) {
            assert_eq!(r.value, 0.0, "{}", r.stat_name);
        }
    }

    #[test]
    fn coefficient_recursion_small_case() {
        let a = CMat::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64, i as f64 - j as f64));
        let b = next_coefficients(&a);
        // only j = 2 contributes to entries with max(r, l) = 1
        assert_eq!(b[(0, 1)], a[(0, 2)] * a[(1, 2)].conj());
        assert_eq!(b[(2, 0)], ZERO);
        assert_eq!(b[(0, 0)], a[(0, 1)] * a[(0, 1)].conj() + a[(0, 2)] * a[(0, 2)].conj());
    }

    #[test]
    fn r_agrees_with_vieta_for_zero_matrix() {
        let x = MatrixSample::from_entries(CMat::zeros(4, 4), false).unwrap();
        let theta = SpectralPoint::new(0.0, 1.0);
        let rec = fluctuation_record(&x, theta, &IndexSets::empty(), &DomainParams::default()).unwrap();
        assert!((rec.lambda_n * rec.lambda_tilde - rec.r).norm() < 1e-12);
        assert!(rec.quad_residual < 1e-12);
    }

    #[test]
    fn quadratic_relation_on_samples() {
        use crate::ensemble::EntryDistribution;
        let theta = SpectralPoint::new(2.0, 1.0);
        for seed in 0..3 {
            let x = sample_matrix(32, EntryDistribution::gaussian(), seed).unwrap();
            let rec = fluctuation_record(&x, theta, &IndexSets::empty(), &DomainParams::default()).unwrap();
            assert!(rec.quad_residual < 1e-9, "{rec:?}");
            assert!(rec.vieta_product_residual < 1e-9 && rec.vieta_sum_residual < 1e-12);
            let removed = IndexSets::new(vec![1, 5], vec![3]).unwrap();
            let rec = fluctuation_record(&x, theta, &removed, &DomainParams::default()).unwrap();
            assert!(rec.quad_residual < 1e-9, "{rec:?}");
        }
    }

    #[test]
    fn recursion_bounds_on_a_sample() {
        use crate::ensemble::EntryDistribution;
        let x = sample_matrix(24, EntryDistribution::rademacher(), 9).unwrap();
        let (states, rep) = q_recursion_check(&x, SpectralPoint::new(1.0, 0.2), &IndexSets::empty(), 2).unwrap();
        assert_eq!(states.len(), 3);
        assert!(rep.max_decomposition_residual < 1e-12, "{rep:?}");
        assert!(rep.min_slack(2) >= -1e-10, "{rep:?}");
        assert!(rep.holder.unwrap().min_slack() >= 0.0);
    }
}
