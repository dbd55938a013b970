//! Dense spectra and resolvents with removed columns and rows.
//!
//! For a realization `X_N` and index sets `J1` (removed columns) and `J2`
//! (removed rows), `Y = X^{(J1)}_{(J2)}` and
//!
//! - `G = (Y*Y − θ)⁻¹`, indexed by the surviving column labels,
//! - `𝒢 = (YY* − θ)⁻¹`, indexed by the surviving row labels.
//!
//! Labels are the original 0-based indices, so `G^{(J)}_{ij}` lines up with
//! `G_{ij}` entry by entry. Normalized traces always divide by the full
//! size `N`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytics::SpectralPoint;
use crate::ensemble::MatrixSample;
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Largest `N` for which full resolvents are formed.
pub const DEFAULT_DENSE_CAP: usize = 512;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Removed column labels `J1` and row labels `J2`, sorted and distinct.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndexSets {
    j1: Vec<usize>,
    j2: Vec<usize>,
}

impl IndexSets {
    pub fn new(mut j1: Vec<usize>, mut j2: Vec<usize>) -> Result<Self> {
        for (name, set) in [("J1", &mut j1), ("J2", &mut j2)] {
            set.sort_unstable();
            if set.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid(format!("duplicate index in {name}: {set:?}")));
            }
        }
        Ok(Self { j1, j2 })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn columns(j1: Vec<usize>) -> Result<Self> {
        Self::new(j1, Vec::new())
    }

    pub fn j1(&self) -> &[usize] {
        &self.j1
    }

    pub fn j2(&self) -> &[usize] {
        &self.j2
    }

    /// `|J1| − |J2|`.
    pub fn size_difference(&self) -> i64 {
        self.j1.len() as i64 - self.j2.len() as i64
    }

    pub fn removes_column(&self, k: usize) -> bool {
        self.j1.binary_search(&k).is_ok()
    }

    pub fn removes_row(&self, k: usize) -> bool {
        self.j2.binary_search(&k).is_ok()
    }

    pub fn with_column(&self, k: usize) -> Self {
        let mut out = self.clone();
        if let Err(pos) = out.j1.binary_search(&k) {
            out.j1.insert(pos, k);
        }
        out
    }

    pub fn with_row(&self, k: usize) -> Self {
        let mut out = self.clone();
        if let Err(pos) = out.j2.binary_search(&k) {
            out.j2.insert(pos, k);
        }
        out
    }

    pub fn kept_columns(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|k| !self.removes_column(*k)).collect()
    }

    pub fn kept_rows(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|k| !self.removes_row(*k)).collect()
    }

    /// Checks every label is below `n` and at least one row and column survive.
    pub fn check(&self, n: usize) -> Result<()> {
        if let Some(bad) = self.j1.iter().chain(&self.j2).find(|&&k| k >= n) {
            return Err(Error::invalid(format!("index {bad} out of range for N = {n}")));
        }
        if self.j1.len() >= n || self.j2.len() >= n {
            return Err(Error::invalid(format!(
                "removing {} columns and {} rows leaves nothing of N = {n}",
                self.j1.len(),
                self.j2.len()
            )));
        }
        Ok(())
    }
}

/// Sorted eigenvalues of `(X_N^{(J1)})* X_N^{(J1)}` with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSample {
    pub eigenvalues: Vec<f64>,
    /// Full matrix size, the normalization of the counting function.
    pub n: usize,
    pub seed: u64,
    pub dist: String,
}

impl SpectrumSample {
    pub fn new(mut eigenvalues: Vec<f64>, n: usize) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        Self {
            eigenvalues,
            n,
            seed: 0,
            dist: String::from("explicit"),
        }
    }

    /// `#{α : s_α ≤ E}`.
    pub fn count_at_most(&self, e: f64) -> usize {
        self.eigenvalues.partition_point(|&s| s <= e)
    }

    /// `n_N(E) = #{s_α ≤ E}/N`.
    pub fn counting_function(&self, e: f64) -> f64 {
        self.count_at_most(e) as f64 / self.n as f64
    }
}

/// Eigenvalues of `(X_N^{(J1)}_{(J2)})* X_N^{(J1)}_{(J2)}`, ascending.
pub fn compute_spectrum(x: &MatrixSample, sets: &IndexSets) -> Result<SpectrumSample> {
    sets.check(x.n)?;
    let cols = sets.kept_columns(x.n);
    let rows = sets.kept_rows(x.n);
    let gram = if sets.j1.is_empty() && sets.j2.is_empty() {
        let y = if x.scaled {
            x.entries.clone()
        } else {
            let s = 1.0 / (x.n as f64).sqrt();
            CMat::from_fn(x.n, x.n, |i, j| x.entries[(i, j)] * s)
        };
        linalg::gram(&y)
    } else {
        linalg::gram(&x.scaled_submatrix(&rows, &cols))
    };
    let fail = |reason: String| Error::Eigensolver {
        seed: x.seed,
        n: x.n,
        dist: x.distribution.tag().to_string(),
        reason,
    };
    let mut ev = linalg::hermitian_eigenvalues(&gram).map_err(fail)?;
    let top = ev.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let floor = -1e-10 * top;
    for v in ev.iter_mut() {
        if !v.is_finite() || *v < floor {
            return Err(fail(format!("eigenvalue {v} of a Gram matrix")));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    ev.sort_by(f64::total_cmp);
    Ok(SpectrumSample {
        eigenvalues: ev,
        n: x.n,
        seed: x.seed,
        dist: x.distribution.tag().to_string(),
    })
}

/// `Δ_N(θ) = (1/N) Σ 1/(s_α − θ)`.
pub fn empirical_stieltjes(spectrum: &SpectrumSample, theta: SpectralPoint) -> Result<Complex64> {
    theta.require_off_axis()?;
    let z = theta.theta();
    let sum: Complex64 = spectrum.eigenvalues.iter().map(|&s| (s - z).inv()).sum();
    Ok(sum / spectrum.n as f64)
}

/// `G` and `𝒢` for one θ and one pair of removed sets.
#[derive(Debug, Clone)]
pub struct ResolventPair {
    pub g: CMat,
    pub curly_g: CMat,
    pub theta: SpectralPoint,
    pub sets: IndexSets,
    pub n: usize,
    columns: Vec<usize>,
    rows: Vec<usize>,
    /// `‖(Y*Y − θ)G − I‖_max`.
    pub residual_g: f64,
    /// `‖(YY* − θ)𝒢 − I‖_max`.
    pub residual_curly: f64,
}

impl ResolventPair {
    /// Surviving column labels, the index set of `G`.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// Surviving row labels, the index set of `𝒢`.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn g_pos(&self, label: usize) -> Option<usize> {
        self.columns.binary_search(&label).ok()
    }

    pub fn curly_pos(&self, label: usize) -> Option<usize> {
        self.rows.binary_search(&label).ok()
    }

    /// `G_ij` by column labels.
    pub fn g_at(&self, i: usize, j: usize) -> Complex64 {
        self.g[(self.g_pos(i).expect("column label removed"), self.g_pos(j).expect("column label removed"))]
    }

    /// `𝒢_ij` by row labels.
    pub fn curly_at(&self, i: usize, j: usize) -> Complex64 {
        self.curly_g[(
            self.curly_pos(i).expect("row label removed"),
            self.curly_pos(j).expect("row label removed"),
        )]
    }

    pub fn trace_g(&self) -> Complex64 {
        linalg::trace(&self.g)
    }

    pub fn trace_curly(&self) -> Complex64 {
        linalg::trace(&self.curly_g)
    }

    /// `(1/N) Tr G`.
    pub fn delta_n(&self) -> Complex64 {
        self.trace_g() / self.n as f64
    }
}

#[derive(Clone, Copy)]
enum Side {
    Columns,
    Rows,
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap {
        return Err(Error::DenseCapExceeded { n, cap });
    }
    Ok(())
}

/// Resolvent of one of the two Gram matrices, with its labels and residual.
fn one_resolvent(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
    side: Side,
) -> Result<(CMat, Vec<usize>, f64)> {
    let cols = sets.kept_columns(x.n);
    let rows = sets.kept_rows(x.n);
    let y = x.scaled_submatrix(&rows, &cols);
    let (a, labels) = match side {
        Side::Columns => (linalg::gram(&y), cols),
        Side::Rows => (linalg::cogram(&y), rows),
    };
    let z = theta.theta();
    let singular = || Error::Singular {
        re: theta.e,
        im: theta.eta,
    };
    let r = linalg::shifted_inverse(&a, z).ok_or_else(singular)?;
    let residual = linalg::shifted_residual(&a, z, &r);
    if !residual.is_finite() || residual > 1e-6 {
        return Err(singular());
    }
    Ok((r, labels, residual))
}

/// `G^{(J1)}_{(J2)}` alone, with its column labels.
pub fn resolvent_g(x: &MatrixSample, theta: SpectralPoint, sets: &IndexSets) -> Result<(CMat, Vec<usize>)> {
    sets.check(x.n)?;
    check_cap(x.n, DEFAULT_DENSE_CAP)?;
    one_resolvent(x, theta, sets, Side::Columns).map(|(r, l, _)| (r, l))
}

/// `𝒢^{(J1)}_{(J2)}` alone, with its row labels.
pub fn resolvent_curly(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
) -> Result<(CMat, Vec<usize>)> {
    sets.check(x.n)?;
    check_cap(x.n, DEFAULT_DENSE_CAP)?;
    one_resolvent(x, theta, sets, Side::Rows).map(|(r, l, _)| (r, l))
}

/// Builds both resolvents under the default dense cap.
pub fn build_resolvents(x: &MatrixSample, theta: SpectralPoint, sets: &IndexSets) -> Result<ResolventPair> {
    build_resolvents_capped(x, theta, sets, DEFAULT_DENSE_CAP)
}

pub fn build_resolvents_capped(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
    cap: usize,
) -> Result<ResolventPair> {
    if !(theta.e.is_finite() && theta.eta.is_finite()) {
        return Err(Error::domain(format!("non-finite spectral point {theta:?}")));
    }
    sets.check(x.n)?;
    check_cap(x.n, cap)?;
    let (g, columns, residual_g) = one_resolvent(x, theta, sets, Side::Columns)?;
    let (curly_g, rows, residual_curly) = one_resolvent(x, theta, sets, Side::Rows)?;
    Ok(ResolventPair {
        g,
        curly_g,
        theta,
        sets: sets.clone(),
        n: x.n,
        columns,
        rows,
        residual_g,
        residual_curly,
    })
}

/// Unscaled column `x^k` restricted to the given rows.
pub fn column_vector(x: &MatrixSample, k: usize, rows: &[usize]) -> Vec<Complex64> {
    rows.iter().map(|&i| x.raw(i, k)).collect()
}

/// Unscaled row `x_k` restricted to the given columns.
pub fn row_vector(x: &MatrixSample, k: usize, cols: &[usize]) -> Vec<Complex64> {
    cols.iter().map(|&j| x.raw(k, j)).collect()
}

/// One residual or slack measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub identity: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub theta: SpectralPoint,
    #[serde(rename = "J1")]
    pub j1: Vec<usize>,
    #[serde(rename = "J2")]
    pub j2: Vec<usize>,
    /// Size of the defect of an identity; absent for inequalities.
    pub residual: Option<f64>,
    /// Right side minus left side of an inequality; absent for identities.
    pub slack: Option<f64>,
    /// Whether the record takes part in pass/fail decisions.
    pub asserted: bool,
}

/// Tolerances applied to asserted records.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const SLACK_TOLERANCE: f64 = -1e-10;

impl IdentityRecord {
    pub fn violates(&self) -> bool {
        if !self.asserted {
            return false;
        }
        let bad_res = self.residual.is_some_and(|r| !(r <= RESIDUAL_TOLERANCE));
        let bad_slack = self.slack.is_some_and(|s| !(s >= SLACK_TOLERANCE));
        bad_res || bad_slack
    }
}

/// Output of [`identity_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub records: Vec<IdentityRecord>,
    /// Sign `σ` with `Tr 𝒢 − Tr G = σ(|J1| − |J2|)/θ` as measured; zero when
    /// `|J1| = |J2|`.
    pub trace_sign: i8,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.asserted)
            .filter_map(|r| r.residual)
            .fold(0.0, f64::max)
    }

    pub fn min_slack(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| r.asserted)
            .filter_map(|r| r.slack)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn violations(&self) -> impl Iterator<Item = &IdentityRecord> {
        self.records.iter().filter(|r| r.violates())
    }

    pub fn get(&self, identity: &str) -> Option<&IdentityRecord> {
        self.records.iter().find(|r| r.identity == identity)
    }
}

struct Recorder<'a> {
    n: usize,
    theta: SpectralPoint,
    sets: &'a IndexSets,
    out: Vec<IdentityRecord>,
}

impl Recorder<'_> {
    fn push(&mut self, identity: &str, residual: Option<f64>, slack: Option<f64>, asserted: bool) {
        self.out.push(IdentityRecord {
            identity: identity.to_string(),
            n: self.n,
            theta: self.theta,
            j1: self.sets.j1.clone(),
            j2: self.sets.j2.clone(),
            residual,
            slack,
            asserted,
        });
    }

    fn residual(&mut self, identity: &str, value: f64) {
        self.push(identity, Some(value), None, true);
    }

    fn slack(&mut self, identity: &str, value: f64) {
        self.push(identity, None, Some(value), true);
    }
}

/// `max_{i,j≠k} |R_ij − R'_ij − R_ik R_kj / R_kk|` with `R'` the minor at `k`.
fn minor_residual(full: &CMat, full_labels: &[usize], minor: &CMat, minor_labels: &[usize], k: usize, literal_form: bool) -> f64 {
    let kp = full_labels.binary_search(&k).expect("k present in the full index set");
    let rkk = full[(kp, kp)];
    let mut worst = 0.0_f64;
    for (mi, &li) in minor_labels.iter().enumerate() {
        let fi = full_labels.binary_search(&li).expect("minor labels are a subset");
        for (mj, &lj) in minor_labels.iter().enumerate() {
            let fj = full_labels.binary_search(&lj).expect("minor labels are a subset");
            let correction = if literal_form {
                full[(fi, kp)] * full[(kp, fi)] / rkk
            } else {
                full[(fi, kp)] * full[(kp, fj)] / rkk
            };
            let d = full[(fi, fj)] - minor[(mi, mj)] - correction;
            worst = worst.max(d.norm());
        }
    }
    worst
}

/// `max_k |Σ_j |R_kj|² − Im R_kk / η|`, relative to `Im R_kk/η`.
fn ward_residual(r: &CMat, eta: f64) -> f64 {
    let n = r.nrows();
    let mut worst = 0.0_f64;
    for k in 0..n {
        let row: f64 = (0..n).map(|j| r[(k, j)].norm_sqr()).sum();
        let rhs = r[(k, k)].im / eta;
        worst = worst.max((row - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
    }
    worst
}

fn square_diag(r: &CMat, k: usize) -> Complex64 {
    (0..r.nrows()).map(|j| r[(k, j)] * r[(j, k)]).sum()
}

/// `min_k (Im R_kk / η − |(R²)_kk|)`.
fn ward_square_slack(r: &CMat, eta: f64) -> f64 {
    (0..r.nrows())
        .map(|k| r[(k, k)].im / eta - square_diag(r, k).norm())
        .fold(f64::INFINITY, f64::min)
}

/// `min_{l,j} (½√(Im R_ll/η) + ½√(Im R_jj/η) − |R_lj|)`.
fn offdiag_slack(r: &CMat, eta: f64) -> f64 {
    let n = r.nrows();
    let roots: Vec<f64> = (0..n).map(|k| (r[(k, k)].im / eta).max(0.0).sqrt()).collect();
    let mut worst = f64::INFINITY;
    for l in 0..n {
        for j in 0..n {
            worst = worst.min(0.5 * roots[l] + 0.5 * roots[j] - r[(l, j)].norm());
        }
    }
    worst
}

/// Residuals and slacks of the deterministic resolvent identities at one θ.
///
/// `k` drives the minor, Schur-complement and `T_k` checks and must survive
/// both as a column and as a row; `l` is the diagonal entry used for the
/// η-monotonicity checks.
pub fn identity_suite(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
    k: usize,
    l: usize,
) -> Result<IdentityReport> {
    theta.require_off_axis()?;
    sets.check(x.n)?;
    for (name, idx) in [("k", k), ("l", l)] {
        if idx >= x.n || sets.removes_column(idx) || sets.removes_row(idx) {
            return Err(Error::invalid(format!(
                "index {name} = {idx} must survive the removals {sets:?}"
            )));
        }
    }
    let n = x.n;
    let nf = n as f64;
    let eta = theta.eta;
    let z = theta.theta();
    let pair = build_resolvents(x, theta, sets)?;
    let mut rec = Recorder {
        n,
        theta,
        sets,
        out: Vec::new(),
    };
    rec.residual("inverse-residual-g", pair.residual_g);
    rec.residual("inverse-residual-curly", pair.residual_curly);

    // minors at k, for G (column removal) and 𝒢 (row removal)
    let col_minor = sets.with_column(k);
    let row_minor = sets.with_row(k);
    let have_col_minor = col_minor.j1.len() < n;
    let have_row_minor = row_minor.j2.len() < n;
    let g_minor = if have_col_minor { Some(resolvent_g(x, theta, &col_minor)?) } else { None };
    let curly_minor = if have_row_minor { Some(resolvent_curly(x, theta, &row_minor)?) } else { None };
    if let Some((gm, gl)) = &g_minor {
        rec.residual("minor-g", minor_residual(&pair.g, pair.columns(), gm, gl, k, false));
        rec.push("minor-g-literal", Some(minor_residual(&pair.g, pair.columns(), gm, gl, k, true)), None, false);
    }
    if let Some((cm, cl)) = &curly_minor {
        rec.residual("minor-curly", minor_residual(&pair.curly_g, pair.rows(), cm, cl, k, false));
    }

    // trace relation
    let d = sets.size_difference() as f64;
    let diff = pair.trace_curly() - pair.trace_g();
    let minus = (diff + d / z).norm();
    let plus = (diff - d / z).norm();
    rec.residual("trace-relation", minus);
    rec.push("trace-relation-plus-sign", Some(plus), None, false);
    let trace_sign = if d == 0.0 {
        0
    } else if minus <= plus {
        -1
    } else {
        1
    };

    // Ward identities
    rec.residual("ward-g", ward_residual(&pair.g, eta));
    rec.residual("ward-curly", ward_residual(&pair.curly_g, eta));
    rec.slack("ward-square-g", ward_square_slack(&pair.g, eta));
    rec.slack("ward-square-curly", ward_square_slack(&pair.curly_g, eta));

    // Schur complement for G_kk and 𝒢_kk
    let kg = pair.g_pos(k).expect("k survives");
    let kc = pair.curly_pos(k).expect("k survives");
    let g_kk = pair.g[(kg, kg)];
    let curly_kk = pair.curly_g[(kc, kc)];
    let delta_n = pair.delta_n();
    if have_col_minor {
        let (cm_col, cm_rows) = resolvent_curly(x, theta, &col_minor)?;
        let v = column_vector(x, k, &cm_rows);
        let form = linalg::quadratic_form(&cm_col, &v) / nf;
        let schur = -(z * (1.0 + form)).inv();
        rec.residual("schur-g", (g_kk - schur).norm());

        let trace_minor = linalg::trace(&cm_col) / nf;
        let t_k = trace_minor - delta_n;
        let upsilon = form - trace_minor;
        let decomposed = -(z * (1.0 + delta_n + t_k + upsilon)).inv();
        rec.residual("schur-g-decomposed", (g_kk - decomposed).norm());

        let closed = -(d + 1.0) / (nf * z) - square_diag(&pair.g, kg) / (nf * g_kk);
        rec.residual("t-k-closed-form", (t_k - closed).norm());
        let literal = -d / (nf * z) - square_diag(&pair.g, kg) / (nf * g_kk);
        rec.push("t-k-closed-form-literal", Some((t_k - literal).norm()), None, false);
        rec.slack("t-k-bound", (d.abs() + 1.0) / (nf * eta.abs()) - t_k.norm());
    }
    if have_row_minor {
        let (g_row, g_row_cols) = resolvent_g(x, theta, &row_minor)?;
        let r = row_vector(x, k, &g_row_cols);
        let rc: Vec<Complex64> = r.iter().map(|v| v.conj()).collect();
        let form = linalg::quadratic_form(&g_row, &rc) / nf;
        let schur = -(z * (1.0 + form)).inv();
        rec.residual("schur-curly", (curly_kk - schur).norm());

        let curly_t = linalg::trace(&g_row) / nf - pair.trace_curly() / nf;
        let closed = (d - 1.0) / (nf * z) - square_diag(&pair.curly_g, kc) / (nf * curly_kk);
        rec.residual("curly-t-k-closed-form", (curly_t - closed).norm());
        rec.slack("curly-t-k-bound", (d.abs() + 1.0) / (nf * eta.abs()) - curly_t.norm());
    }

    rec.slack("offdiag-bound-g", offdiag_slack(&pair.g, eta));
    rec.slack("offdiag-bound-curly", offdiag_slack(&pair.curly_g, eta));

    // η-monotonicity of a diagonal entry
    let lg = pair.g_pos(l).expect("l survives");
    let lc = pair.curly_pos(l).expect("l survives");
    let base_g = pair.g[(lg, lg)];
    let base_c = pair.curly_g[(lc, lc)];
    for s in [2.0, 4.0, 16.0] {
        let shrunk = SpectralPoint::new(theta.e, theta.eta / s);
        let other = build_resolvents(x, shrunk, sets)?;
        let g_s = other.g[(lg, lg)];
        let c_s = other.curly_g[(lc, lc)];
        rec.slack(&format!("eta-monotonicity-abs-g-s{s}"), s * base_g.norm() - g_s.norm());
        rec.slack(&format!("eta-monotonicity-abs-curly-s{s}"), s * base_c.norm() - c_s.norm());
        rec.slack(&format!("eta-monotonicity-im-g-s{s}"), s * base_g.im.abs() - g_s.im.abs());
        rec.slack(&format!("eta-monotonicity-im-curly-s{s}"), s * base_c.im.abs() - c_s.im.abs());
    }

    Ok(IdentityReport {
        records: rec.out,
        trace_sign,
    })
}

/// `(Υ, ε₁, ε₂)` for a resolvent `m` and an unscaled vector `v`:
/// `Υ = v*mv/N − Tr m/N`, `ε₁ = (1/N)Σ(|v_j|² − 1)m_jj`,
/// `ε₂ = (1/N)Σ_{j≠l} v̄_j v_l m_jl`.
pub fn upsilon_parts(m: &CMat, v: &[Complex64], n: usize) -> (Complex64, Complex64, Complex64) {
    let nf = n as f64;
    let upsilon = linalg::quadratic_form(m, v) / nf - linalg::trace(m) / nf;
    let mut eps1 = ZERO;
    let mut eps2 = ZERO;
    for j in 0..m.nrows() {
        eps1 += (v[j].norm_sqr() - 1.0) * m[(j, j)];
        for l in 0..m.ncols() {
            if l != j {
                eps2 += v[j].conj() * v[l] * m[(j, l)];
            }
        }
    }
    (upsilon, eps1 / nf, eps2 / nf)
}

/// Quadratic-form quantities attached to a column/row index `k` and a
/// partner `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticForms {
    pub upsilon: Complex64,
    pub y: Complex64,
    pub t_k: Complex64,
    pub curly_t_k: Complex64,
    pub eps1: Complex64,
    pub eps2: Complex64,
    pub k_kl: Complex64,
    pub curly_k_kl: Complex64,
    /// `|Υ − ε₁ − ε₂|`.
    pub decomposition_residual: f64,
    /// `|√θG_kl − √θG_ll·√θG^{(l)}_kk·K_kl|`.
    pub k_factorization_residual: f64,
    /// `|√θ𝒢_kl − √θ𝒢_ll·√θ𝒢_{(l),kk}·𝒦_kl|`.
    pub curly_k_factorization_residual: f64,
}

/// Computes Υ, Y, T_k, 𝒯_k, ε₁, ε₂, K_kl and 𝒦_kl by dense inverses.
///
/// `K_kl = √θ (x^k)* 𝒢^{(kl)} x^l / N` and `𝒦_kl = √θ x_k G_{(kl)} x_l* / N`.
pub fn quadratic_forms(
    x: &MatrixSample,
    theta: SpectralPoint,
    sets: &IndexSets,
    k: usize,
    l: usize,
) -> Result<QuadraticForms> {
    theta.require_off_axis()?;
    sets.check(x.n)?;
    if k == l {
        return Err(Error::invalid("quadratic forms need k ≠ l"));
    }
    for idx in [k, l] {
        if idx >= x.n || sets.removes_column(idx) || sets.removes_row(idx) {
            return Err(Error::invalid(format!("index {idx} must survive the removals {sets:?}")));
        }
    }
    let n = x.n;
    let nf = n as f64;
    let sq = theta.sqrt_theta();
    let pair = build_resolvents(x, theta, sets)?;

    let col_k = sets.with_column(k);
    let (curly_k, rows_k) = resolvent_curly(x, theta, &col_k)?;
    let v = column_vector(x, k, &rows_k);
    let (upsilon, eps1, eps2) = upsilon_parts(&curly_k, &v, n);
    let t_k = linalg::trace(&curly_k) / nf - pair.delta_n();

    let row_k = sets.with_row(k);
    let (g_rowk, cols_k) = resolvent_g(x, theta, &row_k)?;
    let r: Vec<Complex64> = row_vector(x, k, &cols_k).iter().map(|c| c.conj()).collect();
    let y = linalg::quadratic_form(&g_rowk, &r) / nf - linalg::trace(&g_rowk) / nf;
    let curly_t_k = linalg::trace(&g_rowk) / nf - pair.trace_curly() / nf;

    // off-diagonal factorizations
    let col_kl = col_k.with_column(l);
    let (curly_kl, rows_kl) = resolvent_curly(x, theta, &col_kl)?;
    let xk = column_vector(x, k, &rows_kl);
    let xl = column_vector(x, l, &rows_kl);
    let k_kl = sq * linalg::bilinear_form(&curly_kl, &xk, &xl) / nf;
    let (g_l, g_l_cols) = resolvent_g(x, theta, &sets.with_column(l))?;
    let kp = g_l_cols.binary_search(&k).expect("k survives");
    let lhs = sq * pair.g_at(k, l);
    let rhs = sq * pair.g_at(l, l) * sq * g_l[(kp, kp)] * k_kl;
    let k_factorization_residual = (lhs - rhs).norm();

    let row_kl = row_k.with_row(l);
    let (g_kl, cols_kl) = resolvent_g(x, theta, &row_kl)?;
    let rk: Vec<Complex64> = row_vector(x, k, &cols_kl).iter().map(|c| c.conj()).collect();
    let rl: Vec<Complex64> = row_vector(x, l, &cols_kl).iter().map(|c| c.conj()).collect();
    let curly_k_kl = sq * linalg::bilinear_form(&g_kl, &rk, &rl) / nf;
    let (c_l, c_l_rows) = resolvent_curly(x, theta, &sets.with_row(l))?;
    let kp = c_l_rows.binary_search(&k).expect("k survives");
    let lhs = sq * pair.curly_at(k, l);
    let rhs = sq * pair.curly_at(l, l) * sq * c_l[(kp, kp)] * curly_k_kl;
    let curly_k_factorization_residual = (lhs - rhs).norm();

    Ok(QuadraticForms {
        upsilon,
        y,
        t_k,
        curly_t_k,
        eps1,
        eps2,
        k_kl,
        curly_k_kl,
        decomposition_residual: (upsilon - eps1 - eps2).norm(),
        k_factorization_residual,
        curly_k_factorization_residual,
    })
}

/// Per-column quantities of the self-consistent equation for `Δ_N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinorTerms {
    pub k: usize,
    pub g_kk: Complex64,
    pub t_k: Complex64,
    pub upsilon: Complex64,
    /// `(x^k)* 𝒢^{(k)} x^k / N`.
    pub form: Complex64,
    /// `(1/N) Tr 𝒢^{(k)}`.
    pub trace_minor: Complex64,
}

/// `T_k`, `Υ_k` and `G_kk` for every surviving column, by rank-one
/// downdates of `𝒢` instead of one inverse per column.
pub fn minor_sweep(x: &MatrixSample, theta: SpectralPoint, sets: &IndexSets) -> Result<Vec<MinorTerms>> {
    let pair = build_resolvents(x, theta, sets)?;
    Ok(minor_sweep_from(x, &pair))
}

pub fn minor_sweep_from(x: &MatrixSample, pair: &ResolventPair) -> Vec<MinorTerms> {
    let nf = pair.n as f64;
    let y = x.scaled_submatrix(pair.rows(), pair.columns());
    let w = &pair.curly_g * &y; // 𝒢Y
    let u = y.adjoint() * &pair.curly_g; // Y*𝒢
    let tr_curly = pair.trace_curly();
    let delta_n = pair.delta_n();
    pair.columns()
        .iter()
        .enumerate()
        .map(|(c, &k)| {
            let mut a = ZERO;
            let mut b = ZERO;
            for i in 0..y.nrows() {
                a += y[(i, c)].conj() * w[(i, c)];
                b += u[(c, i)] * w[(i, c)];
            }
            let one_minus = 1.0 - a;
            let form = a / one_minus;
            let trace_minor = (tr_curly + b / one_minus) / nf;
            MinorTerms {
                k,
                g_kk: pair.g[(c, c)],
                t_k: trace_minor - delta_n,
                upsilon: form - trace_minor,
                form,
                trace_minor,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{sample_matrix, EntryDistribution};

    fn zero(n: usize) -> MatrixSample {
        MatrixSample::from_entries(CMat::zeros(n, n), false).unwrap()
    }

    #[test]
    fn index_sets_validation() {
        assert!(IndexSets::new(vec![1, 1], vec![]).is_err());
        let s = IndexSets::new(vec![3, 1], vec![2]).unwrap();
        assert_eq!(s.j1(), &[1, 3]);
        assert_eq!(s.kept_columns(5), vec![0, 2, 4]);
        assert_eq!(s.size_difference(), 1);
        assert!(s.check(3).is_err());
        assert!(s.check(5).is_ok());
        assert!(IndexSets::columns(vec![0, 1]).unwrap().check(2).is_err());
    }

    #[test]
    fn zero_matrix_spectrum_and_resolvent() {
        let x = zero(4);
        let sp = compute_spectrum(&x, &IndexSets::empty()).unwrap();
        assert_eq!(sp.eigenvalues, vec![0.0; 4]);
        let theta = SpectralPoint::new(0.3, 0.7);
        let pair = build_resolvents(&x, theta, &IndexSets::empty()).unwrap();
        let want = -theta.theta().inv();
        for i in 0..4 {
            for j in 0..4 {
                let w = if i == j { want } else { ZERO };
                assert!((pair.g[(i, j)] - w).norm() < 1e-15);
            }
        }
        let s = empirical_stieltjes(&sp, theta).unwrap();
        assert!((s - want).norm() < 1e-15);
    }

    #[test]
    fn identity_matrix_spectrum() {
        let n = 6;
        let e = CMat::from_fn(n, n, |i, j| if i == j { Complex64::new((n as f64).sqrt(), 0.0) } else { ZERO });
        let x = MatrixSample::from_entries(e, false).unwrap();
        let sp = compute_spectrum(&x, &IndexSets::empty()).unwrap();
        assert!(sp.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn single_eigenvalue_transform() {
        let sp = SpectrumSample::new(vec![1.0], 1);
        let s = empirical_stieltjes(&sp, SpectralPoint::new(0.0, 1.0)).unwrap();
        assert!((s - Complex64::new(0.5, 0.5)).norm() < 1e-15);
        assert!(empirical_stieltjes(&sp, SpectralPoint::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn dimensions_and_cap() {
        let x = sample_matrix(16, EntryDistribution::gaussian(), 5).unwrap();
        let pair = build_resolvents(&x, SpectralPoint::new(1.0, 0.5), &IndexSets::columns(vec![3]).unwrap()).unwrap();
        assert_eq!((pair.g.nrows(), pair.curly_g.nrows()), (15, 16));
        assert!(matches!(
            build_resolvents_capped(&x, SpectralPoint::new(1.0, 0.5), &IndexSets::empty(), 8),
            Err(Error::DenseCapExceeded { n: 16, cap: 8 })
        ));
    }

    #[test]
    fn counting_function_convention() {
        let sp = SpectrumSample::new(vec![0.5, 1.0, 1.0, 2.0], 4);
        assert_eq!(sp.count_at_most(1.0), 3);
        assert_eq!(sp.counting_function(0.4), 0.0);
        assert_eq!(sp.counting_function(2.0), 1.0);
    }

    #[test]
    fn upsilon_with_identity_harness() {
        let n = 5;
        let id = CMat::from_fn(n, n, |i, j| if i == j { Complex64::new(1.0, 0.0) } else { ZERO });
        let v: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64 * 0.3, 1.0 - i as f64 * 0.1)).collect();
        let (u, e1, e2) = upsilon_parts(&id, &v, n);
        let norm2: f64 = v.iter().map(|c| c.norm_sqr()).sum();
        assert!((u - Complex64::new((norm2 - n as f64) / n as f64, 0.0)).norm() < 1e-14);
        assert!((u - e1 - e2).norm() < 1e-14);
    }

    #[test]
    fn identities_hold_on_a_sample() {
        let x = sample_matrix(24, EntryDistribution::gaussian(), 11).unwrap();
        for sets in [IndexSets::empty(), IndexSets::new(vec![2, 7], vec![5]).unwrap()] {
            let rep = identity_suite(&x, SpectralPoint::new(1.3, 0.2), &sets, 0, 1).unwrap();
            let bad: Vec<_> = rep.violations().collect();
            assert!(bad.is_empty(), "{bad:#?}");
            if sets.size_difference() != 0 {
                assert_eq!(rep.trace_sign, -1);
            }
        }
    }

    #[test]
    fn sweep_matches_direct_minors() {
        let x = sample_matrix(20, EntryDistribution::rademacher(), 3).unwrap();
        let theta = SpectralPoint::new(0.7, 0.1);
        let sets = IndexSets::columns(vec![4]).unwrap();
        let sweep = minor_sweep(&x, theta, &sets).unwrap();
        for t in sweep.iter().filter(|t| t.k % 5 == 1) {
            let q = quadratic_forms(&x, theta, &sets, t.k, if t.k == 0 { 2 } else { 0 }).unwrap();
            assert!((q.upsilon - t.upsilon).norm() < 1e-10);
            assert!((q.t_k - t.t_k).norm() < 1e-10);
            assert!(q.decomposition_residual < 1e-12);
            assert!(q.k_factorization_residual < 1e-10);
            assert!(q.curly_k_factorization_residual < 1e-10);
        }
    }
}
