//! Counting measures recovered from Stieltjes transforms by Pleijel contour
//! integrals, deviations of the counting function from the Marchenko–Pastur
//! distribution function, and eigenvalue rigidity statistics.
//!
//! `L(z₀)` runs clockwise through `E − iη₀, E − iQ, a − iQ, a + iQ, E + iQ,
//! E + iη₀` with left anchor `a`. Closing it with the short vertical segment
//! through `E` encloses `(a, E)`, so
//!
//! ```text
//! μ(a, E) ≈ (1/2πi)∮_{L(z₀)} m dz − (η₀/π) Re m(z₀).
//! ```
//!
//! Since `m(z̄) = conj m(z)`, only the upper half is integrated:
//! `(1/2πi)∮ m dz = Im(∫_upper m dz)/π`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{classical_location, mp_cdf, mp_stieltjes, SpectralPoint};
use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::resolvent::SpectrumSample;
use crate::stats;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A function `m(z)` with `m(z̄) = conj m(z)`, integrable along segments
/// that stay off the real axis.
pub trait StieltjesTransform: Sync {
    fn eval(&self, z: Complex64) -> Complex64;

    /// `∫_a^b m(z) dz` along the straight segment.
    fn segment_integral(&self, a: Complex64, b: Complex64) -> Complex64 {
        segment_quadrature(self, a, b)
    }
}

/// Adaptive Gauss–Legendre integration along a segment: a 64-point rule on
/// the whole segment is compared with the rule on both halves and the
/// halves are refined until the two agree.
pub fn segment_quadrature<M: StieltjesTransform + ?Sized>(m: &M, a: Complex64, b: Complex64) -> Complex64 {
    let rule = GaussLegendre::order64();
    let d = b - a;
    let panel = |t0: f64, t1: f64| -> Complex64 {
        rule.mapped(t0, t1).map(|(t, w)| m.eval(a + d * t) * w).sum::<Complex64>() * d
    };
    fn refine<F: Fn(f64, f64) -> Complex64>(f: &F, t0: f64, t1: f64, whole: Complex64, depth: u32) -> Complex64 {
        let mid = 0.5 * (t0 + t1);
        let left = f(t0, mid);
        let right = f(mid, t1);
        let split = left + right;
        let tol = 1e-13 * split.norm().max(1e-3);
        if depth == 0 || (split - whole).norm() <= tol {
            return split;
        }
        refine(f, t0, mid, left, depth - 1) + refine(f, mid, t1, right, depth - 1)
    }
    let whole = panel(0.0, 1.0);
    refine(&panel, 0.0, 1.0, whole, 40)
}

/// `(1/N) Σ_α 1/(s_α − z)` of an eigenvalue list.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalTransform<'a> {
    pub eigenvalues: &'a [f64],
    pub n: usize,
}

impl<'a> EmpiricalTransform<'a> {
    pub fn new(spectrum: &'a SpectrumSample) -> Self {
        Self {
            eigenvalues: &spectrum.eigenvalues,
            n: spectrum.n,
        }
    }
}

/// `∫_a^b dz/(s − z) = Log((s − a)/(s − b))`.
///
/// A straight segment that misses `s` sees it under an angle smaller than
/// π, so the principal logarithm of the ratio is the continuous branch.
pub fn pole_segment_integral(s: f64, a: Complex64, b: Complex64) -> Complex64 {
    ((s - a) / (s - b)).ln()
}

impl StieltjesTransform for EmpiricalTransform<'_> {
    fn eval(&self, z: Complex64) -> Complex64 {
        self.eigenvalues.iter().map(|&s| (s - z).inv()).sum::<Complex64>() / self.n as f64
    }

    fn segment_integral(&self, a: Complex64, b: Complex64) -> Complex64 {
        self.eigenvalues.iter().map(|&s| pole_segment_integral(s, a, b)).sum::<Complex64>() / self.n as f64
    }
}

/// `w/(s − z)`, a point mass `w` at `s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMass {
    pub location: f64,
    pub weight: f64,
}

impl StieltjesTransform for PointMass {
    fn eval(&self, z: Complex64) -> Complex64 {
        self.weight * (self.location - z).inv()
    }

    fn segment_integral(&self, a: Complex64, b: Complex64) -> Complex64 {
        self.weight * pole_segment_integral(self.location, a, b)
    }
}

/// The square Marchenko–Pastur transform, integrated by quadrature.
#[derive(Debug, Clone, Copy, Default)]
pub struct MarchenkoPastur;

impl StieltjesTransform for MarchenkoPastur {
    fn eval(&self, z: Complex64) -> Complex64 {
        mp_stieltjes(SpectralPoint::from_complex(z)).unwrap_or(Complex64::new(f64::NAN, f64::NAN))
    }
}

/// Any closure `z ↦ m(z)`, integrated by quadrature.
pub struct FnTransform<F>(pub F);

impl<F: Fn(Complex64) -> Complex64 + Sync> StieltjesTransform for FnTransform<F> {
    fn eval(&self, z: Complex64) -> Complex64 {
        (self.0)(z)
    }
}

/// Which contour a [`ContourSpec`] describes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ContourKind {
    /// `L(z₀)` with `z₀ = E + iη₀`, recovering `μ(anchor, E)`.
    Count { e: f64 },
    /// `γ(x, x′)` and its mirror image, recovering `μ(x, x′)`.
    Interval { x: f64, x_prime: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourSpec {
    pub kind: ContourKind,
    pub eta0: f64,
    pub left_anchor: f64,
    pub height: f64,
}

pub const DEFAULT_LEFT_ANCHOR: f64 = -1.0;
pub const DEFAULT_HEIGHT: f64 = 8.0;

/// `η₀ = M√E/N`, and `M/N` for `E ≤ 0`.
pub fn pleijel_eta0(e: f64, n: usize, m: f64) -> f64 {
    if e > 0.0 {
        m * e.sqrt() / n as f64
    } else {
        m / n as f64
    }
}

impl ContourSpec {
    pub fn count(e: f64, eta0: f64) -> Self {
        Self {
            kind: ContourKind::Count { e },
            eta0,
            left_anchor: DEFAULT_LEFT_ANCHOR,
            height: DEFAULT_HEIGHT,
        }
    }

    pub fn interval(x: f64, x_prime: f64, eta0: f64) -> Self {
        Self {
            kind: ContourKind::Interval { x, x_prime },
            eta0,
            left_anchor: DEFAULT_LEFT_ANCHOR,
            height: DEFAULT_HEIGHT,
        }
    }

    pub fn with_left_anchor(mut self, anchor: f64) -> Self {
        self.left_anchor = anchor;
        self
    }

    pub fn with_height(mut self, q: f64) -> Self {
        self.height = q;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.eta0, self.left_anchor, self.height].iter().all(|v| v.is_finite());
        if !finite || !(self.eta0 > 0.0) || !(self.height > self.eta0) {
            return Err(Error::invalid(format!(
                "contour needs 0 < η₀ < Q, got η₀ = {}, Q = {}",
                self.eta0, self.height
            )));
        }
        match self.kind {
            ContourKind::Count { e } => {
                if !(self.left_anchor < 0.0) {
                    return Err(Error::invalid(format!(
                        "left anchor {} must lie left of the spectrum",
                        self.left_anchor
                    )));
                }
                if !(e.is_finite() && e > self.left_anchor) {
                    return Err(Error::invalid(format!(
                        "E = {e} must lie right of the anchor {}",
                        self.left_anchor
                    )));
                }
            }
            ContourKind::Interval { x, x_prime } => {
                if !(x.is_finite() && x_prime.is_finite() && x < x_prime) {
                    return Err(Error::invalid(format!("interval needs x < x′, got [{x}, {x_prime}]")));
                }
            }
        }
        Ok(())
    }

    /// Vertices of the part of the contour in the upper half plane.
    pub fn upper_path(&self) -> Vec<Complex64> {
        let c = Complex64::new;
        let (q, h) = (self.height, self.eta0);
        match self.kind {
            ContourKind::Count { e } => {
                let a = self.left_anchor;
                vec![c(a, 0.0), c(a, q), c(e, q), c(e, h)]
            }
            ContourKind::Interval { x, x_prime } => vec![c(x, h), c(x, q), c(x_prime, q), c(x_prime, h)],
        }
    }

    /// Vertices of the whole of `L(z₀)`, lower half first; `None` for
    /// interval contours, whose halves are not joined.
    pub fn full_path(&self) -> Option<Vec<Complex64>> {
        let ContourKind::Count { .. } = self.kind else {
            return None;
        };
        let upper = self.upper_path();
        let mut path: Vec<Complex64> = upper.iter().rev().map(|z| z.conj()).collect();
        // the anchor crossing is interior to the left leg
        path.pop();
        path.extend(upper.into_iter().skip(1));
        Some(path)
    }
}

/// `∫ m dz` along a polygonal path.
pub fn path_integral<M: StieltjesTransform + ?Sized>(m: &M, path: &[Complex64]) -> Complex64 {
    path.windows(2).map(|w| m.segment_integral(w[0], w[1])).sum()
}

/// A recovered mass and the size of the neglected remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PleijelEstimate {
    pub estimate: f64,
    pub remainder: f64,
}

fn boundary_term<M: StieltjesTransform + ?Sized>(m: &M, x: f64, eta0: f64) -> Complex64 {
    m.eval(Complex64::new(x, eta0))
}

/// `μ(anchor, E)` from the upper half of `L(z₀)`.
pub fn pleijel_count<M: StieltjesTransform + ?Sized>(m: &M, contour: &ContourSpec) -> Result<PleijelEstimate> {
    contour.validate()?;
    let ContourKind::Count { e } = contour.kind else {
        return Err(Error::invalid("pleijel_count needs an L(z₀) contour"));
    };
    let upper = path_integral(m, &contour.upper_path());
    let m0 = boundary_term(m, e, contour.eta0);
    Ok(PleijelEstimate {
        estimate: upper.im / std::f64::consts::PI - contour.eta0 / std::f64::consts::PI * m0.re,
        remainder: contour.eta0 * m0.im.abs(),
    })
}

/// Same as [`pleijel_count`], integrating both halves of the contour.
pub fn pleijel_count_full<M: StieltjesTransform + ?Sized>(m: &M, contour: &ContourSpec) -> Result<PleijelEstimate> {
    contour.validate()?;
    let ContourKind::Count { e } = contour.kind else {
        return Err(Error::invalid("pleijel_count needs an L(z₀) contour"));
    };
    let path = contour.full_path().expect("count contours have a full path");
    let full = path_integral(m, &path);
    let m0 = boundary_term(m, e, contour.eta0);
    let two_pi_i = Complex64::new(0.0, 2.0 * std::f64::consts::PI);
    Ok(PleijelEstimate {
        estimate: (full / two_pi_i).re - contour.eta0 / std::f64::consts::PI * m0.re,
        remainder: contour.eta0 * m0.im.abs(),
    })
}

/// `μ(x, x′)` from `γ(x, x′)` and its mirror image, with the leading
/// corrections `±(η₀/π) Re m` for the short vertical gaps at `x` and `x′`.
pub fn pleijel_interval<M: StieltjesTransform + ?Sized>(m: &M, contour: &ContourSpec) -> Result<PleijelEstimate> {
    contour.validate()?;
    let ContourKind::Interval { x, x_prime } = contour.kind else {
        return Err(Error::invalid("pleijel_interval needs a γ(x, x′) contour"));
    };
    let pi = std::f64::consts::PI;
    let upper = path_integral(m, &contour.upper_path());
    let left = boundary_term(m, x, contour.eta0);
    let right = boundary_term(m, x_prime, contour.eta0);
    Ok(PleijelEstimate {
        estimate: upper.im / pi + contour.eta0 / pi * (left.re - right.re),
        remainder: contour.eta0 * (left.norm() + right.norm()),
    })
}

/// One replica's Pleijel reconstruction against the direct count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PleijelCheck {
    pub replica: usize,
    pub estimate: f64,
    pub direct: f64,
    pub remainder: f64,
    /// `|estimate − direct|·N`.
    pub error_in_units: f64,
}

/// Reconstructs `n_N(E)` on every spectrum with `η₀ = M√E/N`.
pub fn pleijel_scan(spectra: &[SpectrumSample], e: f64, m_const: f64) -> Result<Vec<PleijelCheck>> {
    spectra
        .par_iter()
        .enumerate()
        .map(|(replica, s)| {
            let contour = ContourSpec::count(e, pleijel_eta0(e, s.n, m_const));
            let est = pleijel_count(&EmpiricalTransform::new(s), &contour)?;
            let direct = s.counting_function(e);
            Ok(PleijelCheck {
                replica,
                estimate: est.estimate,
                direct,
                remainder: est.remainder,
                error_in_units: (est.estimate - direct).abs() * s.n as f64,
            })
        })
        .collect()
}

/// `min{√E, log N / N}`; for `E > 4` the value at `E = 4`.
pub fn counting_normalizer(e: f64, n: usize) -> f64 {
    let nf = n as f64;
    e.min(4.0).max(0.0).sqrt().min(nf.ln() / nf)
}

/// Per-replica, per-E counting deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub replica: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub n_empirical: f64,
    pub n_mp: f64,
    pub deviation: f64,
    pub normalized: f64,
}

/// Quantile summaries, `{N, E, stat, quantile, value}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "E")]
    pub e: f64,
    pub stat: String,
    pub quantile: f64,
    pub value: f64,
}

pub const SUMMARY_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// `|n_N(E) − n_MP(E)|` and its normalization over an E grid.
pub fn counting_deviation(spectra: &[SpectrumSample], e_grid: &[f64]) -> Result<(Vec<CountingRow>, Vec<QuantileRow>)> {
    if spectra.is_empty() || e_grid.is_empty() {
        return Err(Error::invalid("counting deviation needs spectra and a non-empty E grid"));
    }
    if let Some(bad) = e_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::invalid(format!("E grid point {bad} must be positive")));
    }
    let n = spectra[0].n;
    let mut rows = Vec::with_capacity(spectra.len() * e_grid.len());
    for (replica, s) in spectra.iter().enumerate() {
        for &e in e_grid {
            let n_empirical = s.counting_function(e);
            let n_mp = mp_cdf(e);
            let deviation = (n_empirical - n_mp).abs();
            rows.push(CountingRow {
                n,
                replica,
                e,
                n_empirical,
                n_mp,
                deviation,
                normalized: deviation / counting_normalizer(e, n),
            });
        }
    }
    let mut summary = Vec::new();
    for &e in e_grid {
        let dev: Vec<f64> = rows.iter().filter(|r| r.e == e).map(|r| r.deviation).collect();
        let norm: Vec<f64> = rows.iter().filter(|r| r.e == e).map(|r| r.normalized).collect();
        for (stat, xs) in [("deviation", &dev), ("normalized", &norm)] {
            let sorted = stats::sorted(xs);
            for p in SUMMARY_QUANTILES {
                summary.push(QuantileRow {
                    n,
                    e,
                    stat: stat.to_string(),
                    quantile: p,
                    value: stats::quantile_sorted(&sorted, p),
                });
            }
        }
    }
    let sup: Vec<f64> = (0..spectra.len())
        .map(|rep| {
            rows.iter()
                .filter(|r| r.replica == rep)
                .map(|r| r.normalized)
                .fold(0.0, f64::max)
        })
        .collect();
    let sorted = stats::sorted(&sup);
    for p in SUMMARY_QUANTILES {
        summary.push(QuantileRow {
            n,
            e: f64::NAN,
            stat: "sup_normalized".to_string(),
            quantile: p,
            value: stats::quantile_sorted(&sorted, p),
        });
    }
    Ok((rows, summary))
}

/// One eigenvalue against its classical location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidityRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub replica: usize,
    /// 1-based eigenvalue index.
    pub a: usize,
    pub lambda_a: f64,
    pub gamma_a: f64,
    /// `|λ_a − γ_a|·N²/(a log N)`.
    pub stat_bulk: f64,
    /// `|λ_a − γ_a|·N²/a²`, present for `a ≤ log N`.
    pub stat_edge: Option<f64>,
}

/// Per-replica maxima of the rigidity statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigiditySummary {
    pub replica: usize,
    pub max_bulk: f64,
    pub max_edge: f64,
    /// `N²|λ₁ − γ₁|`.
    pub smallest_scaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub n: usize,
    pub rows: Vec<RigidityRow>,
    pub summaries: Vec<RigiditySummary>,
}

impl RigidityReport {
    pub fn bulk_quantile(&self, p: f64) -> f64 {
        stats::quantile_sorted(&stats::sorted(&self.summaries.iter().map(|s| s.max_bulk).collect::<Vec<_>>()), p)
    }

    pub fn edge_quantile(&self, p: f64) -> f64 {
        stats::quantile_sorted(&stats::sorted(&self.summaries.iter().map(|s| s.max_edge).collect::<Vec<_>>()), p)
    }

    pub fn smallest_median(&self) -> f64 {
        stats::quantile_sorted(
            &stats::sorted(&self.summaries.iter().map(|s| s.smallest_scaled).collect::<Vec<_>>()),
            0.5,
        )
    }
}

/// Classical locations `γ_1..γ_{⌈N/2⌉}`.
pub fn classical_locations(n: usize) -> Result<Vec<f64>> {
    (1..=n.div_ceil(2)).map(|a| classical_location(a, n)).collect()
}

/// Rigidity statistics of sorted eigenvalue lists against classical
/// locations, for `a = 1..⌈N/2⌉`.
pub fn rigidity_scan(spectra: &[SpectrumSample]) -> Result<RigidityReport> {
    if spectra.is_empty() {
        return Err(Error::invalid("rigidity scan needs at least one spectrum"));
    }
    let n = spectra[0].n;
    if let Some(bad) = spectra.iter().find(|s| s.n != n || s.eigenvalues.len() != n) {
        return Err(Error::invalid(format!(
            "rigidity needs full spectra of size {n}, got {} eigenvalues of N = {}",
            bad.eigenvalues.len(),
            bad.n
        )));
    }
    let gammas = classical_locations(n)?;
    let nf = n as f64;
    let log_n = nf.ln();
    let mut rows = Vec::with_capacity(spectra.len() * gammas.len());
    let mut summaries = Vec::with_capacity(spectra.len());
    for (replica, s) in spectra.iter().enumerate() {
        let mut summary = RigiditySummary {
            replica,
            max_bulk: 0.0,
            max_edge: 0.0,
            smallest_scaled: 0.0,
        };
        for (i, &gamma_a) in gammas.iter().enumerate() {
            let a = i + 1;
            let af = a as f64;
            let lambda_a = s.eigenvalues[i];
            let dev = (lambda_a - gamma_a).abs();
            let stat_bulk = dev * nf * nf / (af * log_n);
            let stat_edge = (af <= log_n).then(|| dev * nf * nf / (af * af));
            summary.max_bulk = summary.max_bulk.max(stat_bulk);
            if let Some(v) = stat_edge {
                summary.max_edge = summary.max_edge.max(v);
            }
            if a == 1 {
                summary.smallest_scaled = dev * nf * nf;
            }
            rows.push(RigidityRow {
                n,
                replica,
                a,
                lambda_a,
                gamma_a,
                stat_bulk,
                stat_edge,
            });
        }
        summaries.push(summary);
    }
    Ok(RigidityReport { n, rows, summaries })
}

/// Helper for tests and demos: the transform of an explicit spectrum.
pub fn spectrum_transform(spectrum: &SpectrumSample, z: Complex64) -> Complex64 {
    if spectrum.eigenvalues.is_empty() {
        return ZERO;
    }
    EmpiricalTransform::new(spectrum).eval(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_enclosed_and_outside() {
        let origin = PointMass { location: 0.0, weight: 1.0 };
        let est = pleijel_count(&origin, &ContourSpec::count(1.0, 1e-4)).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-3, "{est:?}");
        let far = PointMass { location: 5.0, weight: 1.0 };
        let est = pleijel_count(&far, &ContourSpec::count(1.0, 1e-4)).unwrap();
        assert!(est.estimate.abs() < 1e-3, "{est:?}");
        let est = pleijel_interval(&origin, &ContourSpec::interval(-1.0, 1.0, 1e-4)).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-3, "{est:?}");
    }

    #[test]
    fn closure_transform_uses_quadrature() {
        let m = FnTransform(|z: Complex64| (0.0 - z).inv());
        let est = pleijel_count(&m, &ContourSpec::count(1.0, 1e-3)).unwrap();
        assert!((est.estimate - 1.0).abs() < 1e-3);
    }

    #[test]
    fn mp_interval_above_support_is_empty() {
        let est = pleijel_interval(&MarchenkoPastur, &ContourSpec::interval(5.0, 6.0, 1e-3)).unwrap();
        assert!(est.estimate.abs() < 1e-6, "{est:?}");
    }

    #[test]
    fn contour_validation() {
        assert!(ContourSpec::count(1.0, 0.0).validate().is_err());
        assert!(ContourSpec::count(1.0, 9.0).validate().is_err());
        assert!(ContourSpec::count(1.0, 0.1).with_left_anchor(0.5).validate().is_err());
        assert!(ContourSpec::interval(1.0, 1.0, 0.1).validate().is_err());
    }

    #[test]
    fn normalizer_caps_at_four() {
        assert_eq!(counting_normalizer(9.0, 100), counting_normalizer(4.0, 100));
        assert!((counting_normalizer(1e-6, 100) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn injected_classical_locations_give_zero_rigidity() {
        let n = 40;
        let mut ev: Vec<f64> = (1..=n).map(|a| classical_location(a, n).unwrap()).collect();
        ev[n - 1] = 4.0;
        let sp = SpectrumSample::new(ev, n);
        let rep = rigidity_scan(&[sp]).unwrap();
        assert!(rep.rows.iter().all(|r| r.stat_bulk == 0.0 && r.stat_edge.unwrap_or(0.0) == 0.0));
        assert_eq!(rep.rows.len(), 20);
    }
}
