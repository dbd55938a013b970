//! Closed-form Marchenko–Pastur analytics.
//!
//! Everything here is a pure function of its arguments. The square case
//! (aspect ratio 1) carries the Stieltjes transform, the distribution
//! function and the classical locations; the density and the edges are
//! available for any positive aspect ratio.
//!
//! The Stieltjes transform convention is `Δ(θ) = ∫ ρ(x) / (x − θ) dx`, so
//! `Im Δ > 0` in the upper half-plane and `Δ(θ) ≈ −1/θ` for large `|θ|`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aspect ratio and spectral edges of a Marchenko–Pastur law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpModel {
    pub aspect_ratio: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
}

impl MpModel {
    pub fn new(aspect_ratio: f64) -> Result<Self> {
        if !(aspect_ratio.is_finite() && aspect_ratio > 0.0) {
            return Err(Error::invalid(format!(
                "aspect ratio must be positive and finite, got {aspect_ratio}"
            )));
        }
        let r = aspect_ratio.sqrt();
        Ok(Self {
            aspect_ratio,
            lambda_minus: (1.0 - r) * (1.0 - r),
            lambda_plus: (1.0 + r) * (1.0 + r),
        })
    }

    /// The square ensemble: support (0, 4].
    pub fn square() -> Self {
        Self {
            aspect_ratio: 1.0,
            lambda_minus: 0.0,
            lambda_plus: 4.0,
        }
    }

    pub fn density(&self, e: f64) -> Result<f64> {
        mp_density(e, self.aspect_ratio)
    }
}

impl Default for MpModel {
    fn default() -> Self {
        Self::square()
    }
}

/// A spectral parameter `θ = E + iη`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralPoint {
    pub e: f64,
    pub eta: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64) -> Self {
        Self { e, eta }
    }

    pub fn from_complex(z: Complex64) -> Self {
        Self { e: z.re, eta: z.im }
    }

    pub fn theta(&self) -> Complex64 {
        Complex64::new(self.e, self.eta)
    }

    /// Principal square root of θ.
    pub fn sqrt_theta(&self) -> Complex64 {
        self.theta().sqrt()
    }

    /// Distance to the soft edge, `|E − 4|`.
    pub fn kappa(&self) -> f64 {
        (self.e - 4.0).abs()
    }

    pub fn conj(&self) -> Self {
        Self {
            e: self.e,
            eta: -self.eta,
        }
    }

    pub fn is_real(&self) -> bool {
        self.eta == 0.0
    }

    /// `Nη / |√θ|`, the effective number of eigenvalues seen at scale η.
    pub fn scale_ratio(&self, n: usize) -> f64 {
        n as f64 * self.eta.abs() / self.theta().norm().sqrt()
    }

    pub(crate) fn require_off_axis(&self) -> Result<()> {
        if !(self.e.is_finite() && self.eta.is_finite()) {
            return Err(Error::domain(format!("non-finite spectral point {self:?}")));
        }
        if self.eta == 0.0 {
            return Err(Error::domain(format!(
                "spectral point E = {} lies on the real axis",
                self.e
            )));
        }
        Ok(())
    }
}

/// Constants of the spectral domain `S = {4η > c(E² + η² − 4E)}` and the
/// threshold `M` on `Nη/|√θ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub c: f64,
    pub m: f64,
}

impl DomainParams {
    pub fn new(c: f64, m: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::invalid(format!("domain constant c must be positive, got {c}")));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::invalid(format!("threshold M must be positive, got {m}")));
        }
        Ok(Self { c, m })
    }
}

impl Default for DomainParams {
    fn default() -> Self {
        Self { c: 1.0, m: 1.0 }
    }
}

/// Marchenko–Pastur density
/// `ρ(E) = (1/2π) √((λ₊ − E)(E − λ₋)/E²)` on `[λ₋, λ₊]`, zero elsewhere.
pub fn mp_density(e: f64, aspect_ratio: f64) -> Result<f64> {
    if !e.is_finite() {
        return Err(Error::domain(format!("density evaluated at non-finite E = {e}")));
    }
    let model = MpModel::new(aspect_ratio)?;
    if e <= 0.0 || e < model.lambda_minus || e > model.lambda_plus {
        return Ok(0.0);
    }
    let num = (model.lambda_plus - e) * (e - model.lambda_minus);
    Ok((num.max(0.0) / (e * e)).sqrt() / (2.0 * PI))
}

/// Stieltjes transform of the square Marchenko–Pastur law.
///
/// Both roots of `Δ² + Δ + 1/θ = 0` are formed (the small one through
/// Vieta to avoid cancellation) and the Herglotz root is selected by
/// inspecting their imaginary parts. On the real axis left of the support
/// the positive root is returned, right of it the root that vanishes at
/// infinity.
pub fn mp_stieltjes(point: SpectralPoint) -> Result<Complex64> {
    let SpectralPoint { e, eta } = point;
    if !(e.is_finite() && eta.is_finite()) {
        return Err(Error::domain(format!("non-finite spectral point {point:?}")));
    }
    if eta == 0.0 && (0.0..=4.0).contains(&e) {
        return Err(Error::domain(format!(
            "Stieltjes transform evaluated on the support at E = {e}"
        )));
    }
    let theta = point.theta();
    let c = theta.inv();
    let disc = (Complex64::new(1.0, 0.0) - 4.0 * c).sqrt();
    // principal sqrt has Re ≥ 0, so 1 + disc does not cancel
    let big = -(1.0 + disc) * 0.5;
    let small = c / big;
    let root = if eta > 0.0 {
        if small.im >= big.im {
            small
        } else {
            big
        }
    } else if eta < 0.0 {
        if small.im <= big.im {
            small
        } else {
            big
        }
    } else if e < 0.0 {
        // both roots are real: one positive, one below −1
        if small.re > big.re {
            Complex64::new(small.re, 0.0)
        } else {
            Complex64::new(big.re, 0.0)
        }
    } else {
        let pick = if small.norm() < big.norm() { small } else { big };
        Complex64::new(pick.re, 0.0)
    };
    Ok(root)
}

/// Distribution function `n_MP(E) = ∫₀^E ρ` of the square law, via the
/// antiderivative `(2/π)(φ + sin φ cos φ)` with `φ = arcsin(√E / 2)`.
pub fn mp_cdf(e: f64) -> f64 {
    if e.is_nan() || e <= 0.0 {
        return 0.0;
    }
    if e >= 4.0 {
        return 1.0;
    }
    let phi = (e.sqrt() / 2.0).asin();
    cdf_in_angle(phi)
}

fn cdf_in_angle(phi: f64) -> f64 {
    (2.0 * phi + (2.0 * phi).sin()) / PI
}

/// Classical location `γ_a`, the `a/N` quantile of the square law.
///
/// Solved in the angle variable `E = 4 sin² φ`, where the distribution
/// function is smooth: bisection to 1e−6 seeded by the hard-edge asymptote
/// `γ ≈ (πa/2N)²`, then Newton polish.
pub fn classical_location(a: usize, n: usize) -> Result<f64> {
    if n == 0 || a == 0 || a > n {
        return Err(Error::invalid(format!(
            "classical location index a = {a} outside 1..={n}"
        )));
    }
    if a == n {
        return Ok(4.0);
    }
    let target = a as f64 / n as f64;
    quantile(target)
}

/// Inverse of [`mp_cdf`] on `[0, 1]`.
pub fn quantile(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("quantile level {p} outside [0, 1]")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(4.0);
    }
    // g(φ) = 2φ + sin 2φ = πp, increasing on [0, π/2]
    let rhs = PI * p;
    let g = |phi: f64| 2.0 * phi + (2.0 * phi).sin();
    let guess = (PI * p / 4.0).min(PI / 2.0);
    let mut lo = 0.0_f64;
    let mut hi = PI / 2.0;
    // tighten the bracket around the hard-edge guess when it is valid
    if g(guess) >= rhs {
        hi = guess;
    } else {
        lo = guess;
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut phi = 0.5 * (lo + hi);
    for _ in 0..50 {
        let d = 2.0 + 2.0 * (2.0 * phi).cos();
        if d <= 0.0 {
            break;
        }
        let step = (g(phi) - rhs) / d;
        let next = (phi - step).clamp(lo.min(phi), hi.max(phi));
        let done = (next - phi).abs() <= 1e-16 * phi.max(1e-300);
        phi = next;
        if done {
            break;
        }
    }
    let s = phi.sin();
    Ok(4.0 * s * s)
}

/// Membership in `S = {4η > c(E² + η² − 4E)}`.
pub fn in_domain_s(e: f64, eta: f64, params: &DomainParams) -> bool {
    4.0 * eta > params.c * (e * e + eta * eta - 4.0 * e)
}

/// Extremes of the edge-behaviour ratios over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRatioReport {
    /// `min |Δ + 1/2| / (κ² + η²)^{1/4}`
    pub min_lower_ratio: f64,
    /// `min Im Δ · √(κ + η) / η`
    pub min_im_ratio: f64,
    /// `max Im Δ · √(κ + η) / η`
    pub max_im_ratio: f64,
    pub points: usize,
}

/// Evaluates `|Δ + 1/2| / (κ² + η²)^{1/4}` and `Im Δ √(κ+η) / η` over the grid.
pub fn edge_bound_ratios(grid: &[SpectralPoint]) -> Result<EdgeRatioReport> {
    if grid.is_empty() {
        return Err(Error::invalid("edge ratio grid is empty"));
    }
    let mut report = EdgeRatioReport {
        min_lower_ratio: f64::INFINITY,
        min_im_ratio: f64::INFINITY,
        max_im_ratio: 0.0,
        points: grid.len(),
    };
    for p in grid {
        if !(p.eta > 0.0 && p.e > 0.0) {
            return Err(Error::domain(format!(
                "edge ratios need E > 0 and η > 0, got {p:?}"
            )));
        }
        let kappa = p.kappa();
        if kappa < p.eta {
            return Err(Error::domain(format!(
                "edge ratios need κ ≥ η, got κ = {kappa} at {p:?}"
            )));
        }
        let delta = mp_stieltjes(*p)?;
        let lower = (delta + 0.5).norm() / (kappa * kappa + p.eta * p.eta).powf(0.25);
        let im = delta.im * (kappa + p.eta).sqrt() / p.eta;
        report.min_lower_ratio = report.min_lower_ratio.min(lower);
        report.min_im_ratio = report.min_im_ratio.min(im);
        report.max_im_ratio = report.max_im_ratio.max(im);
    }
    Ok(report)
}
