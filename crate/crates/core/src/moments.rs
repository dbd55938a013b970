//! Monte-Carlo harness for the complex Rosenthal and Burkholder inequalities.
//!
//! For a coefficient matrix with zero diagonal,
//! `Q = Σ_{j≠k} a_jk x_j x̄_k = Σ_j ξ_j + Σ_j ξ̂_j` with the martingale
//! differences
//!
//! ```text
//! ξ_j = x_j Σ_{k<j} a_jk x̄_k,    ξ̂_j = x̄_j Σ_{k<j} a_kj x_k.
//! ```
//!
//! Ratios are reported with the universal constants stripped, so a bounded
//! ratio table is the observable content of the inequalities.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::SpectralPoint;
use crate::ensemble::{replica_seed, rng_from_seed, sample_matrix, ComponentLaw, EntryDistribution};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::resolvent::{resolvent_curly, IndexSets};
use crate::stats;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const BATCH: usize = 1024;
pub const MIN_SAMPLES: usize = 10_000;

/// Per-sample `ξ_j`, `ξ̂_j` and `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleDecomposition {
    pub xi: Vec<Complex64>,
    pub xi_hat: Vec<Complex64>,
    pub q: Complex64,
}

impl MartingaleDecomposition {
    pub fn new(a: &CMat, x: &[Complex64]) -> Self {
        let n = a.nrows();
        let mut xi = vec![ZERO; n];
        let mut xi_hat = vec![ZERO; n];
        for j in 0..n {
            let mut u = ZERO;
            let mut v = ZERO;
            for k in 0..j {
                u += a[(j, k)] * x[k].conj();
                v += a[(k, j)] * x[k];
            }
            xi[j] = x[j] * u;
            xi_hat[j] = x[j].conj() * v;
        }
        let mut q = ZERO;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    q += a[(j, k)] * x[j] * x[k].conj();
                }
            }
        }
        Self { xi, xi_hat, q }
    }

    /// `|Q − Σξ_j − Σξ̂_j|`.
    pub fn residual(&self) -> f64 {
        let s: Complex64 = self.xi.iter().chain(&self.xi_hat).sum();
        (self.q - s).norm()
    }
}

fn require_zero_diagonal(a: &CMat) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::invalid("coefficient matrix must be square and non-empty"));
    }
    if let Some(j) = (0..a.nrows()).find(|&j| a[(j, j)] != ZERO) {
        return Err(Error::invalid(format!("coefficient matrix has a nonzero diagonal entry at {j}")));
    }
    Ok(())
}

fn sample_vector<R: Rng + ?Sized>(law: &ComponentLaw, n: usize, rng: &mut R) -> Vec<Complex64> {
    (0..n).map(|_| law.sample(rng)).collect()
}

/// Largest `|mean|/stderr` over the real and imaginary parts.
fn z_score(xs: &[Complex64]) -> f64 {
    let re: Vec<f64> = xs.iter().map(|c| c.re).collect();
    let im: Vec<f64> = xs.iter().map(|c| c.im).collect();
    [stats::mean(&re), stats::mean(&im)]
        .iter()
        .map(|e| if e.stderr > 0.0 { e.value.abs() / e.stderr } else { 0.0 })
        .fold(0.0, f64::max)
}

/// Outcome of [`martingale_decomposition_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub samples: usize,
    pub max_decomposition_residual: f64,
    /// Largest z-score of `E ξ_j = 0` and `E ξ̂_j = 0` over `j`.
    pub max_mean_z: f64,
    /// Largest z-score of `E ξ_j conj(ξ_i) = 0` over checked pairs `i < j`.
    pub max_orthogonality_z: f64,
    /// z-score of the mean difference between the resampled conditional
    /// second moment of `ξ_j` and `|Σ_{k<j} a_jk x̄_k|²`, per checked `j`.
    pub conditional_z: Vec<f64>,
    /// Ratio of the averaged two sides of the conditional identity.
    pub conditional_ratio: Vec<f64>,
}

impl MartingaleReport {
    pub fn passes(&self, z: f64) -> bool {
        self.max_decomposition_residual <= 1e-10
            && self.max_mean_z <= z
            && self.max_orthogonality_z <= z
            && self.conditional_z.iter().all(|v| *v <= z)
    }
}

/// Indices whose pairwise orthogonality is checked.
const ORTHOGONALITY_INDICES: usize = 12;
/// Fresh draws of `x_j` per sample in the conditional check.
const CONDITIONAL_RESAMPLES: usize = 4;

/// Checks the decomposition, the martingale-difference means, pairwise
/// orthogonality and the conditional second moment on `n_samples` draws.
pub fn martingale_decomposition_check(
    a: &CMat,
    dist: EntryDistribution,
    n_samples: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    require_zero_diagonal(a)?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::invalid(format!("need at least {MIN_SAMPLES} samples, got {n_samples}")));
    }
    let n = a.nrows();
    let law = dist.component_law(n.max(2))?;
    let checked = n.min(ORTHOGONALITY_INDICES);
    let cond_j: Vec<usize> = {
        let mut v = vec![n - 1];
        if n > 2 && n / 2 != n - 1 {
            v.push(n / 2);
        }
        v
    };

    struct Sample {
        residual: f64,
        xi: Vec<Complex64>,
        xi_hat: Vec<Complex64>,
        cond_diff: Vec<f64>,
        cond_lhs: Vec<f64>,
        cond_rhs: Vec<f64>,
    }

    let batches = n_samples.div_ceil(BATCH);
    let samples: Vec<Sample> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = rng_from_seed(replica_seed(seed, b as u64));
            let count = BATCH.min(n_samples - b * BATCH);
            let law = &law;
            let cond_j = &cond_j;
            (0..count)
                .map(|_| {
                    let x = sample_vector(law, n, &mut rng);
                    let d = MartingaleDecomposition::new(a, &x);
                    let mut cond_diff = Vec::new();
                    let mut cond_lhs = Vec::new();
                    let mut cond_rhs = Vec::new();
                    for &j in cond_j {
                        let prefix: Complex64 = (0..j).map(|k| a[(j, k)] * x[k].conj()).sum();
                        let rhs = prefix.norm_sqr();
                        let lhs = (0..CONDITIONAL_RESAMPLES)
                            .map(|_| (law.sample(&mut rng) * prefix).norm_sqr())
                            .sum::<f64>()
                            / CONDITIONAL_RESAMPLES as f64;
                        cond_diff.push(lhs - rhs);
                        cond_lhs.push(lhs);
                        cond_rhs.push(rhs);
                    }
                    Sample {
                        residual: d.residual(),
                        xi: d.xi,
                        xi_hat: d.xi_hat,
                        cond_diff,
                        cond_lhs,
                        cond_rhs,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let max_decomposition_residual = samples.iter().map(|s| s.residual).fold(0.0, f64::max);
    let mut max_mean_z: f64 = 0.0;
    for j in 0..n {
        let xi: Vec<Complex64> = samples.iter().map(|s| s.xi[j]).collect();
        let xh: Vec<Complex64> = samples.iter().map(|s| s.xi_hat[j]).collect();
        max_mean_z = max_mean_z.max(z_score(&xi)).max(z_score(&xh));
    }
    let mut max_orthogonality_z: f64 = 0.0;
    for j in 0..checked {
        for i in 0..j {
            let prod: Vec<Complex64> = samples.iter().map(|s| s.xi[j] * s.xi[i].conj()).collect();
            let prod_hat: Vec<Complex64> = samples.iter().map(|s| s.xi_hat[j] * s.xi_hat[i].conj()).collect();
            max_orthogonality_z = max_orthogonality_z.max(z_score(&prod)).max(z_score(&prod_hat));
        }
    }
    let mut conditional_z = Vec::new();
    let mut conditional_ratio = Vec::new();
    for c in 0..cond_j.len() {
        let diff: Vec<f64> = samples.iter().map(|s| s.cond_diff[c]).collect();
        let e = stats::mean(&diff);
        let lhs: f64 = samples.iter().map(|s| s.cond_lhs[c]).sum();
        let rhs: f64 = samples.iter().map(|s| s.cond_rhs[c]).sum();
        // constant-modulus entries make the difference pure roundoff
        let roundoff = 1e-12 * rhs / samples.len() as f64;
        let z = if e.stderr > 0.0 && e.value.abs() > roundoff { e.value.abs() / e.stderr } else { 0.0 };
        conditional_z.push(z);
        conditional_ratio.push(if rhs > 0.0 { lhs / rhs } else { 1.0 });
    }
    Ok(MartingaleReport {
        samples: n_samples,
        max_decomposition_residual,
        max_mean_z,
        max_orthogonality_z,
        conditional_z,
        conditional_ratio,
    })
}

/// Which inequality a ratio row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Inequality {
    Rosenthal,
    Burkholder,
}

impl Inequality {
    pub fn tag(self) -> &'static str {
        match self {
            Inequality::Rosenthal => "rosenthal",
            Inequality::Burkholder => "burkholder",
        }
    }
}

/// Coefficient families of the ratio scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoefficientFamily {
    /// `a = e₁`, or the single entry `a_21 = 1` for bilinear forms.
    SingleCoordinate,
    /// `a_j = 1/√N`, or `a_jk = 1/N` off the diagonal.
    Uniform,
    /// Complex Gaussian direction normalized to unit norm.
    RandomUnitNorm,
    /// `𝒢/√N` at `θ = 2 + 0.5i` with the diagonal removed (bilinear only).
    Resolvent,
}

impl CoefficientFamily {
    pub const ALL: [CoefficientFamily; 4] = [
        CoefficientFamily::SingleCoordinate,
        CoefficientFamily::Uniform,
        CoefficientFamily::RandomUnitNorm,
        CoefficientFamily::Resolvent,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            CoefficientFamily::SingleCoordinate => "single",
            CoefficientFamily::Uniform => "uniform",
            CoefficientFamily::RandomUnitNorm => "random-unit",
            CoefficientFamily::Resolvent => "resolvent",
        }
    }

    /// Linear coefficients; `None` for families without a linear form.
    pub fn vector(self, n: usize, seed: u64) -> Option<Vec<Complex64>> {
        match self {
            CoefficientFamily::SingleCoordinate => {
                let mut v = vec![ZERO; n];
                v[0] = Complex64::new(1.0, 0.0);
                Some(v)
            }
            CoefficientFamily::Uniform => Some(vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n]),
            CoefficientFamily::RandomUnitNorm => {
                let mut rng = rng_from_seed(replica_seed(seed, 0xC0EF));
                let v: Vec<Complex64> = (0..n)
                    .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                    .collect();
                let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
                Some(v.into_iter().map(|c| c / norm).collect())
            }
            CoefficientFamily::Resolvent => None,
        }
    }

    /// Zero-diagonal bilinear coefficients.
    pub fn matrix(self, n: usize, seed: u64) -> Result<CMat> {
        if n < 2 {
            return Err(Error::invalid("bilinear forms need N ≥ 2"));
        }
        Ok(match self {
            CoefficientFamily::SingleCoordinate => {
                let mut a = CMat::zeros(n, n);
                a[(1, 0)] = Complex64::new(1.0, 0.0);
                a
            }
            CoefficientFamily::Uniform => {
                let w = Complex64::new(1.0 / n as f64, 0.0);
                CMat::from_fn(n, n, |i, j| if i == j { ZERO } else { w })
            }
            CoefficientFamily::RandomUnitNorm => {
                let mut rng = rng_from_seed(replica_seed(seed, 0xC0EF_0002));
                let mut a = CMat::from_fn(n, n, |i, j| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    if i == j {
                        ZERO
                    } else {
                        Complex64::new(re, im)
                    }
                });
                let norm = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .map(|(i, j)| a[(i, j)].norm_sqr())
                    .sum::<f64>()
                    .sqrt();
                for i in 0..n {
                    for j in 0..n {
                        a[(i, j)] /= norm;
                    }
                }
                a
            }
            CoefficientFamily::Resolvent => {
                let x = sample_matrix(n, EntryDistribution::gaussian().with_truncation(2.0), replica_seed(seed, 0x6EE5))?;
                let (g, _) = resolvent_curly(&x, SpectralPoint::new(2.0, 0.5), &IndexSets::empty())?;
                let s = 1.0 / (n as f64).sqrt();
                CMat::from_fn(n, n, |i, j| if i == j { ZERO } else { g[(i, j)] * s })
            }
        })
    }
}

/// One entry of the ratio table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub inequality: Inequality,
    pub p: u32,
    #[serde(rename = "N")]
    pub n: usize,
    pub family: String,
    pub dist: String,
    pub ratio: f64,
    pub stderr: f64,
    /// Monte-Carlo estimate of the left side.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Constant-free right side.
    pub rhs: f64,
}

/// Settings of [`inequality_ratio_scan`].
#[derive(Debug, Clone, PartialEq)]
pub struct RatioScanSettings {
    pub orders: Vec<u32>,
    pub n: usize,
    pub dist: EntryDistribution,
    pub families: Vec<CoefficientFamily>,
    pub n_samples: usize,
    pub seed: u64,
}

fn validate_orders(orders: &[u32]) -> Result<()> {
    if orders.is_empty() {
        return Err(Error::invalid("no moment orders given"));
    }
    if let Some(p) = orders.iter().find(|p| **p % 2 != 0 || **p < 2 || **p > 8) {
        return Err(Error::invalid(format!("moment order {p} must be even and in [2, 8]")));
    }
    Ok(())
}

/// Per-sample quantities shared by all orders.
struct RosenthalSample {
    modulus: f64,
    entry_moduli: Vec<f64>,
}

struct BurkholderSample {
    q: f64,
    s2: f64,
    s2_hat: f64,
    prefix: Vec<f64>,
    prefix_hat: Vec<f64>,
    entry_moduli: Vec<f64>,
}

fn empirical_moment(moduli: impl Iterator<Item = f64>, p: u32) -> f64 {
    let mut count = 0usize;
    let mut sum = 0.0;
    for m in moduli {
        sum += m.powi(p as i32);
        count += 1;
    }
    sum / count as f64
}

fn p_pow(p: u32) -> f64 {
    (p as f64).powi(p as i32)
}

/// Stripped Rosenthal and Burkholder ratios for every order and family.
///
/// The moment `μ_p` on the right side is the empirical `E|x|^p` of the
/// entries drawn for the same table.
pub fn inequality_ratio_scan(settings: &RatioScanSettings) -> Result<Vec<RatioRow>> {
    validate_orders(&settings.orders)?;
    if settings.n_samples < 2 {
        return Err(Error::invalid("ratio scan needs at least two samples"));
    }
    let n = settings.n;
    let law = settings.dist.component_law(n.max(2))?;
    let dist = settings.dist.tag().to_string();
    let batches = settings.n_samples.div_ceil(BATCH);
    let mut rows = Vec::new();

    for (fi, &family) in settings.families.iter().enumerate() {
        let family_seed = replica_seed(settings.seed, fi as u64);
        if let Some(a) = family.vector(n, family_seed) {
            let samples: Vec<RosenthalSample> = (0..batches)
                .into_par_iter()
                .flat_map_iter(|b| {
                    let mut rng = rng_from_seed(replica_seed(family_seed, 0x5253_0000 + b as u64));
                    let count = BATCH.min(settings.n_samples - b * BATCH);
                    let (law, a) = (&law, &a);
                    (0..count)
                        .map(|_| {
                            let x = sample_vector(law, n, &mut rng);
                            let s: Complex64 = a.iter().zip(&x).map(|(c, v)| c * v).sum();
                            RosenthalSample {
                                modulus: s.norm(),
                                entry_moduli: x.iter().map(|v| v.norm()).collect(),
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            let norm2: f64 = a.iter().map(|c| c.norm_sqr()).sum();
            for &p in &settings.orders {
                let mu = empirical_moment(samples.iter().flat_map(|s| s.entry_moduli.iter().copied()), p);
                let lhs = stats::mean(&samples.iter().map(|s| s.modulus.powi(p as i32)).collect::<Vec<_>>());
                let sum_p: f64 = a.iter().map(|c| c.norm().powi(p as i32)).sum();
                let rhs = p_pow(p) * (norm2.powf(p as f64 / 2.0) + mu * sum_p);
                rows.push(RatioRow {
                    inequality: Inequality::Rosenthal,
                    p,
                    n,
                    family: family.tag().to_string(),
                    dist: dist.clone(),
                    ratio: lhs.value / rhs,
                    stderr: lhs.stderr / rhs,
                    lhs: lhs.value,
                    lhs_stderr: lhs.stderr,
                    rhs,
                });
            }
        }

        let a = family.matrix(n, family_seed)?;
        let samples: Vec<BurkholderSample> = (0..batches)
            .into_par_iter()
            .flat_map_iter(|b| {
                let mut rng = rng_from_seed(replica_seed(family_seed, 0x4255_0000 + b as u64));
                let count = BATCH.min(settings.n_samples - b * BATCH);
                let (law, a) = (&law, &a);
                (0..count)
                    .map(|_| {
                        let x = sample_vector(law, n, &mut rng);
                        let mut q = ZERO;
                        let mut prefix = Vec::with_capacity(n);
                        let mut prefix_hat = Vec::with_capacity(n);
                        for j in 0..n {
                            let mut u = ZERO;
                            let mut v = ZERO;
                            for k in 0..j {
                                u += a[(j, k)] * x[k].conj();
                                v += a[(k, j)] * x[k];
                            }
                            q += x[j] * u + x[j].conj() * v;
                            prefix.push(u.norm());
                            prefix_hat.push(v.norm());
                        }
                        BurkholderSample {
                            q: q.norm(),
                            s2: prefix.iter().map(|v| v * v).sum(),
                            s2_hat: prefix_hat.iter().map(|v| v * v).sum(),
                            prefix,
                            prefix_hat,
                            entry_moduli: x.iter().map(|v| v.norm()).collect(),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let count = samples.len() as f64;
        for &p in &settings.orders {
            let pi = p as i32;
            let half = p as f64 / 2.0;
            let mu = empirical_moment(samples.iter().flat_map(|s| s.entry_moduli.iter().copied()), p);
            let lhs = stats::mean(&samples.iter().map(|s| s.q.powi(pi)).collect::<Vec<_>>());
            let mean_of = |f: &dyn Fn(&BurkholderSample) -> f64| samples.iter().map(f).sum::<f64>() / count;
            let square = mean_of(&|s| s.s2.powf(half)) + mu * mean_of(&|s| s.prefix.iter().map(|v| v.powi(pi)).sum());
            let square_hat =
                mean_of(&|s| s.s2_hat.powf(half)) + mu * mean_of(&|s| s.prefix_hat.iter().map(|v| v.powi(pi)).sum());
            let rhs = p_pow(p) * (square + square_hat);
            rows.push(RatioRow {
                inequality: Inequality::Burkholder,
                p,
                n,
                family: family.tag().to_string(),
                dist: dist.clone(),
                ratio: lhs.value / rhs,
                stderr: lhs.stderr / rhs,
                lhs: lhs.value,
                lhs_stderr: lhs.stderr,
                rhs,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coefficients_give_zero_terms() {
        let a = CMat::zeros(4, 4);
        let x = vec![Complex64::new(1.0, -2.0); 4];
        let d = MartingaleDecomposition::new(&a, &x);
        assert!(d.xi.iter().chain(&d.xi_hat).all(|v| *v == ZERO));
        assert_eq!(d.q, ZERO);
    }

    #[test]
    fn decomposition_is_exact() {
        let a = CMat::from_fn(5, 5, |i, j| {
            if i == j {
                ZERO
            } else {
                Complex64::new(i as f64 - 0.3 * j as f64, 0.1 * (i * j) as f64)
            }
        });
        let x: Vec<Complex64> = (0..5).map(|i| Complex64::new(0.5 * i as f64 - 1.0, 1.0 / (i + 1) as f64)).collect();
        assert!(MartingaleDecomposition::new(&a, &x).residual() < 1e-13);
    }

    #[test]
    fn nonzero_diagonal_and_odd_orders_rejected() {
        let a = CMat::from_fn(3, 3, |i, j| if i == j { Complex64::new(1.0, 0.0) } else { ZERO });
        assert!(martingale_decomposition_check(&a, EntryDistribution::gaussian(), MIN_SAMPLES, 1).is_err());
        assert!(validate_orders(&[3]).is_err());
        assert!(validate_orders(&[10]).is_err());
        assert!(validate_orders(&[2, 4, 8]).is_ok());
    }
}
