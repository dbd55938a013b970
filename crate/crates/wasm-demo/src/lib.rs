//! Browser front end for three views of one sampled matrix: the
//! eigenvalue histogram against the limit density, the Stieltjes transform
//! along a horizontal line, and the rigidity profile of the lower half of
//! the spectrum.
//!
//! Each view is a plain function returning a serializable struct; the
//! `#[wasm_bindgen]` wrappers hand JSON strings to the page.

use mplab::analytics::{classical_location, mp_density, mp_stieltjes, SpectralPoint};
use mplab::ensemble::{sample_matrix, DistributionKind, EntryDistribution};
use mplab::resolvent::{compute_spectrum, empirical_stieltjes, IndexSets, SpectrumSample};
use mplab::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest size the page may request; one dense eigensolve per call.
pub const MAX_N: usize = 1024;

fn spectrum(n: usize, dist: &str, seed: u64) -> Result<SpectrumSample> {
    if !(2..=MAX_N).contains(&n) {
        return Err(Error::InvalidArgument(format!("N must lie in 2..={MAX_N}, got {n}")));
    }
    let kind: DistributionKind = dist.parse()?;
    let mut law = EntryDistribution::of_kind(kind);
    if kind != DistributionKind::ComplexRademacher {
        law = law.with_truncation(2.0);
    }
    let x = sample_matrix(n, law, seed)?;
    compute_spectrum(&x, &IndexSets::empty())
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub n: usize,
    pub edges: Vec<f64>,
    /// Normalized so that the bars integrate to one.
    pub heights: Vec<f64>,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
}

/// Eigenvalue histogram on `[0, 4.5]` with the limit density at bin centers.
pub fn density_histogram(n: usize, dist: &str, seed: u64, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let s = spectrum(n, dist, seed)?;
    let (lo, hi) = (0.0, 4.5);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for &v in &s.eigenvalues {
        let idx = ((v - lo) / width).floor();
        if idx >= 0.0 && (idx as usize) < bins {
            counts[idx as usize] += 1;
        }
    }
    let heights = counts.iter().map(|&c| c as f64 / (n as f64 * width)).collect();
    let centers: Vec<f64> = (0..bins).map(|i| lo + width * (i as f64 + 0.5)).collect();
    let density = centers.iter().map(|&e| mp_density(e, 1.0)).collect::<Result<_>>()?;
    Ok(Histogram {
        n,
        edges,
        heights,
        centers,
        density,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StieltjesProfile {
    pub n: usize,
    pub eta: f64,
    pub energies: Vec<f64>,
    pub empirical_re: Vec<f64>,
    pub empirical_im: Vec<f64>,
    pub limit_re: Vec<f64>,
    pub limit_im: Vec<f64>,
    /// `Nη|Δ_N − Δ|`.
    pub scaled_fluctuation: Vec<f64>,
}

/// Empirical and limit Stieltjes transforms along `E + iη`, `E ∈ [e_min, e_max]`.
pub fn stieltjes_profile(
    n: usize,
    dist: &str,
    seed: u64,
    eta: f64,
    e_min: f64,
    e_max: f64,
    points: usize,
) -> Result<StieltjesProfile> {
    if !(eta > 0.0) || points < 2 || !(e_max > e_min) {
        return Err(Error::InvalidArgument("need η > 0, at least two points and e_max > e_min".into()));
    }
    let s = spectrum(n, dist, seed)?;
    let mut out = StieltjesProfile {
        n,
        eta,
        energies: Vec::with_capacity(points),
        empirical_re: Vec::with_capacity(points),
        empirical_im: Vec::with_capacity(points),
        limit_re: Vec::with_capacity(points),
        limit_im: Vec::with_capacity(points),
        scaled_fluctuation: Vec::with_capacity(points),
    };
    for i in 0..points {
        let e = e_min + (e_max - e_min) * i as f64 / (points - 1) as f64;
        let p = SpectralPoint::new(e, eta);
        let emp = empirical_stieltjes(&s, p)?;
        let lim = mp_stieltjes(p)?;
        out.energies.push(e);
        out.empirical_re.push(emp.re);
        out.empirical_im.push(emp.im);
        out.limit_re.push(lim.re);
        out.limit_im.push(lim.im);
        out.scaled_fluctuation.push(n as f64 * eta * (emp - lim).norm());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RigidityProfile {
    pub n: usize,
    /// 1-based indices `a ≤ N/2`.
    pub index: Vec<usize>,
    pub lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `|λ_a − γ_a|·N²/(a log N)`.
    pub stat_bulk: Vec<f64>,
}

pub fn rigidity_profile(n: usize, dist: &str, seed: u64) -> Result<RigidityProfile> {
    let s = spectrum(n, dist, seed)?;
    let nf = n as f64;
    let half = n / 2;
    let mut out = RigidityProfile {
        n,
        index: Vec::with_capacity(half),
        lambda: Vec::with_capacity(half),
        gamma: Vec::with_capacity(half),
        stat_bulk: Vec::with_capacity(half),
    };
    for a in 1..=half {
        let gamma = classical_location(a, n)?;
        let lambda = s.eigenvalues[a - 1];
        out.index.push(a);
        out.lambda.push(lambda);
        out.gamma.push(gamma);
        out.stat_bulk.push((lambda - gamma).abs() * nf * nf / (a as f64 * nf.ln()));
    }
    Ok(out)
}

fn to_js<T: Serialize>(r: Result<T>) -> std::result::Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = densityHistogram)]
pub fn density_histogram_js(n: usize, dist: &str, seed: u32, bins: usize) -> std::result::Result<String, JsError> {
    to_js(density_histogram(n, dist, seed as u64, bins))
}

#[wasm_bindgen(js_name = stieltjesProfile)]
pub fn stieltjes_profile_js(
    n: usize,
    dist: &str,
    seed: u32,
    eta: f64,
    e_min: f64,
    e_max: f64,
    points: usize,
) -> std::result::Result<String, JsError> {
    to_js(stieltjes_profile(n, dist, seed as u64, eta, e_min, e_max, points))
}

#[wasm_bindgen(js_name = rigidityProfile)]
pub fn rigidity_profile_js(n: usize, dist: &str, seed: u32) -> std::result::Result<String, JsError> {
    to_js(rigidity_profile(n, dist, seed as u64))
}
