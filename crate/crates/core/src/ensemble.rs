//! Reproducible generation of truncated complex random matrices.
//!
//! Entries have independent real and imaginary parts, each symmetric with
//! variance 1/2, and complex modulus at most `D·N^{1/4}`. Each component is
//! drawn from its base law conditioned on `|component| ≤ t` and then
//! rescaled by the analytic standard deviation of that conditional law, with
//! `t` chosen so that the rescaled box corner sits exactly on the modulus
//! bound.
//!
//! Replica streams come from [`replica_seed`], a fixed splitmix64-based hash
//! of the master seed and the replica index, and every stream is a ChaCha20
//! generator keyed by [`rng_from_seed`]. Both functions are part of the
//! stable output contract.

use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Smallest modulus bound reachable by a symmetric continuous component law
/// with variance 1/2: the uniform law on `[−√(3/2), √(3/2)]`, whose box
/// corner has modulus `√3`.
pub const CONTINUOUS_MODULUS_FLOOR: f64 = 1.732_050_807_568_877_2;

const DUMP_MAGIC: &[u8; 8] = b"MPLABMX\0";
const DUMP_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistributionKind {
    ComplexGaussian,
    ComplexRademacher,
    TruncatedHeavyTail,
}

impl DistributionKind {
    pub fn tag(self) -> &'static str {
        match self {
            DistributionKind::ComplexGaussian => "complex-gaussian",
            DistributionKind::ComplexRademacher => "complex-rademacher",
            DistributionKind::TruncatedHeavyTail => "truncated-heavy-tail",
        }
    }

    fn code(self) -> u8 {
        match self {
            DistributionKind::ComplexGaussian => 0,
            DistributionKind::ComplexRademacher => 1,
            DistributionKind::TruncatedHeavyTail => 2,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DistributionKind::ComplexGaussian),
            1 => Some(DistributionKind::ComplexRademacher),
            2 => Some(DistributionKind::TruncatedHeavyTail),
            _ => None,
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for DistributionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "complex-gaussian" | "gaussian" => Ok(DistributionKind::ComplexGaussian),
            "complex-rademacher" | "rademacher" => Ok(DistributionKind::ComplexRademacher),
            "truncated-heavy-tail" | "heavy-tail" => Ok(DistributionKind::TruncatedHeavyTail),
            other => Err(Error::invalid(format!("unknown distribution '{other}'"))),
        }
    }
}

/// Entry law: kind, heavy-tail index and truncation constant `D`.
///
/// The heavy-tailed kind is a symmetrized Lomax law with
/// `P(|Y| > y) = (1 + y/λ)^{−α}`; for `4 < α ≤ 8` its fourth moment is finite
/// and its eighth is not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryDistribution {
    pub kind: DistributionKind,
    pub tail_index: f64,
    pub truncation: f64,
}

impl Default for EntryDistribution {
    fn default() -> Self {
        Self::gaussian()
    }
}

impl EntryDistribution {
    pub const DEFAULT_TAIL_INDEX: f64 = 6.0;

    pub fn gaussian() -> Self {
        Self {
            kind: DistributionKind::ComplexGaussian,
            tail_index: Self::DEFAULT_TAIL_INDEX,
            truncation: 1.0,
        }
    }

    pub fn rademacher() -> Self {
        Self {
            kind: DistributionKind::ComplexRademacher,
            ..Self::gaussian()
        }
    }

    pub fn heavy_tail(alpha: f64) -> Self {
        Self {
            kind: DistributionKind::TruncatedHeavyTail,
            tail_index: alpha,
            truncation: 1.0,
        }
    }

    pub fn of_kind(kind: DistributionKind) -> Self {
        Self {
            kind,
            ..Self::gaussian()
        }
    }

    pub fn with_truncation(mut self, d: f64) -> Self {
        self.truncation = d;
        self
    }

    pub fn tag(&self) -> &'static str {
        self.kind.tag()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.truncation.is_finite() && self.truncation > 0.0) {
            return Err(Error::invalid(format!(
                "truncation constant D must be positive, got {}",
                self.truncation
            )));
        }
        if self.kind == DistributionKind::TruncatedHeavyTail
            && !(self.tail_index > 4.0 && self.tail_index <= 8.0)
        {
            return Err(Error::invalid(format!(
                "heavy-tail index must lie in (4, 8], got {}",
                self.tail_index
            )));
        }
        Ok(())
    }

    /// The modulus bound `D·N^{1/4}`.
    pub fn modulus_bound(&self, n: usize) -> f64 {
        self.truncation * (n as f64).powf(0.25)
    }

    /// Truncation level and standardization for matrices of size `n`.
    pub fn component_law(&self, n: usize) -> Result<ComponentLaw> {
        self.validate()?;
        let bound = self.modulus_bound(n);
        match self.kind {
            DistributionKind::ComplexRademacher => {
                if bound < 1.0 {
                    return Err(Error::invalid(format!(
                        "Rademacher entries have modulus 1 but D·N^(1/4) = {bound}"
                    )));
                }
                Ok(ComponentLaw {
                    kind: self.kind,
                    level: 1.0,
                    scale: std::f64::consts::FRAC_1_SQRT_2,
                    lomax_scale: 1.0,
                    alpha: self.tail_index,
                    kept_mass: 1.0,
                    raw_variance: 1.0,
                    fourth_moment: 1.0,
                })
            }
            DistributionKind::ComplexGaussian | DistributionKind::TruncatedHeavyTail => {
                if bound <= CONTINUOUS_MODULUS_FLOOR * (1.0 + 1e-9) {
                    return Err(Error::invalid(format!(
                        "D·N^(1/4) = {bound:.6} is below {CONTINUOUS_MODULUS_FLOOR:.6}, the smallest \
                         modulus bound a variance-1/2 continuous component law can meet; raise D"
                    )));
                }
                let base = BaseLaw::new(self.kind, self.tail_index);
                let level = solve_level(&base, bound);
                let (mass, m2, m4) = base.truncated_moments(level);
                Ok(ComponentLaw {
                    kind: self.kind,
                    level,
                    scale: 1.0 / (2.0 * m2).sqrt(),
                    lomax_scale: base.lomax_scale,
                    alpha: self.tail_index,
                    kept_mass: mass,
                    raw_variance: m2,
                    fourth_moment: m4 / (2.0 * m2 * m2) + 0.5,
                })
            }
        }
    }
}

impl fmt::Display for EntryDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A component law after truncation and standardization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentLaw {
    pub kind: DistributionKind,
    /// Truncation level `t` applied to the unit-variance base component.
    pub level: f64,
    /// Factor mapping a truncated base component to variance 1/2.
    pub scale: f64,
    lomax_scale: f64,
    alpha: f64,
    kept_mass: f64,
    /// Variance of the base component conditioned on `|Y| ≤ t`.
    pub raw_variance: f64,
    /// `E|x|⁴` of the standardized complex entry.
    pub fourth_moment: f64,
}

impl ComponentLaw {
    /// Largest possible entry modulus.
    pub fn max_modulus(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.level * self.scale
    }

    fn component<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            DistributionKind::ComplexRademacher => {
                if rng.random::<bool>() {
                    self.scale
                } else {
                    -self.scale
                }
            }
            DistributionKind::ComplexGaussian => loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= self.level {
                    return z * self.scale;
                }
            },
            DistributionKind::TruncatedHeavyTail => {
                let u: f64 = rng.random::<f64>() * self.kept_mass;
                let magnitude = self.lomax_scale * ((1.0 - u).powf(-1.0 / self.alpha) - 1.0);
                let magnitude = magnitude.min(self.level);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * magnitude * self.scale
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let re = self.component(rng);
        let im = self.component(rng);
        Complex64::new(re, im)
    }
}

/// Unit-variance base laws before truncation.
struct BaseLaw {
    kind: DistributionKind,
    alpha: f64,
    lomax_scale: f64,
}

impl BaseLaw {
    fn new(kind: DistributionKind, alpha: f64) -> Self {
        // Var of the symmetrized Lomax(α, λ) is 2λ²/((α−1)(α−2))
        let lomax_scale = ((alpha - 1.0) * (alpha - 2.0) / 2.0).sqrt();
        Self {
            kind,
            alpha,
            lomax_scale,
        }
    }

    /// `(P(|Y| ≤ t), E[Y² | |Y| ≤ t], E[Y⁴ | |Y| ≤ t])`.
    fn truncated_moments(&self, t: f64) -> (f64, f64, f64) {
        match self.kind {
            DistributionKind::ComplexGaussian => {
                let mass = libm::erf(t / std::f64::consts::SQRT_2);
                let phi = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
                let m2 = (mass - 2.0 * t * phi) / mass;
                let m4 = (3.0 * mass - 2.0 * phi * (t * t * t + 3.0 * t)) / mass;
                (mass, m2, m4)
            }
            DistributionKind::TruncatedHeavyTail => {
                let lam = self.lomax_scale;
                let tau = t / lam;
                let mass = 1.0 - (1.0 + tau).powf(-self.alpha);
                let m2 = lam.powi(2) * lomax_partial_moment(self.alpha, 2, tau) / mass;
                let m4 = lam.powi(4) * lomax_partial_moment(self.alpha, 4, tau) / mass;
                (mass, m2, m4)
            }
            DistributionKind::ComplexRademacher => (1.0, 1.0, 1.0),
        }
    }

    /// Modulus of the standardized box corner, `t / √Var(t)`.
    fn corner(&self, t: f64) -> f64 {
        let (_, m2, _) = self.truncated_moments(t);
        t / m2.sqrt()
    }
}

/// `∫₀^τ y^k α(1+y)^{−α−1} dy` via `u = 1 + y` and the binomial expansion.
fn lomax_partial_moment(alpha: f64, k: u32, tau: f64) -> f64 {
    let upper = 1.0 + tau;
    let mut acc = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom = binom * f64::from(k - j + 1) / f64::from(j);
        }
        let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
        let e = f64::from(j) - alpha;
        acc += sign * binom * (upper.powf(e) - 1.0) / e;
    }
    alpha * acc
}

/// Finds `t` with `t/√Var(t) ≤ bound`, as large as possible.
fn solve_level(base: &BaseLaw, bound: f64) -> f64 {
    let mut lo = 1e-6_f64;
    let mut hi = bound;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if base.corner(mid) <= bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // leave room for rounding in the rescaled product
    lo * (1.0 - 1e-12)
}

/// One step of splitmix64.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replica `index` under `master`.
///
/// `mix(mix(master ⊕ 0x6A09E667F3BCC909) ⊕ index·0x9E3779B97F4A7C15)` where
/// `mix` is one splitmix64 step. Injective in `index` for a fixed master.
pub fn replica_seed(master: u64, index: u64) -> u64 {
    let mut s = master ^ 0x6A09_E667_F3BC_C909;
    let a = splitmix64(&mut s);
    let mut t = a ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    splitmix64(&mut t)
}

/// ChaCha20 keyed by four consecutive splitmix64 outputs of `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}

/// A square matrix realization with its provenance.
#[derive(Debug, Clone)]
pub struct MatrixSample {
    pub n: usize,
    /// `X` when `scaled` is false, `X_N = X/√N` otherwise.
    pub entries: CMat,
    pub seed: u64,
    pub distribution: EntryDistribution,
    pub scaled: bool,
}

impl MatrixSample {
    /// Wraps an explicit matrix; used for deterministic fixtures.
    pub fn from_entries(entries: CMat, scaled: bool) -> Result<Self> {
        let n = entries.nrows();
        if n != entries.ncols() || n == 0 {
            return Err(Error::invalid(format!(
                "matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(Self {
            n,
            entries,
            seed: 0,
            distribution: EntryDistribution::gaussian(),
            scaled,
        })
    }

    /// Entry `x_ij` of the unscaled matrix.
    pub fn raw(&self, i: usize, j: usize) -> Complex64 {
        if self.scaled {
            self.entries[(i, j)] * (self.n as f64).sqrt()
        } else {
            self.entries[(i, j)]
        }
    }

    /// Entry of `X_N = X/√N`.
    pub fn scaled_entry(&self, i: usize, j: usize) -> Complex64 {
        if self.scaled {
            self.entries[(i, j)]
        } else {
            self.entries[(i, j)] / (self.n as f64).sqrt()
        }
    }

    /// `X_N` restricted to the given rows and columns, in the given order.
    pub fn scaled_submatrix(&self, rows: &[usize], cols: &[usize]) -> CMat {
        CMat::from_fn(rows.len(), cols.len(), |i, j| self.scaled_entry(rows[i], cols[j]))
    }

    pub fn max_modulus(&self) -> f64 {
        let mut m = 0.0_f64;
        for j in 0..self.n {
            for i in 0..self.n {
                m = m.max(self.raw(i, j).norm());
            }
        }
        m
    }

    /// Writes the binary dump: magic, version, N, distribution tag and
    /// parameters, seed, scaled flag, then row-major interleaved re/im
    /// little-endian f64 values.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&DUMP_VERSION.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&[self.distribution.kind.code()])?;
        w.write_all(&self.distribution.tail_index.to_le_bytes())?;
        w.write_all(&self.distribution.truncation.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&[u8::from(self.scaled)])?;
        for i in 0..self.n {
            for j in 0..self.n {
                let z = self.entries[(i, j)];
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("not a matrix dump (bad magic)"));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != DUMP_VERSION {
            return Err(Error::invalid(format!("unsupported dump version {version}")));
        }
        let n = u64::from_le_bytes(read_array(&mut r)?) as usize;
        let [code] = read_array::<_, 1>(&mut r)?;
        let kind = DistributionKind::from_code(code)
            .ok_or_else(|| Error::invalid(format!("unknown distribution code {code}")))?;
        let tail_index = f64::from_le_bytes(read_array(&mut r)?);
        let truncation = f64::from_le_bytes(read_array(&mut r)?);
        let seed = u64::from_le_bytes(read_array(&mut r)?);
        let [scaled] = read_array::<_, 1>(&mut r)?;
        if n == 0 {
            return Err(Error::invalid("dump has N = 0"));
        }
        let mut entries = CMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let re = f64::from_le_bytes(read_array(&mut r)?);
                let im = f64::from_le_bytes(read_array(&mut r)?);
                entries[(i, j)] = Complex64::new(re, im);
            }
        }
        Ok(Self {
            n,
            entries,
            seed,
            distribution: EntryDistribution {
                kind,
                tail_index,
                truncation,
            },
            scaled: scaled != 0,
        })
    }
}

fn read_array<R: Read, const K: usize>(r: &mut R) -> Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Draws an unscaled `N×N` matrix, row by row, real part before imaginary.
pub fn sample_matrix(n: usize, dist: EntryDistribution, seed: u64) -> Result<MatrixSample> {
    if n < 2 {
        return Err(Error::invalid(format!("matrix size must be at least 2, got {n}")));
    }
    let law = dist.component_law(n)?;
    let mut rng = rng_from_seed(seed);
    let mut entries = CMat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            entries[(i, j)] = law.sample(&mut rng);
        }
    }
    Ok(MatrixSample {
        n,
        entries,
        seed,
        distribution: dist,
        scaled: false,
    })
}

/// Empirical second and fourth absolute moments of single entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub samples: usize,
    pub second_moment: f64,
    pub second_moment_stderr: f64,
    pub fourth_moment: f64,
    pub fourth_moment_stderr: f64,
    /// `E|x|⁴` of the truncated, standardized law.
    pub analytic_fourth_moment: f64,
    /// Set when `E|x|²` is more than five standard errors away from 1.
    pub variance_violation: bool,
}

/// Moments of entries drawn with the truncation level used at matrix size `n`.
pub fn moment_report(
    dist: EntryDistribution,
    n_samples: usize,
    seed: u64,
    n: usize,
) -> Result<MomentReport> {
    if n_samples < 10_000 {
        return Err(Error::invalid(format!(
            "moment report needs at least 10^4 samples, got {n_samples}"
        )));
    }
    let law = dist.component_law(n)?;
    let mut rng = rng_from_seed(seed);
    let (mut s2, mut s2sq, mut s4, mut s4sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n_samples {
        let a = law.sample(&mut rng).norm_sqr();
        let b = a * a;
        s2 += a;
        s2sq += a * a;
        s4 += b;
        s4sq += b * b;
    }
    let m = n_samples as f64;
    let stderr = |s: f64, sq: f64| {
        let mean = s / m;
        ((sq / m - mean * mean).max(0.0) / (m - 1.0)).sqrt()
    };
    let second = s2 / m;
    let second_se = stderr(s2, s2sq);
    let dev = (second - 1.0).abs();
    Ok(MomentReport {
        samples: n_samples,
        second_moment: second,
        second_moment_stderr: second_se,
        fourth_moment: s4 / m,
        fourth_moment_stderr: stderr(s4, s4sq),
        analytic_fourth_moment: law.fourth_moment,
        variance_violation: dev > 5.0 * second_se && dev > 1e-12,
    })
}
