//! Sectioned `key = value` experiment configuration.
//!
//! ```text
//! [experiment]
//! kind = law-scan
//! N = 256, 512
//! replicas = 50
//! seed = 7
//! out = results
//! workers = 4
//!
//! [distribution]
//! kind = gaussian
//! truncation = 1
//!
//! [grid]
//! E = 2, -0.5
//! eta = 20/N
//!
//! [domain]
//! c = 1
//! M = 1
//!
//! [calibration]
//! composite_c = 4
//!
//! [params]
//! tail_k = 5
//! ```
//!
//! `eta` is one of `0.5` (fixed), `20/N` (`c/N`) or `1*sqrt(E)/N`
//! (`M√E/N`). Comments start with `#`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::{DomainParams, SpectralPoint};
use crate::ensemble::{DistributionKind, EntryDistribution};
use crate::error::{Error, Result};

/// The experiments the runner knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Identities,
    Qf,
    LawScan,
    QRecursion,
    Pleijel,
    Counting,
    Rigidity,
    Inequalities,
    MpEval,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::Identities,
        ExperimentKind::Qf,
        ExperimentKind::LawScan,
        ExperimentKind::QRecursion,
        ExperimentKind::Pleijel,
        ExperimentKind::Counting,
        ExperimentKind::Rigidity,
        ExperimentKind::Inequalities,
        ExperimentKind::MpEval,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::Identities => "identities",
            ExperimentKind::Qf => "qf",
            ExperimentKind::LawScan => "law-scan",
            ExperimentKind::QRecursion => "q-recursion",
            ExperimentKind::Pleijel => "pleijel",
            ExperimentKind::Counting => "counting",
            ExperimentKind::Rigidity => "rigidity",
            ExperimentKind::Inequalities => "inequalities",
            ExperimentKind::MpEval => "mp-eval",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s.trim())
            .ok_or_else(|| Error::invalid(format!("unknown experiment kind '{s}'")))
    }
}

/// How η is chosen at each energy and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "kebab-case")]
pub enum EtaRule {
    Fixed(f64),
    /// `c/N`.
    OverN(f64),
    /// `M√E/N`, and `M/N` for `E ≤ 0`.
    SqrtEOverN(f64),
}

impl EtaRule {
    pub fn eta(&self, e: f64, n: usize) -> f64 {
        let nf = n as f64;
        match *self {
            EtaRule::Fixed(v) => v,
            EtaRule::OverN(c) => c / nf,
            EtaRule::SqrtEOverN(m) => {
                if e > 0.0 {
                    m * e.sqrt() / nf
                } else {
                    m / nf
                }
            }
        }
    }
}

impl fmt::Display for EtaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EtaRule::Fixed(v) => write!(f, "{v}"),
            EtaRule::OverN(c) => write!(f, "{c}/N"),
            EtaRule::SqrtEOverN(m) => write!(f, "{m}*sqrt(E)/N"),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("'{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::invalid(format!("'{}' is not finite", s.trim())));
    }
    Ok(v)
}

impl FromStr for EtaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let rule = if let Some(head) = compact.strip_suffix("/N") {
            if let Some(m) = head.strip_suffix("sqrt(E)") {
                let m = m.strip_suffix('*').unwrap_or(m);
                EtaRule::SqrtEOverN(if m.is_empty() { 1.0 } else { parse_f64(m)? })
            } else {
                EtaRule::OverN(parse_f64(head)?)
            }
        } else {
            EtaRule::Fixed(parse_f64(&compact)?)
        };
        let coef = match rule {
            EtaRule::Fixed(v) | EtaRule::OverN(v) | EtaRule::SqrtEOverN(v) => v,
        };
        if !(coef > 0.0) {
            return Err(Error::invalid(format!("η rule '{s}' must be positive")));
        }
        Ok(rule)
    }
}

/// Energies crossed with an η rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub energies: Vec<f64>,
    pub eta: EtaRule,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            energies: vec![2.0],
            eta: EtaRule::Fixed(1.0),
        }
    }
}

impl GridSpec {
    pub fn points(&self, n: usize) -> Vec<SpectralPoint> {
        self.energies.iter().map(|&e| SpectralPoint::new(e, self.eta.eta(e, n))).collect()
    }

    /// Parses `E=2,-0.5;eta=20/N`.
    pub fn parse_inline(s: &str) -> Result<Self> {
        let mut grid = GridSpec::default();
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("grid entry '{part}' lacks '='")))?;
            match key.trim() {
                "E" => grid.energies = parse_list(value, parse_f64)?,
                "eta" => grid.eta = value.parse()?,
                other => return Err(Error::invalid(format!("unknown grid key '{other}'"))),
            }
        }
        Ok(grid)
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(f).collect()
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("'{}' is not a non-negative integer", s.trim())))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::invalid(format!("'{}' is not a non-negative integer", s.trim())))
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(rename = "N")]
    pub ns: Vec<usize>,
    pub replicas: usize,
    pub distribution: EntryDistribution,
    pub seed: u64,
    pub grid: GridSpec,
    pub domain: DomainParams,
    /// Frozen calibration constants, by statistic.
    pub calibration: BTreeMap<String, f64>,
    /// Kind-specific parameters.
    pub params: BTreeMap<String, String>,
    pub out_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            ns: vec![64],
            replicas: 20,
            distribution: EntryDistribution::gaussian(),
            seed: 0,
            grid: GridSpec::default(),
            domain: DomainParams::default(),
            calibration: BTreeMap::new(),
            params: BTreeMap::new(),
            out_dir: PathBuf::from("results"),
            workers: 1,
        }
    }

    /// Parses the sectioned text format; errors carry the 1-based line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg: Option<ExperimentConfig> = None;
        let mut pending: Vec<(usize, String, String, String)> = Vec::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: line_no,
                    message: format!("unterminated section header '{line}'"),
                })?;
                section = name.trim().to_string();
                if !["experiment", "distribution", "grid", "domain", "calibration", "params"].contains(&section.as_str())
                {
                    return Err(Error::Config {
                        line: line_no,
                        message: format!("unknown section [{section}]"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if section.is_empty() {
                return Err(Error::Config {
                    line: line_no,
                    message: format!("key '{key}' appears before any section"),
                });
            }
            if section == "experiment" && key == "kind" {
                let kind = value.parse().map_err(|e: Error| Error::Config {
                    line: line_no,
                    message: e.to_string(),
                })?;
                match cfg.as_mut() {
                    Some(c) => c.kind = kind,
                    None => cfg = Some(ExperimentConfig::new(kind)),
                }
            } else {
                pending.push((line_no, section.clone(), key, value));
            }
        }
        let mut cfg = cfg.ok_or(Error::Config {
            line: 0,
            message: "missing 'kind' in [experiment]".to_string(),
        })?;
        let mut dist_kind = cfg.distribution.kind;
        let mut tail = cfg.distribution.tail_index;
        let mut trunc = cfg.distribution.truncation;
        for (line, section, key, value) in pending {
            let wrap = |e: Error| Error::Config {
                line,
                message: format!("{section}.{key}: {e}"),
            };
            match (section.as_str(), key.as_str()) {
                ("experiment", "N") => cfg.ns = parse_list(&value, parse_usize).map_err(wrap)?,
                ("experiment", "replicas") => cfg.replicas = parse_usize(&value).map_err(wrap)?,
                ("experiment", "seed") => cfg.seed = parse_u64(&value).map_err(wrap)?,
                ("experiment", "out") => cfg.out_dir = PathBuf::from(value),
                ("experiment", "workers") => cfg.workers = parse_usize(&value).map_err(wrap)?,
                ("distribution", "kind") => dist_kind = value.parse::<DistributionKind>().map_err(wrap)?,
                ("distribution", "tail_index") => tail = parse_f64(&value).map_err(wrap)?,
                ("distribution", "truncation") => trunc = parse_f64(&value).map_err(wrap)?,
                ("grid", "E") => cfg.grid.energies = parse_list(&value, parse_f64).map_err(wrap)?,
                ("grid", "eta") => cfg.grid.eta = value.parse().map_err(wrap)?,
                ("domain", "c") => cfg.domain.c = parse_f64(&value).map_err(wrap)?,
                ("domain", "M") => cfg.domain.m = parse_f64(&value).map_err(wrap)?,
                ("calibration", name) => {
                    cfg.calibration.insert(name.to_string(), parse_f64(&value).map_err(wrap)?);
                }
                ("params", name) => {
                    cfg.params.insert(name.to_string(), value);
                }
                _ => {
                    return Err(Error::Config {
                        line,
                        message: format!("unknown key '{key}' in [{section}]"),
                    })
                }
            }
        }
        cfg.distribution = EntryDistribution {
            kind: dist_kind,
            tail_index: tail,
            truncation: trunc,
        };
        Ok(cfg)
    }

    /// The text form accepted by [`ExperimentConfig::parse`].
    pub fn to_text(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        let mut out = String::new();
        out.push_str("[experiment]\n");
        out.push_str(&format!("kind = {}\n", self.kind));
        out.push_str(&format!("N = {}\n", list(&self.ns.iter().map(|n| n.to_string()).collect::<Vec<_>>())));
        out.push_str(&format!("replicas = {}\n", self.replicas));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("out = {}\n", self.out_dir.display()));
        out.push_str(&format!("workers = {}\n\n", self.workers));
        out.push_str("[distribution]\n");
        out.push_str(&format!("kind = {}\n", self.distribution.kind));
        out.push_str(&format!("tail_index = {:?}\n", self.distribution.tail_index));
        out.push_str(&format!("truncation = {:?}\n\n", self.distribution.truncation));
        out.push_str("[grid]\n");
        out.push_str(&format!(
            "E = {}\n",
            list(&self.grid.energies.iter().map(|e| format!("{e:?}")).collect::<Vec<_>>())
        ));
        out.push_str(&format!("eta = {}\n\n", self.grid.eta));
        out.push_str("[domain]\n");
        out.push_str(&format!("c = {:?}\nM = {:?}\n", self.domain.c, self.domain.m));
        if !self.calibration.is_empty() {
            out.push_str("\n[calibration]\n");
            for (k, v) in &self.calibration {
                out.push_str(&format!("{k} = {v:?}\n"));
            }
        }
        if !self.params.is_empty() {
            out.push_str("\n[params]\n");
            for (k, v) in &self.params {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    /// Checks values that parse but cannot be run.
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(Error::invalid("empty N list"));
        }
        if let Some(n) = self.ns.iter().find(|n| **n < 2) {
            return Err(Error::invalid(format!("N = {n} is too small")));
        }
        if self.replicas == 0 {
            return Err(Error::invalid("zero replicas"));
        }
        if self.workers == 0 {
            return Err(Error::invalid("worker count must be positive"));
        }
        if self.grid.energies.is_empty() && self.kind != ExperimentKind::Rigidity && self.kind != ExperimentKind::Inequalities {
            return Err(Error::invalid("empty E grid"));
        }
        if self.grid.energies.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("non-finite energy in grid"));
        }
        DomainParams::new(self.domain.c, self.domain.m)?;
        self.distribution.validate()?;
        for n in &self.ns {
            self.distribution.component_law(*n)?;
        }
        Ok(())
    }

    pub fn param_f64(&self, key: &str, default: f64) -> Result<f64> {
        self.params.get(key).map_or(Ok(default), |v| {
            parse_f64(v).map_err(|e| Error::invalid(format!("params.{key}: {e}")))
        })
    }

    pub fn param_usize(&self, key: &str, default: usize) -> Result<usize> {
        self.params.get(key).map_or(Ok(default), |v| {
            parse_usize(v).map_err(|e| Error::invalid(format!("params.{key}: {e}")))
        })
    }

    pub fn param_list_u32(&self, key: &str, default: &[u32]) -> Result<Vec<u32>> {
        match self.params.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => parse_list(v, |s| {
                s.parse::<u32>().map_err(|_| Error::invalid(format!("params.{key}: '{s}' is not an integer")))
            }),
        }
    }

    pub fn calibration_or(&self, key: &str, default: f64) -> f64 {
        self.calibration.get(key).copied().unwrap_or(default)
    }
}
