//! The run configuration: one JSON document, every field defaulted.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use padic_heat::cauchy::SchwartzBruhat;
use padic_heat::markov::SamplerConfig;
use padic_heat::padic::DEFAULT_MAX_POINTS;
use padic_heat::symbol::DEFAULT_DEPTH_CAP;
use padic_heat::{Ball, HomogeneousPolynomial, KernelConfig, PAdicVector, Prime};
use serde::{Deserialize, Serialize};

pub const MAX_POINTS_ENV: &str = "PADIC_HEAT_MAX_POINTS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub symbol: SymbolConfig,
    /// Exponent of the operator, `β > 0`.
    pub beta: f64,
    pub times: Vec<f64>,
    /// Explicit space grid; each point is one digit string per coordinate.
    pub points: Option<Vec<Vec<String>>>,
    /// Space grid of residue representatives of a ball, used when `points`
    /// is absent. Defaults to `Z_p^n` modulo `p`.
    pub ball_grid: Option<BallGrid>,
    pub tol: f64,
    pub seed: u64,
    /// Worker threads; absent means one per core.
    pub jobs: Option<usize>,
    pub caps: Caps,
    /// Initial datum as disjoint weighted ball indicators.
    pub initial_data: Vec<AtomConfig>,
    /// File holding the initial datum; replaces `initial_data`.
    pub initial_data_path: Option<PathBuf>,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            symbol: SymbolConfig::default(),
            beta: 1.0,
            times: vec![1.0],
            points: None,
            ball_grid: None,
            tol: 1e-9,
            seed: 0,
            jobs: None,
            caps: Caps::default(),
            initial_data: Vec::new(),
            initial_data_path: None,
            simulate: SimulateConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// `f = Σ coefficient·ξ^exponents`; defaults to `f = ξ` over `Q_2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolConfig {
    pub prime: u64,
    pub dim: usize,
    pub degree: u32,
    pub terms: Vec<TermConfig>,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        SymbolConfig {
            prime: 2,
            dim: 1,
            degree: 1,
            terms: vec![TermConfig {
                exponents: vec![1],
                coefficient: 1,
            }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub exponents: Vec<u32>,
    pub coefficient: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BallGrid {
    pub center: Option<Vec<String>>,
    pub radius_exponent: i64,
    /// Representatives of the sub-balls of radius `p^{radius_exponent - depth}`.
    pub depth: u32,
}

impl Default for BallGrid {
    fn default() -> Self {
        BallGrid {
            center: None,
            radius_exponent: 0,
            depth: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Caps {
    /// Largest residue enumeration; overridden by `PADIC_HEAT_MAX_POINTS`.
    pub max_points: u64,
    pub depth_cap: u32,
    pub max_shells: u32,
    pub cache_capacity: usize,
}

impl Default for Caps {
    fn default() -> Self {
        let k = KernelConfig::default();
        Caps {
            max_points: DEFAULT_MAX_POINTS,
            depth_cap: DEFAULT_DEPTH_CAP,
            max_shells: k.max_shells,
            cache_capacity: k.cache_capacity,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub center: Vec<String>,
    pub radius_exponent: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Start point; the origin when absent.
    pub start: Option<Vec<String>>,
    pub steps: usize,
    pub paths: usize,
    pub sampler: SamplerConfig,
    /// Innermost and outermost radius exponents of the occupancy partition
    /// about the start; chosen around the median radius when absent.
    pub histogram_radii: Option<(i64, i64)>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            start: None,
            steps: 10,
            paths: 1000,
            sampler: SamplerConfig::default(),
            histogram_radii: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Checks to run; all of them when empty.
    pub checks: Vec<String>,
    pub samples: usize,
    pub corrupt_certificate: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            checks: Vec::new(),
            samples: 100_000,
            corrupt_certificate: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            format: Format::Both,
        }
    }
}

/// Parses a JSON document, naming the offending field and its position.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow!("{origin}: field `{path}`: {}", e.inner())
    })
}

impl ProblemConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_json(&text, &p.display().to_string())?
            }
            None => ProblemConfig::default(),
        };
        if let Ok(v) = std::env::var(MAX_POINTS_ENV) {
            cfg.caps.max_points = v
                .trim()
                .parse()
                .map_err(|_| anyhow!("{MAX_POINTS_ENV}: expected a positive integer, got `{v}`"))?;
        }
        Ok(cfg)
    }

    /// Makes implicit choices explicit so the emitted config reproduces the run.
    pub fn fill_defaults(&mut self) {
        if self.points.is_none() && self.ball_grid.is_none() {
            self.ball_grid = Some(BallGrid::default());
        }
        if let Some(g) = &mut self.ball_grid {
            if g.center.is_none() {
                g.center = Some(vec!["0;0".to_string(); self.symbol.dim]);
            }
        }
        if self.simulate.start.is_none() {
            self.simulate.start = Some(vec!["0;0".to_string(); self.symbol.dim]);
        }
    }

    pub fn prime(&self) -> Result<Prime> {
        Prime::new(self.symbol.prime).map_err(|e| anyhow!("symbol.prime: {e}"))
    }

    pub fn polynomial(&self) -> Result<HomogeneousPolynomial> {
        let s = &self.symbol;
        let terms = s.terms.iter().map(|t| (t.exponents.clone(), t.coefficient));
        HomogeneousPolynomial::new(self.prime()?, s.dim, s.degree, terms).map_err(|e| anyhow!("symbol.terms: {e}"))
    }

    pub fn kernel_config(&self) -> KernelConfig {
        KernelConfig {
            cache_capacity: self.caps.cache_capacity,
            max_shells: self.caps.max_shells,
            max_points: self.caps.max_points,
        }
    }

    fn vector(&self, digits: &[String], field: &str) -> Result<PAdicVector> {
        if digits.len() != self.symbol.dim {
            bail!("{field}: expected {} coordinates, got {}", self.symbol.dim, digits.len());
        }
        PAdicVector::parse_digit_strings(self.prime()?, digits).map_err(|e| anyhow!("{field}: {e}"))
    }

    pub fn space_grid(&self) -> Result<Vec<PAdicVector>> {
        let grid = match (&self.points, &self.ball_grid) {
            (Some(points), _) => points
                .iter()
                .enumerate()
                .map(|(i, p)| self.vector(p, &format!("points[{i}]")))
                .collect::<Result<Vec<_>>>()?,
            (None, Some(g)) => {
                let center = match &g.center {
                    Some(c) => self.vector(c, "ball_grid.center")?,
                    None => PAdicVector::zero(self.prime()?, self.symbol.dim),
                };
                Ball::new(center, g.radius_exponent)
                    .enumerate_residues(g.depth, self.caps.max_points)
                    .map_err(|e| anyhow!("ball_grid: {e}"))?
            }
            (None, None) => bail!("no space grid: set `points` or `ball_grid`"),
        };
        if grid.is_empty() {
            bail!("points: the space grid is empty");
        }
        Ok(grid)
    }

    /// Times, all strictly positive unless `allow_zero`.
    pub fn time_grid(&self, allow_zero: bool) -> Result<Vec<f64>> {
        if self.times.is_empty() {
            bail!("times: the time grid is empty");
        }
        for (i, &t) in self.times.iter().enumerate() {
            let ok = t.is_finite() && (t > 0.0 || (allow_zero && t == 0.0));
            if !ok {
                bail!("times[{i}]: t = {t} is not allowed; the heat kernel requires t > 0");
            }
        }
        Ok(self.times.clone())
    }

    pub fn start(&self) -> Result<PAdicVector> {
        match &self.simulate.start {
            Some(s) => self.vector(s, "simulate.start"),
            None => Ok(PAdicVector::zero(self.prime()?, self.symbol.dim)),
        }
    }

    pub fn datum(&self) -> Result<SchwartzBruhat> {
        let (atoms, origin) = match &self.initial_data_path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                (parse_json::<Vec<AtomConfig>>(&text, &p.display().to_string())?, "initial data")
            }
            None => (self.initial_data.clone(), "initial_data"),
        };
        let atoms = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let c = self.vector(&a.center, &format!("{origin}[{i}].center"))?;
                Ok((Ball::new(c, a.radius_exponent), Complex64::new(a.re, a.im)))
            })
            .collect::<Result<Vec<_>>>()?;
        SchwartzBruhat::normalize(atoms).map_err(|e| anyhow!("{origin}: {e}"))
    }
}
