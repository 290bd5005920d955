use std::fs;
use std::path::{Path, PathBuf};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};
use ultrawalk::transforms::Table1;
use ultrawalk::{CoefficientSequence, DecayTarget, Family, Model, Tower, TowerKind};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Coefficients given inline or as a path to a JSON family document.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    File { file: PathBuf },
    Inline(Family),
}

impl<'de> Deserialize<'de> for CoefficientSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(d)?;
        if let Some(file) = value.get("file") {
            let file = file.as_str().ok_or_else(|| D::Error::custom("coefficients.file must be a string"))?;
            return Ok(CoefficientSpec::File { file: file.into() });
        }
        Family::deserialize(value).map(CoefficientSpec::Inline).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl LogGrid {
    pub const fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        ultrawalk::numeric::log_grid(self.lo, self.hi, self.points)
    }

    fn check(&self, name: &str) -> Result<(), CliError> {
        if !(self.lo > 0.0 && self.hi >= self.lo && self.hi.is_finite()) || self.points == 0 {
            return Err(CliError::Config(format!("grids.{name} needs 0 < lo <= hi < ∞ and points >= 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    #[default]
    Fast,
    Slow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignSpec {
    pub mode: DesignMode,
    pub target: DecayTarget,
    pub n: Vec<f64>,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self { mode: DesignMode::Fast, target: DecayTarget::LogPower { beta: 1.0 }, n: vec![1e2, 1e3, 1e4, 1e5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformSpec {
    pub rate: Table1,
    pub x: LogGrid,
}

impl Default for TransformSpec {
    fn default() -> Self {
        Self { rate: Table1::InversePower { beta: 1.0 }, x: LogGrid::new(1.0, 1e6, 25) }
    }
}

/// Per-command grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    /// Times for `return` and `heat`.
    pub t: LogGrid,
    /// Levels for `spectrum`, `heat` radii and the profile knots.
    pub levels: usize,
    /// Volumes for `profile`.
    pub u: LogGrid,
    pub walks: u64,
    pub steps: Vec<usize>,
    pub walk_levels: usize,
    pub horizon: usize,
    pub design: DesignSpec,
    pub transform: TransformSpec,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            t: LogGrid::new(10.0, 1e6, 31),
            levels: 20,
            u: LogGrid::new(2.0, 1e6, 25),
            walks: 100_000,
            steps: vec![1, 2, 4, 8, 16],
            walk_levels: 5,
            horizon: 200,
            design: DesignSpec::default(),
            transform: TransformSpec::default(),
        }
    }
}

fn default_tower() -> TowerKind {
    TowerKind::PowersOfTwo
}

fn default_coefficients() -> CoefficientSpec {
    CoefficientSpec::Inline(Family::Geometric { q: 0.5 })
}

fn default_tol() -> f64 {
    ultrawalk::measure::DEFAULT_TOL
}

fn default_max_level() -> usize {
    ultrawalk::tower::DEFAULT_LEVEL_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_tower")]
    pub tower: TowerKind,
    #[serde(default = "default_coefficients")]
    pub coefficients: CoefficientSpec,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_level")]
    pub max_level: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub format: Format,
    #[serde(default)]
    pub grids: Grids,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tower: default_tower(),
            coefficients: default_coefficients(),
            tol: default_tol(),
            max_level: default_max_level(),
            seed: 0,
            format: Format::Csv,
            grids: Grids::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, ignoring the output format.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&Self { format: Format::Csv, ..self.clone() }).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(CliError::Config(format!("tol ∈ (0,1) required, got {}", self.tol)));
        }
        if self.max_level == 0 {
            return Err(CliError::Config("max_level >= 1 required".into()));
        }
        let g = &self.grids;
        g.t.check("t")?;
        g.u.check("u")?;
        g.transform.x.check("transform.x")?;
        if g.steps.is_empty() || g.steps.contains(&0) {
            return Err(CliError::Config("grids.steps must be a nonempty list of positive integers".into()));
        }
        if g.walks == 0 {
            return Err(CliError::Config("grids.walks >= 1 required".into()));
        }
        if g.design.n.iter().any(|n| !(*n > 1.0)) {
            return Err(CliError::Config("grids.design.n values must exceed 1".into()));
        }
        Ok(())
    }

    pub fn tower(&self) -> Result<Tower, CliError> {
        Ok(Tower::with_cap(self.tower.clone(), self.max_level)?)
    }

    pub fn family(&self) -> Result<Family, CliError> {
        match &self.coefficients {
            CoefficientSpec::Inline(f) => Ok(f.clone()),
            CoefficientSpec::File { file } => {
                let text =
                    fs::read_to_string(file).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))
            }
        }
    }

    pub fn model(&self) -> Result<Model, CliError> {
        let seq = CoefficientSequence::from_family(self.family()?)?;
        Ok(Model::new(self.tower()?, seq)?.with_tol(self.tol))
    }
}
