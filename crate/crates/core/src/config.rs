//! TOML run configuration. Every section is optional and falls back to the
//! defaults below; `--set section.key=value` overrides are merged into the
//! parsed table before it is deserialized.

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::coalescent::Partition;
use crate::error::{Error, Result};
use crate::lambda::{LambdaSpec, SMHParams};
use crate::measures::DiscreteMeasure;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub replicas: usize,
    pub threads: Option<usize>,
    pub params: ParamsConfig,
    pub coalescent: CoalescentConfig,
    pub levy: LevyConfig,
    pub population: PopulationConfig,
    pub dual: DualConfig,
    pub lamperti: LampertiConfig,
    pub duality: DualityConfig,
    pub fv: FvConfig,
    pub generators: GeneratorsConfig,
    pub scaling: ScalingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            replicas: 1000,
            threads: None,
            params: ParamsConfig::default(),
            coalescent: CoalescentConfig::default(),
            levy: LevyConfig::default(),
            population: PopulationConfig::default(),
            dual: DualConfig::default(),
            lamperti: LampertiConfig::default(),
            duality: DualityConfig::default(),
            fv: FvConfig::default(),
            generators: GeneratorsConfig::default(),
            scaling: ScalingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub kappa: f64,
    pub sigma: f64,
    pub lambda: LambdaConfig,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            kappa: 0.0,
            sigma: 1.0,
            lambda: LambdaConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaKind {
    #[default]
    Zero,
    Atoms,
    Beta,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LambdaConfig {
    pub kind: LambdaKind,
    /// Mass of `Lambda` at 0.
    pub kingman: f64,
    /// `(zeta, mass)` pairs for `kind = "atoms"`.
    pub atoms: Vec<(f64, f64)>,
    pub beta: f64,
    pub c: f64,
}

impl Default for LambdaConfig {
    fn default() -> Self {
        LambdaConfig {
            kind: LambdaKind::Zero,
            kingman: 0.0,
            atoms: Vec::new(),
            beta: 1.5,
            c: 1.0,
        }
    }
}

impl LambdaConfig {
    pub fn build(&self) -> Result<LambdaSpec> {
        let spec = match self.kind {
            LambdaKind::Zero => LambdaSpec::zero(),
            LambdaKind::Atoms => LambdaSpec::atoms(self.atoms.clone())?,
            LambdaKind::Beta => LambdaSpec::beta(self.beta, self.c)?,
        };
        if !(self.kingman >= 0.0) {
            return Err(Error::Domain(format!(
                "kingman = {} must be non-negative",
                self.kingman
            )));
        }
        Ok(spec.with_kingman(self.kingman))
    }
}

impl ParamsConfig {
    pub fn build(&self) -> Result<SMHParams> {
        SMHParams::new(self.kappa, self.sigma, self.lambda.build()?)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CoalescentConfig {
    pub p: usize,
    pub horizon: f64,
}

impl Default for CoalescentConfig {
    fn default() -> Self {
        CoalescentConfig { p: 10, horizon: 10.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LevyConfig {
    pub xi0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub eps_trunc: f64,
    pub thetas: Vec<f64>,
}

impl Default for LevyConfig {
    fn default() -> Self {
        LevyConfig {
            xi0: 0.0,
            horizon: 1.0,
            dt: 0.01,
            eps_trunc: 0.05,
            thetas: vec![0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationConfig {
    /// `(label, mass)` atoms of the initial measure.
    pub nu0: Vec<(u64, f64)>,
    pub horizon: f64,
    pub dt: f64,
    pub eps_trunc: f64,
    pub particles: usize,
    pub alpha: f64,
    /// Frequency columns written per path row.
    pub top_k: usize,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        PopulationConfig {
            nu0: vec![(0, 0.5), (1, 0.5)],
            horizon: 1.0,
            dt: 0.01,
            eps_trunc: 0.05,
            particles: 100,
            alpha: 0.0,
            top_k: 3,
        }
    }
}

impl PopulationConfig {
    pub fn nu0(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::from_labels(&self.nu0)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DualConfig {
    /// Block labels of the initial partition of `[p]`.
    pub pi0: Vec<usize>,
    pub z0: f64,
    pub horizon: f64,
    pub dt: f64,
    pub eps_trunc: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        DualConfig {
            pi0: vec![0, 1, 2],
            z0: 1.0,
            horizon: 1.0,
            dt: 0.01,
            eps_trunc: 0.05,
        }
    }
}

impl DualConfig {
    pub fn pi0(&self) -> Result<Partition> {
        if self.pi0.is_empty() {
            return Err(Error::Config("dual.pi0 must be non-empty".into()));
        }
        Ok(Partition::from_labels(&self.pi0))
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LampertiConfig {
    pub alpha: f64,
}

impl Default for LampertiConfig {
    fn default() -> Self {
        LampertiConfig { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DualityConfig {
    /// Replicas per side; falls back to the top-level `replicas`.
    pub replicas: Option<usize>,
    /// Restrict the standard battery to experiments whose id contains one
    /// of these strings (all when empty).
    pub only: Vec<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct FvConfig {
    pub replicas: Option<usize>,
    pub particles: usize,
    pub eps_trunc: f64,
}

impl Default for FvConfig {
    fn default() -> Self {
        FvConfig {
            replicas: None,
            particles: 32,
            eps_trunc: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorsConfig {
    pub configs: usize,
    pub eps_fd: f64,
    pub eps_fd2: f64,
    pub richardson: bool,
}

impl Default for GeneratorsConfig {
    fn default() -> Self {
        GeneratorsConfig {
            configs: 50,
            eps_fd: 1e-5,
            eps_fd2: 1e-4,
            richardson: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub a: f64,
    pub sigma: f64,
    pub horizon: f64,
    pub dt: f64,
    pub particles: usize,
    pub times: Vec<f64>,
    pub replicas: Option<usize>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            a: 2.0,
            sigma: 1.0,
            horizon: 1.0,
            dt: 0.005,
            particles: 8,
            times: vec![0.25, 0.5, 1.0],
            replicas: None,
        }
    }
}

/// Parses a `key=value` override; the value is read as a TOML value and
/// taken as a bare string if that fails.
fn parse_override(s: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override path `{}` crosses a non-table", path.join("."))))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Parses the configuration text with overrides applied.
pub fn parse(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for o in overrides {
        let (path, value) = parse_override(o)?;
        apply_override(&mut table, &path, value)?;
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Hex SHA-256 of the configuration text followed by the overrides.
pub fn config_hash(text: &str, overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    for o in overrides {
        h.update(b"\n--set ");
        h.update(o.as_bytes());
    }
    hex::encode(h.finalize())
}
