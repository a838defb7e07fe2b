//! Run configuration: a TOML document with typed sections and no unknown keys.

use std::path::{Path, PathBuf};

use pairlik::covariance::{CovarianceSpec, Family, Param, ParamSet, RangeConvention, Taper};
use pairlik::geometry::{Cutoff, EARTH_RADIUS_KM};
use pairlik::inference::AreMethod;
use pairlik::objective::{ObjectiveKind, ObjectiveSpec, PlKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub are: AreConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Where the sites come from: a jittered grid level, a site file, or a data
/// file carrying observations as well. Exactly one is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    /// Grid level `k` (`500 * 2^k` sites); the last level for `benchmark`.
    pub grid_k: Option<u32>,
    /// Site table with `x,y` or `lon,lat` columns.
    pub file: Option<PathBuf>,
    /// Observation table with `x,y,z` or `lon,lat,z` columns.
    pub data: Option<PathBuf>,
    /// Replicate to read from a multi-replicate data table.
    pub rep: Option<u64>,
    #[serde(default = "default_increment")]
    pub increment: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default = "default_radius")]
    pub radius_km: f64,
}

fn default_increment() -> f64 {
    0.03
}

fn default_jitter() -> f64 {
    0.01
}

fn default_radius() -> f64 {
    EARTH_RADIUS_KM
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            grid_k: None,
            file: None,
            data: None,
            rep: None,
            increment: default_increment(),
            jitter: default_jitter(),
            radius_km: default_radius(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub sigma2: f64,
    pub phi: f64,
    #[serde(default)]
    pub nugget: f64,
    #[serde(default)]
    pub convention: RangeConvention,
    /// Free parameters; defaults to `sigma2, phi` plus `nugget` when it is positive.
    pub free: Option<Vec<Param>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: Family::Exponential,
            sigma2: 1.0,
            phi: 0.4,
            nugget: 0.0,
            convention: RangeConvention::Practical,
            free: None,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> CliResult<CovarianceSpec> {
        CovarianceSpec::new(self.family, self.sigma2, self.phi)
            .and_then(|s| s.with_nugget(self.nugget))
            .map(|s| s.with_convention(self.convention))
            .map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn params(&self) -> CliResult<ParamSet> {
        let free = match &self.free {
            Some(f) => f.clone(),
            None if self.nugget > 0.0 => vec![Param::Sigma2, Param::Phi, Param::Nugget],
            None => vec![Param::Sigma2, Param::Phi],
        };
        if free.contains(&Param::Nugget) && !(self.nugget > 0.0) {
            return Err(CliError::Config("model.free: a free nugget needs a positive starting value".into()));
        }
        ParamSet::new(free).map_err(|e| CliError::Config(format!("model.free: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    /// Labels among `ML`, `TAP`, `TAP1`, `PL_M`, `PL_C`, `PL_D`, optionally
    /// with an inline distance such as `PL_M(0.1)`.
    #[serde(default = "default_methods")]
    pub methods: Vec<String>,
    /// Pair cutoff for pairwise likelihoods without an inline distance.
    pub cutoff: Option<f64>,
    /// Taper range for tapered likelihoods without an inline distance.
    pub taper_range: Option<f64>,
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_true")]
    pub information: bool,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_methods() -> Vec<String> {
    vec!["ML".into()]
}

fn default_starts() -> usize {
    5
}

fn default_true() -> bool {
    true
}

fn default_max_iter() -> usize {
    400
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            methods: default_methods(),
            cutoff: None,
            taper_range: None,
            starts: default_starts(),
            information: true,
            max_iter: default_max_iter(),
        }
    }
}

impl MethodConfig {
    pub fn objectives(&self) -> CliResult<Vec<ObjectiveSpec>> {
        if self.methods.is_empty() {
            return Err(CliError::Config("method.methods is empty".into()));
        }
        self.methods.iter().map(|m| self.objective(m)).collect()
    }

    fn objective(&self, label: &str) -> CliResult<ObjectiveSpec> {
        let bad = |msg: String| CliError::Config(format!("method.methods: '{label}': {msg}"));
        let (name, inline) = match label.trim().split_once('(') {
            Some((n, rest)) => {
                let d = rest
                    .strip_suffix(')')
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| bad("expected NAME(distance)".into()))?;
                (n.trim(), Some(d))
            }
            None => (label.trim(), None),
        };
        let kind = match name.to_ascii_uppercase().as_str() {
            "ML" => ObjectiveKind::Ml,
            "TAP" | "TAP2" => ObjectiveKind::Taper2,
            "TAP1" => ObjectiveKind::Taper1,
            "PL_M" => ObjectiveKind::Pl(PlKind::Marginal),
            "PL_C" => ObjectiveKind::Pl(PlKind::Conditional),
            "PL_D" => ObjectiveKind::Pl(PlKind::Difference),
            _ => return Err(bad("unknown method".into())),
        };
        let spec = match kind {
            ObjectiveKind::Ml => {
                if inline.is_some() {
                    return Err(bad("ML takes no distance".into()));
                }
                return Ok(ObjectiveSpec::ml());
            }
            ObjectiveKind::Taper1 | ObjectiveKind::Taper2 => {
                let d = inline
                    .or(self.taper_range)
                    .ok_or_else(|| bad("needs method.taper_range".into()))?;
                Taper::wendland(d).and_then(|t| ObjectiveSpec::tapered(kind, t))
            }
            ObjectiveKind::Pl(k) => {
                let cutoff = inline.or(self.cutoff).map_or(Cutoff::Unbounded, Cutoff::Finite);
                ObjectiveSpec::pl(k, cutoff)
            }
        };
        spec.map_err(|e| bad(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub seed: Option<u64>,
}

fn default_replicates() -> usize {
    1
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            replicates: default_replicates(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreConfig {
    /// Letters among `T`, `M`, `C`, `D`.
    #[serde(default = "default_are_methods")]
    pub methods: Vec<String>,
    /// Target nonzero fractions; defaults to `0.01, 0.02, ..., 0.20`.
    pub fractions: Option<Vec<f64>>,
}

fn default_are_methods() -> Vec<String> {
    AreMethod::ALL.iter().map(|m| m.letter().to_string()).collect()
}

impl Default for AreConfig {
    fn default() -> Self {
        Self {
            methods: default_are_methods(),
            fractions: None,
        }
    }
}

impl AreConfig {
    pub fn methods(&self) -> CliResult<Vec<AreMethod>> {
        self.methods
            .iter()
            .map(|m| AreMethod::parse(m).map_err(|e| CliError::Config(format!("are.methods: {e}"))))
            .collect()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.fractions.clone().unwrap_or_else(pairlik::inference::default_fractions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// Record wall-clock times; disable for byte-identical reruns.
    #[serde(default = "default_true")]
    pub timings: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            timings: true,
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub methods: Option<Vec<String>>,
    pub cutoff: Option<f64>,
    pub taper_range: Option<f64>,
    pub family: Option<Family>,
    pub data: Option<PathBuf>,
    pub rep: Option<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.study.seed = Some(s);
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(m) = &o.methods {
            self.method.methods = m.clone();
        }
        if let Some(c) = o.cutoff {
            self.method.cutoff = Some(c);
        }
        if let Some(t) = o.taper_range {
            self.method.taper_range = Some(t);
        }
        if let Some(f) = o.family {
            self.model.family = f;
        }
        if let Some(d) = &o.data {
            self.design = DesignConfig {
                data: Some(d.clone()),
                ..self.design.clone()
            };
            self.design.grid_k = None;
            self.design.file = None;
        }
        if let Some(r) = o.rep {
            self.design.rep = Some(r);
        }
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.study
            .seed
            .ok_or_else(|| CliError::Config("study.seed is required for this command (or pass --seed)".into()))
    }

    /// Checks shared by all commands.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.design;
        let sources = [d.grid_k.is_some(), d.file.is_some(), d.data.is_some()];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(CliError::Config(
                "design: give only one of grid_k, file and data".into(),
            ));
        }
        for p in [&d.file, &d.data].into_iter().flatten() {
            if !p.is_file() {
                return Err(CliError::Config(format!("design: file {} does not exist", p.display())));
            }
        }
        if !(d.increment > 0.0) || !(d.jitter >= 0.0) || !(d.radius_km > 0.0) {
            return Err(CliError::Config("design: increment and radius_km must be positive, jitter non-negative".into()));
        }
        self.model.spec()?;
        self.model.params()?;
        self.method.objectives()?;
        self.are.methods()?;
        if self.method.starts == 0 {
            return Err(CliError::Config("method.starts must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical TOML form, the input of the manifest hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("configurations serialize")
    }

    /// SHA-256 of the canonical form; the output location does not enter.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output.dir = PathBuf::new();
        let digest = Sha256::digest(c.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
