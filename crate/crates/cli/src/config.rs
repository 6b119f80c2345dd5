use std::path::{Path, PathBuf};

use cvar_sr::datagen::GenConfig;
use cvar_sr::evaluation::{CompareConfig, Method};
use cvar_sr::ipdsr::IpdsrConfig;
use cvar_sr::vpp::VppParams;
use cvar_sr::{RiskParams, ScenarioSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Settings read from `--config`. Flags given on the command line win.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scenarios: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub generate: Option<GenConfig>,
    pub vpp: Option<VppParams>,
    pub risk: Option<RiskParams>,
    pub ipdsr: Option<IpdsrConfig>,
    pub compare: Option<CompareConfig>,
    pub methods: Option<Vec<Method>>,
    pub sweep_n: Option<Vec<usize>>,
    pub sweep_k: Option<Vec<usize>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn risk(&self, lambda: Option<f64>, alpha: Option<f64>) -> Result<RiskParams, CliError> {
        let base = self.risk.unwrap_or_default();
        let risk = RiskParams { lambda: lambda.unwrap_or(base.lambda), alpha: alpha.unwrap_or(base.alpha) };
        risk.check().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(risk)
    }

    /// VPP parameters for `set`; without a config the horizon follows the set.
    pub fn vpp(&self, set: &ScenarioSet) -> Result<VppParams, CliError> {
        let p = self.vpp.clone().unwrap_or_else(|| VppParams::with_horizon(set.horizon(), set.dt_hours()));
        p.check().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }

    pub fn scenarios(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.scenarios.clone())
            .ok_or_else(|| CliError::Usage("--scenarios is required (flag or config)".into()))
    }

    pub fn out(&self, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        flag.or_else(|| self.out.clone()).ok_or_else(|| CliError::Usage("--out is required (flag or config)".into()))
    }
}

/// Reproducibility record written next to every result.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub command: &'a str,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub solver: &'a str,
    pub versions: Versions,
    pub config: &'a C,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Versions {
    pub cvar_sr: &'static str,
    pub cli: &'static str,
}

impl<'a, C: Serialize> Manifest<'a, C> {
    pub fn new(command: &'a str, config: &'a C, seed: Option<u64>, solver: &'a str) -> Self {
        let bytes = serde_json::to_vec(config).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        Self {
            command,
            config_hash: format!("{digest:x}"),
            seed,
            solver,
            versions: Versions { cvar_sr: cvar_sr::VERSION, cli: env!("CARGO_PKG_VERSION") },
            config,
            outputs: Vec::new(),
        }
    }
}

/// `out.json` gets `out.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    sibling(out, "manifest.json")
}

pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}
