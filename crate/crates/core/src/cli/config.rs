//! Experiment configuration: TOML with sections of `key = value` pairs.
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::LlnKind;
use crate::dynamics::IntegratorSettings;
use crate::error::{Result, SigmaError};
use crate::gibbs::GibbsSamplerConfig;
use crate::grid::GridSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n_grid: usize,
    pub m: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n_grid: 32, m: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    /// Zero residual.
    Zero,
    /// Residual drawn from truncated `mu_1 x mu_0`.
    Gaussian,
    /// Residual read from snapshots in `data_path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub dt: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub stride: usize,
    pub dealias: bool,
    pub data: InitialData,
    pub data_path: String,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            n: 4,
            r: 8,
            dt: 0.05,
            t: 1.0,
            stride: 1,
            dealias: true,
            data: InitialData::Zero,
            data_path: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GibbsSection {
    pub h: f64,
    pub chain: usize,
    pub burnin: usize,
    pub thin: usize,
    pub chains: usize,
    pub interaction: bool,
    pub metropolis: bool,
    pub accept_low: f64,
    pub accept_high: f64,
    pub coupling_h: f64,
    pub coupling_steps: usize,
}

impl Default for GibbsSection {
    fn default() -> Self {
        Self {
            h: 0.06,
            chain: 5400,
            burnin: 600,
            thin: 240,
            chains: 25,
            interaction: true,
            metropolis: true,
            accept_low: 0.3,
            accept_high: 0.8,
            coupling_h: 0.02,
            coupling_steps: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    #[serde(rename = "M_list")]
    pub m_list: Vec<u32>,
    pub reps: usize,
    pub trials: usize,
    pub s: f64,
    pub eps: f64,
    pub seed: u64,
    /// 1-based component index.
    pub component: usize,
    pub kinds: Vec<String>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            n_list: vec![4, 16, 64, 256],
            m_list: vec![4, 8, 16, 32],
            reps: 10,
            trials: 20,
            s: 0.9,
            eps: 0.1,
            seed: 0,
            component: 1,
            kinds: vec!["wick_square_avg".into(), "wick_triple_avg".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec!["csv".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Truncation `M`.
    #[serde(rename = "M")]
    pub truncation: u32,
    pub grid: GridSection,
    pub dynamics: DynamicsSection,
    pub gibbs: GibbsSection,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            truncation: 8,
            grid: GridSection::default(),
            dynamics: DynamicsSection::default(),
            gibbs: GibbsSection::default(),
            experiment: ExperimentSection::default(),
            output: OutputSection::default(),
        }
    }
}

/// Every accepted key with a one-line description; shown by `--help`.
pub const CONFIG_KEYS_HELP: &str = "\
CONFIG KEYS (TOML; unknown keys are errors; all keys optional)
  M                     truncation radius |n| <= M of noise, Wick constants, dynamics [8]
  [grid]
    n_grid              grid points per axis, even [32]
    m                   mass m > 0 [1.0]
  [dynamics]
    N                   number of components [4]
    R                   mean-field replicas [8]
    dt                  time step [0.05]
    T                   horizon [1.0]
    stride              record every stride-th step [1]
    dealias             2/3-rule dealiasing [true]
    data                initial residual: zero | gaussian | file [zero]
    data_path           directory with u{j}_pos.sgwv / u{j}_vel.sgwv when data = file [\"\"]
  [gibbs]
    h                   MALA step size [0.06]
    chain               iterations per chain, burn-in included [5400]
    burnin              discarded iterations [600]
    thin                keep every thin-th iteration [240]
    chains              independent chains [25]
    interaction         include the quartic potential [true]
    metropolis          accept/reject correction; false = unadjusted Langevin [true]
    accept_low          lower end of the acceptance band [0.3]
    accept_high         upper end of the acceptance band [0.8]
    coupling_h          step of the coupled sampler in convergence-rate [0.02]
    coupling_steps      iterations of the coupled sampler [400]
  [experiment]
    N_list              component counts for rate sweeps [[4, 16, 64, 256]]
    M_list              truncations for the commutator sweep [[4, 8, 16, 32]]
    reps                independent realizations per point [10]
    trials              commutator trials per M [20]
    s                   Sobolev index [0.9]
    eps                 negative regularity of the LLN norm [0.1]
    seed                root seed, overridden by --seed [0]
    component           1-based component index for reports [1]
    kinds               LLN estimators: wick_square_avg | wick_triple_avg | wick_triple_avg_an
  [output]
    dir                 output directory, overridden by --out [\"out\"]
    formats             any of csv, snapshot [[\"csv\"]]
";

fn config_error(key: &str, reason: impl Into<String>) -> SigmaError {
    SigmaError::Config { key: key.to_string(), reason: reason.into() }
}

/// The first backtick-quoted word of a deserializer message, which names
/// the offending key for unknown or mistyped fields.
fn key_from_message(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("<config>").to_string()
}

/// The key of the `key = value` line containing byte offset `at`.
fn key_at(text: &str, at: usize) -> Option<String> {
    let start = text[..at.min(text.len())].rfind('\n').map_or(0, |i| i + 1);
    let line = text[start..].lines().next()?;
    let (key, _) = line.split_once('=')?;
    Some(key.trim().to_string())
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = match e.span() {
                Some(span) if !msg.starts_with("unknown field") => key_at(text, span.start).unwrap_or_else(|| key_from_message(&msg)),
                _ => key_from_message(&msg),
            };
            config_error(&key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let spec = GridSpec::new(self.grid.n_grid, self.grid.m).map_err(|e| config_error("grid", e.to_string()))?;
        if self.truncation == 0 || self.truncation as usize >= spec.nyquist() {
            return Err(config_error("M", format!("must be in 1..{} for n_grid {}", spec.nyquist(), spec.n_grid())));
        }
        let d = &self.dynamics;
        if d.n == 0 {
            return Err(config_error("dynamics.N", "must be at least 1"));
        }
        if d.r == 0 {
            return Err(config_error("dynamics.R", "must be at least 1"));
        }
        if !(d.dt > 0.0 && d.dt.is_finite()) {
            return Err(config_error("dynamics.dt", "must be positive"));
        }
        if !(d.t >= 0.0 && d.t.is_finite()) {
            return Err(config_error("dynamics.T", "must be non-negative"));
        }
        if d.stride == 0 {
            return Err(config_error("dynamics.stride", "must be at least 1"));
        }
        if d.data == InitialData::File && d.data_path.is_empty() {
            return Err(config_error("dynamics.data_path", "required when data = file"));
        }
        self.sampler_config().validate().map_err(|e| {
            let key = match &e {
                SigmaError::InvalidParameter { name, .. } => format!("gibbs.{name}"),
                _ => "gibbs".into(),
            };
            config_error(&key, e.to_string())
        })?;
        let g = &self.gibbs;
        if g.chains == 0 {
            return Err(config_error("gibbs.chains", "must be at least 1"));
        }
        if !(g.coupling_h > 0.0) {
            return Err(config_error("gibbs.coupling_h", "must be positive"));
        }
        let e = &self.experiment;
        if e.n_list.is_empty() {
            return Err(config_error("experiment.N_list", "must not be empty"));
        }
        if e.n_list.contains(&0) {
            return Err(config_error("experiment.N_list", "entries must be at least 1"));
        }
        if e.m_list.is_empty() || e.m_list.contains(&0) {
            return Err(config_error("experiment.M_list", "must be non-empty with positive entries"));
        }
        if e.reps == 0 {
            return Err(config_error("experiment.reps", "must be at least 1"));
        }
        if e.trials == 0 {
            return Err(config_error("experiment.trials", "must be at least 1"));
        }
        if !e.s.is_finite() {
            return Err(config_error("experiment.s", "must be finite"));
        }
        if !(e.eps >= 0.0 && e.eps.is_finite()) {
            return Err(config_error("experiment.eps", "must be non-negative"));
        }
        if e.component == 0 {
            return Err(config_error("experiment.component", "is 1-based"));
        }
        if e.kinds.is_empty() {
            return Err(config_error("experiment.kinds", "must not be empty"));
        }
        for k in &e.kinds {
            if LlnKind::parse(k).is_none() {
                return Err(config_error("experiment.kinds", format!("unknown estimator {k:?}")));
            }
        }
        if self.output.formats.is_empty() {
            return Err(config_error("output.formats", "must not be empty"));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "snapshot" {
                return Err(config_error("output.formats", format!("unknown format {f:?}")));
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.n_grid, self.grid.m)
    }

    pub fn integrator(&self) -> Result<IntegratorSettings> {
        IntegratorSettings::new(self.dynamics.dt, self.truncation, self.dynamics.dealias)
    }

    pub fn sampler_config(&self) -> GibbsSamplerConfig {
        let g = &self.gibbs;
        GibbsSamplerConfig {
            n: self.dynamics.n,
            radius: self.truncation,
            step: g.h,
            chain: g.chain,
            burn_in: g.burnin,
            thin: g.thin,
            interaction: g.interaction,
            metropolis: g.metropolis,
            accept_low: g.accept_low,
            accept_high: g.accept_high,
        }
    }

    pub fn lln_kinds(&self) -> Vec<LlnKind> {
        self.experiment.kinds.iter().filter_map(|k| LlnKind::parse(k)).collect()
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }

    /// SHA-256 of the canonical JSON form. The output directory is excluded
    /// because it does not affect any result.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir.clear();
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex_digest(json.as_bytes())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_errors_naming_the_key() {
        for (text, key) in [
            ("bogus = 1", "bogus"),
            ("[grid]\nn_grids = 32", "n_grids"),
            ("[dynamics]\nN = 4\nsteps = 3", "steps"),
            ("[nonsense]\nx = 1", "nonsense"),
            ("[dynamics]\ndata = \"maybe\"", "data"),
            ("[grid]\nn_grid = \"big\"", "n_grid"),
        ] {
            match ExperimentConfig::parse(text) {
                Err(SigmaError::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn validation_names_keys() {
        for (text, key) in [
            ("[experiment]\nN_list = []", "experiment.N_list"),
            ("M = 16", "M"),
            ("[dynamics]\ndt = 0.0", "dynamics.dt"),
            ("[gibbs]\nburnin = 6000", "gibbs.burnin"),
            ("[gibbs]\nh = -1.0", "gibbs.h"),
            ("[output]\nformats = [\"png\"]", "output.formats"),
            ("[experiment]\nkinds = [\"x\"]", "experiment.kinds"),
            ("[dynamics]\ndata = \"file\"", "dynamics.data_path"),
        ] {
            match ExperimentConfig::parse(text) {
                Err(SigmaError::Config { key: k, .. }) => assert_eq!(k, key, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn help_lists_every_key() {
        let value: toml::Table = toml::from_str(&ExperimentConfig::default().to_toml()).unwrap();
        for (k, v) in &value {
            assert!(CONFIG_KEYS_HELP.contains(k.as_str()), "{k}");
            if let Some(t) = v.as_table() {
                assert!(CONFIG_KEYS_HELP.contains(&format!("[{k}]")));
                for sub in t.keys() {
                    assert!(CONFIG_KEYS_HELP.contains(&format!("    {sub} ")), "{k}.{sub}");
                }
            }
        }
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.experiment.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
