//! Run configuration: TOML sections, defaults, overrides and validation.

use serde::{Deserialize, Serialize};

use sphb_core::eval::{SchemeId, SweepConfig};
use sphb_core::model::make_constellation;
use sphb_core::precoder::RelaxationUpdate;

use crate::error::CliError;

/// Configuration shipped with the binary; used when `--config` is absent.
pub const BUNDLED: &str = include_str!("../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct System {
    pub m_antennas: usize,
    pub n_users: usize,
    pub mod_order: usize,
    pub sigma_z: f64,
}

impl Default for System {
    fn default() -> Self {
        Self {
            m_antennas: 4,
            n_users: 4,
            mod_order: 8,
            sigma_z: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorModel {
    /// Complex error variance per antenna (isotropic).
    pub err_var: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self { err_var: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Targets {
    pub p_hat: f64,
    /// Sweep axis in dB. For the max-min scheme these are power budgets.
    pub snr_db: Vec<f64>,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            p_hat: 0.9,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Iteration {
    pub eta: f64,
    pub delta: f64,
    pub max_iter: usize,
    pub update: RelaxationUpdate,
    pub mc_probability: bool,
}

impl Default for Iteration {
    fn default() -> Self {
        Self {
            eta: 0.2,
            delta: 0.005,
            max_iter: 50,
            update: RelaxationUpdate::Relax,
            mc_probability: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sweep {
    pub n_channels: usize,
    pub n_mc: usize,
    pub seed: u64,
    pub schemes: Vec<String>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            n_channels: 100,
            n_mc: 10_000,
            seed: 2024,
            schemes: vec!["nonrobust".into(), "sphere".into(), "iterative".into()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: String,
    pub format: Format,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: Format::Csv,
        }
    }
}

/// One user of an explicit `solve` scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    /// Channel estimate as `[re, im]` pairs, one per antenna.
    pub h: Vec<[f64; 2]>,
    /// Constellation index of the user's symbol.
    pub symbol: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solve {
    pub scheme: String,
    /// SNR target (or power budget for max-min) in dB.
    pub snr_db: f64,
    /// Explicit users; when empty a channel is drawn from `sweep.seed`.
    pub users: Vec<UserSpec>,
}

impl Default for Solve {
    fn default() -> Self {
        Self {
            scheme: "sphere".into(),
            snr_db: 10.0,
            users: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub system: System,
    pub error_model: ErrorModel,
    pub targets: Targets,
    pub iteration: Iteration,
    pub sweep: Sweep,
    pub output: Output,
    pub solve: Solve,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub format: Option<Format>,
    pub mc_probability: bool,
    pub negate_relaxation: bool,
}

fn bad(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a TOML config, or the `config` echo of a run manifest when the
    /// path ends in `.json`.
    pub fn load(path: Option<&std::path::Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Self::parse(BUNDLED);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            #[derive(Deserialize)]
            struct Echo {
                config: Config,
            }
            let m: Echo = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            return Ok(m.config);
        }
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.sweep.seed = s;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        if o.mc_probability {
            self.iteration.mc_probability = true;
        }
        if o.negate_relaxation {
            self.iteration.update = RelaxationUpdate::Negated;
        }
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.system;
        for (name, v) in [("system.m_antennas", s.m_antennas), ("system.n_users", s.n_users)] {
            if v == 0 {
                return Err(bad(name, "must be >= 1"));
            }
        }
        let k = make_constellation(s.mod_order).map_err(|e| bad("system.mod_order", e))?;
        if k.mod_order() < 4 {
            return Err(bad("system.mod_order", "must be >= 4 for the CI constraints"));
        }
        if !(s.sigma_z.is_finite() && s.sigma_z > 0.0) {
            return Err(bad("system.sigma_z", format!("must be > 0, got {}", s.sigma_z)));
        }
        let e = self.error_model.err_var;
        if !(e.is_finite() && e >= 0.0) {
            return Err(bad("error_model.err_var", format!("must be >= 0, got {e}")));
        }
        let p = self.targets.p_hat;
        if !(0.0..1.0).contains(&p) {
            return Err(bad("targets.p_hat", format!("must lie in [0, 1), got {p}")));
        }
        if self.targets.snr_db.is_empty() {
            return Err(bad("targets.snr_db", "must not be empty"));
        }
        for (i, v) in self.targets.snr_db.iter().enumerate() {
            if !v.is_finite() {
                return Err(bad(&format!("targets.snr_db[{i}]"), "must be finite"));
            }
            if self.targets.snr_db[..i].contains(v) {
                return Err(bad(&format!("targets.snr_db[{i}]"), format!("{v} is listed twice")));
            }
        }
        let it = &self.iteration;
        if !(it.eta.is_finite() && it.eta > 0.0) {
            return Err(bad("iteration.eta", format!("must be > 0, got {}", it.eta)));
        }
        if !(it.delta.is_finite() && it.delta > 0.0) {
            return Err(bad("iteration.delta", format!("must be > 0, got {}", it.delta)));
        }
        if it.max_iter == 0 {
            return Err(bad("iteration.max_iter", "must be >= 1"));
        }
        let sw = &self.sweep;
        if sw.n_channels == 0 {
            return Err(bad("sweep.n_channels", "must be >= 1"));
        }
        if sw.n_mc == 0 {
            return Err(bad("sweep.n_mc", "must be >= 1"));
        }
        self.schemes()?;
        if self.output.dir.is_empty() {
            return Err(bad("output.dir", "must not be empty"));
        }
        SchemeId::parse(&self.solve.scheme).map_err(|e| bad("solve.scheme", e))?;
        if !self.solve.snr_db.is_finite() {
            return Err(bad("solve.snr_db", "must be finite"));
        }
        if !self.solve.users.is_empty() {
            if self.solve.users.len() != s.n_users {
                return Err(bad(
                    "solve.users",
                    format!("{} users given but system.n_users = {}", self.solve.users.len(), s.n_users),
                ));
            }
            for (i, u) in self.solve.users.iter().enumerate() {
                if u.h.len() != s.m_antennas {
                    return Err(bad(
                        &format!("solve.users[{i}].h"),
                        format!("{} entries but system.m_antennas = {}", u.h.len(), s.m_antennas),
                    ));
                }
                if u.h.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(bad(&format!("solve.users[{i}].h"), "entries must be finite"));
                }
                if u.symbol >= s.mod_order {
                    return Err(bad(
                        &format!("solve.users[{i}].symbol"),
                        format!("must be < system.mod_order = {}", s.mod_order),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn schemes(&self) -> Result<Vec<SchemeId>, CliError> {
        let list = &self.sweep.schemes;
        if list.is_empty() {
            return Err(bad("sweep.schemes", "must not be empty"));
        }
        let mut out = Vec::with_capacity(list.len());
        for (i, name) in list.iter().enumerate() {
            let id = SchemeId::parse(name).map_err(|e| bad(&format!("sweep.schemes[{i}]"), e))?;
            if out.contains(&id) {
                return Err(bad(&format!("sweep.schemes[{i}]"), format!("{name} is listed twice")));
            }
            out.push(id);
        }
        Ok(out)
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, CliError> {
        Ok(SweepConfig {
            m_antennas: self.system.m_antennas,
            n_users: self.system.n_users,
            mod_order: self.system.mod_order,
            sigma_z: self.system.sigma_z,
            err_var: self.error_model.err_var,
            p_hat: self.targets.p_hat,
            eta: self.iteration.eta,
            delta: self.iteration.delta,
            max_iter: self.iteration.max_iter,
            snr_targets_db: self.targets.snr_db.clone(),
            n_channels: self.sweep.n_channels,
            n_mc: self.sweep.n_mc,
            seed: self.sweep.seed,
            schemes: self.schemes()?,
            update: self.iteration.update,
            mc_probability: self.iteration.mc_probability,
        })
    }
}
