//! Scenario configuration. Every field has a default, so an empty file (or no
//! file at all) reproduces the reference LEO scenario.

use std::path::Path;

use ddlink_core::channel::{
    terminal_doppler_hz, ChannelProfile, DEFAULT_COLLISION_RETRIES, DEFAULT_DELAY_SPREAD_S,
};
use ddlink_core::{AccessScheme, BerScheme, CcpConfig, Constellation, FrameParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// `ntn-tdl-b`, `ntn-tdl-d`, or a path to a profile TOML file.
    pub profile: String,
    /// Channel realizations averaged per sweep point.
    pub realizations: usize,
    pub users: usize,
    /// Total frame power; rates depend only on `P0 / N0`.
    pub p0: f64,
    pub snr_db: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub frame: FrameConfig,
    pub channel: ChannelConfig,
    pub scenario: ScenarioConstants,
    pub sumrate_oma: OmaConfig,
    pub sumrate_cfo: CfoSweepConfig,
    pub ber: BerSection,
    pub optimizer: OptimizerSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub m: usize,
    pub n: usize,
    pub delta_f_hz: f64,
    /// Defaults to `1 / delta_f`.
    pub symbol_duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub delay_spread_s: f64,
    /// Defaults to the terminal Doppler implied by `scenario`.
    pub max_doppler_hz: Option<f64>,
    /// Doppler of line-of-sight taps; defaults to the maximum Doppler.
    pub los_doppler_hz: Option<f64>,
    pub collision_retries: usize,
    /// Whole-channel re-draws after the Doppler retries are exhausted.
    pub channel_redraws: usize,
}

/// Orbit and link constants; only the terminal speed and carrier feed the
/// default Doppler, the rest is recorded for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConstants {
    pub earth_radius_km: f64,
    pub satellite_height_km: f64,
    pub elevation_deg: f64,
    pub satellite_speed_km_s: f64,
    pub terminal_speed_km_h: f64,
    pub carrier_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmaConfig {
    pub epsilon: f64,
    pub schemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfoSweepConfig {
    /// Access scheme whose uniform allocation both modulations use.
    pub scheme: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerSection {
    pub snr_db: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub realizations: usize,
    pub frames_per_realization: usize,
    pub constellation: String,
    pub zc_root: usize,
    pub schemes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    /// Run on `frame` and `users` instead of the reduced grid below.
    pub full_grid: bool,
    pub m: usize,
    pub n: usize,
    pub users: usize,
    pub snr_db: Vec<f64>,
    pub realizations: usize,
    /// OMA scheme whose uniform allocation starts the CCP.
    pub init_scheme: String,
    pub xi0: f64,
    pub mu: f64,
    pub xi_max: f64,
    /// Stopping thresholds relative to `P0` and to `M N K` respectively.
    pub delta1_rel: f64,
    pub delta2_rel: f64,
    pub m_max: usize,
    pub eps_bigm_rel: f64,
    pub solver_tol: f64,
}

fn db_range(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step as usize).map(f64::from).collect()
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            profile: "ntn-tdl-d".into(),
            realizations: 100,
            users: 4,
            p0: 1.0,
            snr_db: db_range(0, 30, 5),
            epsilon: vec![0.25, 0.3125, 0.375, 0.4375, 0.5],
            frame: FrameConfig::default(),
            channel: ChannelConfig::default(),
            scenario: ScenarioConstants::default(),
            sumrate_oma: OmaConfig::default(),
            sumrate_cfo: CfoSweepConfig::default(),
            ber: BerSection::default(),
            optimizer: OptimizerSection::default(),
        }
    }
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            m: 64,
            n: 16,
            delta_f_hz: 15e3,
            symbol_duration_s: None,
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            delay_spread_s: DEFAULT_DELAY_SPREAD_S,
            max_doppler_hz: None,
            los_doppler_hz: None,
            collision_retries: DEFAULT_COLLISION_RETRIES,
            channel_redraws: 16,
        }
    }
}

impl Default for ScenarioConstants {
    fn default() -> Self {
        Self {
            earth_radius_km: 6371.0,
            satellite_height_km: 1500.0,
            elevation_deg: 50.0,
            satellite_speed_km_s: 7.11,
            terminal_speed_km_h: 500.0,
            carrier_hz: 2e9,
        }
    }
}

impl Default for OmaConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.25,
            schemes: AccessScheme::ALL
                .iter()
                .map(|s| s.name().to_string())
                .collect(),
        }
    }
}

impl Default for CfoSweepConfig {
    fn default() -> Self {
        Self {
            scheme: "DDMA".into(),
        }
    }
}

impl Default for BerSection {
    fn default() -> Self {
        Self {
            snr_db: db_range(0, 25, 5),
            epsilon: vec![0.25, 0.5],
            realizations: 20,
            frames_per_realization: 25,
            constellation: "qpsk".into(),
            zc_root: 1,
            schemes: BerScheme::ALL
                .iter()
                .map(|s| s.name().to_string())
                .collect(),
        }
    }
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            full_grid: false,
            m: 16,
            n: 8,
            users: 4,
            snr_db: vec![10.0, 20.0, 30.0],
            realizations: 10,
            init_scheme: "DDMA".into(),
            xi0: 1.0,
            mu: 3.0,
            xi_max: 1e4,
            delta1_rel: 1e-3,
            delta2_rel: 1e-4,
            m_max: 50,
            eps_bigm_rel: 1e-6,
            solver_tol: 1e-7,
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Core errors raised while resolving a config are configuration errors.
fn cfg<T>(r: ddlink_core::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| bad(e.to_string()))
}

fn parse_list<T: std::str::FromStr<Err = ddlink_core::Error>>(
    names: &[String],
    what: &str,
) -> Result<Vec<T>, CliError> {
    if names.is_empty() {
        return Err(bad(format!("{what} list is empty")));
    }
    names
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| bad(e.to_string())))
        .collect()
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    /// Canonical TOML of the resolved configuration; hashed into reports.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn frame_params(&self) -> Result<FrameParams, CliError> {
        let f = &self.frame;
        Ok(match f.symbol_duration_s {
            Some(t) => cfg(FrameParams::with_symbol_duration(f.m, f.n, f.delta_f_hz, t))?,
            None => cfg(FrameParams::new(f.m, f.n, f.delta_f_hz))?,
        })
    }

    pub fn max_doppler_hz(&self) -> f64 {
        let s = &self.scenario;
        self.channel
            .max_doppler_hz
            .unwrap_or_else(|| terminal_doppler_hz(s.terminal_speed_km_h, s.carrier_hz))
    }

    /// The power delay profile with this scenario's delay spread and Doppler.
    pub fn channel_profile(&self) -> Result<ChannelProfile, CliError> {
        let base = match ChannelProfile::builtin(&self.profile) {
            Some(p) => p,
            None => cfg(ChannelProfile::load(&self.profile))?,
        };
        let mut profile = base
            .with_delay_spread(self.channel.delay_spread_s)
            .with_max_doppler(self.max_doppler_hz());
        if let Some(f) = self.channel.los_doppler_hz {
            profile.los_doppler_hz = Some(f);
        }
        cfg(profile.validate())?;
        Ok(profile)
    }

    pub fn oma_schemes(&self) -> Result<Vec<AccessScheme>, CliError> {
        parse_list(&self.sumrate_oma.schemes, "sumrate_oma.schemes")
    }

    pub fn ber_schemes(&self) -> Result<Vec<BerScheme>, CliError> {
        parse_list(&self.ber.schemes, "ber.schemes")
    }

    pub fn constellation(&self) -> Result<Constellation, CliError> {
        self.ber
            .constellation
            .parse()
            .map_err(|e: ddlink_core::Error| bad(e.to_string()))
    }

    /// Grid and user count of the optimizer runs.
    pub fn optimizer_grid(&self) -> Result<(FrameParams, usize), CliError> {
        let o = &self.optimizer;
        if o.full_grid {
            Ok((self.frame_params()?, self.users))
        } else {
            Ok((
                cfg(FrameParams::new(o.m, o.n, self.frame.delta_f_hz))?,
                o.users,
            ))
        }
    }

    pub fn ccp_config(&self, params: &FrameParams, users: usize) -> CcpConfig {
        let o = &self.optimizer;
        CcpConfig {
            xi0: o.xi0,
            mu: o.mu,
            xi_max: o.xi_max,
            delta1: o.delta1_rel * self.p0,
            delta2: o.delta2_rel * (params.mn() * users) as f64,
            m_max: o.m_max,
            eps_bigm: o.eps_bigm_rel * self.p0,
            solver_tol: o.solver_tol,
        }
    }

    /// Checks everything that can be checked without running an experiment.
    pub fn validate(&self) -> Result<(), CliError> {
        self.frame_params()?;
        self.channel_profile()?;
        if self.users == 0 {
            return Err(bad("users must be at least 1"));
        }
        if !(self.p0 > 0.0) {
            return Err(bad(format!("p0 must be positive, got {}", self.p0)));
        }
        if self.realizations == 0 || self.optimizer.realizations == 0 || self.ber.realizations == 0
        {
            return Err(bad("realization counts must be at least 1"));
        }
        let lists = [
            ("snr_db", &self.snr_db),
            ("epsilon", &self.epsilon),
            ("ber.snr_db", &self.ber.snr_db),
            ("ber.epsilon", &self.ber.epsilon),
            ("optimizer.snr_db", &self.optimizer.snr_db),
        ];
        for (name, list) in lists {
            if list.is_empty() || list.iter().any(|v| v.is_nan()) {
                return Err(bad(format!("{name} must be a nonempty list of numbers")));
            }
        }
        for eps in self
            .epsilon
            .iter()
            .chain(&self.ber.epsilon)
            .chain([&self.sumrate_oma.epsilon])
        {
            cfg(ddlink_core::CfoModel::new(*eps))?;
        }
        self.oma_schemes()?;
        self.ber_schemes()?;
        self.constellation()?;
        cfg(self.sumrate_cfo.scheme.parse::<AccessScheme>())?;
        cfg(self.optimizer.init_scheme.parse::<AccessScheme>())?;
        let (params, users) = self.optimizer_grid()?;
        cfg(self.ccp_config(&params, users).validate())?;
        Ok(())
    }
}

/// Reads a config file; `None` gives the defaults.
pub fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    match path {
        None => Ok(ScenarioConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("reading {}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| bad(format!("{}: {e}", p.display())))
        }
    }
}
