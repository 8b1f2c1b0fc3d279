//! Linear time-varying channels with integer delay/Doppler taps.
//!
//! A user's channel is a short list of paths `(h_p, l_p, k_p)`. In the time
//! domain each path acts as `h_p Pi^{l_p} Delta^{k_p}` on the `MN` samples of
//! a frame that carries a single cyclic prefix:
//!
//! ```text
//! r[q] = sum_p h_p exp(j 2 pi k_p (q - l_p) / MN) s[(q - l_p) mod MN]
//! ```
//!
//! The DD and TF effective channels are unitary conjugations of that matrix.

use std::f64::consts::PI;
use std::path::Path as FsPath;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ddgrid::{FrameParams, OtfsModem, C64};
use crate::error::{dim_mismatch, Error, Result};
use crate::random::complex_gaussian;
use crate::tensor::wrap;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Delay spread that maps unit normalized delay onto 8 delay bins of the
/// 64 x 15 kHz reference grid, keeping every NTN-TDL tap inside that grid.
pub const DEFAULT_DELAY_SPREAD_S: f64 = 8.0 / (64.0 * 15e3);

/// Maximum Doppler `v f_c / c`.
pub fn terminal_doppler_hz(speed_km_h: f64, carrier_hz: f64) -> f64 {
    speed_km_h / 3.6 * carrier_hz / SPEED_OF_LIGHT
}

/// Doppler of a 500 km/h terminal at a 2 GHz carrier.
pub fn default_max_doppler_hz() -> f64 {
    terminal_doppler_hz(500.0, 2e9)
}

/// One propagation path with integer delay and Doppler indices.
///
/// The Doppler index is kept as a plain integer rather than reduced mod `N`:
/// the time-domain phase ramp of `k_p` and `k_p + N` differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    pub delay_tap: usize,
    pub doppler_tap: i64,
}

impl Path {
    pub fn new(
        gain: C64,
        delay_tap: usize,
        doppler_tap: i64,
        params: &FrameParams,
    ) -> Result<Self> {
        if delay_tap >= params.m() {
            return Err(Error::DelayOverflow {
                tap: delay_tap,
                m: params.m(),
            });
        }
        Ok(Self {
            gain,
            delay_tap,
            doppler_tap,
        })
    }

    /// Builds a path from a physical delay (s) and Doppler (Hz); both must sit
    /// on the grid within a relative tolerance of `1e-9` of a bin.
    pub fn from_physical(
        gain: C64,
        delay_s: f64,
        doppler_hz: f64,
        params: &FrameParams,
    ) -> Result<Self> {
        let l = delay_s / params.delay_resolution();
        let k = doppler_hz / params.doppler_resolution();
        let (lr, kr) = (l.round(), k.round());
        if (l - lr).abs() > 1e-9 || lr < 0.0 {
            return Err(Error::FractionalTap(format!(
                "delay {delay_s:e} s is {l} bins"
            )));
        }
        if (k - kr).abs() > 1e-9 {
            return Err(Error::FractionalTap(format!(
                "Doppler {doppler_hz} Hz is {k} bins"
            )));
        }
        Self::new(gain, lr as usize, kr as i64, params)
    }

    /// Doppler bin in `[0, N)`.
    #[inline]
    pub fn doppler_bin(&self, n: usize) -> usize {
        wrap(self.doppler_tap, n)
    }

    pub fn power(&self) -> f64 {
        self.gain.norm_sqr()
    }

    /// Delay `tau_p = l_p / (M delta_f)` in seconds.
    pub fn delay_s(&self, params: &FrameParams) -> f64 {
        self.delay_tap as f64 * params.delay_resolution()
    }

    /// Doppler `nu_p = k_p / (N T)` in Hz.
    pub fn doppler_hz(&self, params: &FrameParams) -> f64 {
        self.doppler_tap as f64 * params.doppler_resolution()
    }
}

/// The DD-domain channel of one user. The first path carries the desired
/// signal in the interference analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct UserChannel {
    pub user_id: usize,
    paths: Vec<Path>,
}

impl UserChannel {
    pub fn new(user_id: usize, paths: Vec<Path>, params: &FrameParams) -> Result<Self> {
        if paths.is_empty() {
            return Err(Error::InvalidParameter(
                "a channel needs at least one path".into(),
            ));
        }
        for (idx, p) in paths.iter().enumerate() {
            if p.delay_tap >= params.m() {
                return Err(Error::DelayOverflow {
                    tap: p.delay_tap,
                    m: params.m(),
                });
            }
            if let Some(q) = paths[..idx].iter().find(|q| {
                q.delay_tap == p.delay_tap && q.doppler_bin(params.n()) == p.doppler_bin(params.n())
            }) {
                return Err(Error::InvalidParameter(format!(
                    "paths share delay/Doppler bin ({}, {})",
                    q.delay_tap,
                    q.doppler_bin(params.n())
                )));
            }
        }
        Ok(Self { user_id, paths })
    }

    /// Single unit-gain path at the origin.
    pub fn identity(user_id: usize) -> Self {
        Self {
            user_id,
            paths: vec![Path {
                gain: C64::new(1.0, 0.0),
                delay_tap: 0,
                doppler_tap: 0,
            }],
        }
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn total_power(&self) -> f64 {
        self.paths.iter().map(Path::power).sum()
    }

    /// The equivalent path list after a carrier offset of `eps` subcarriers.
    ///
    /// `Delta^a Pi^l = gamma^{a l} Pi^l Delta^a` for integer `a = eps N`, so a
    /// CFO is a common Doppler shift plus a per-path phase. Non-integer `eps N`
    /// is rejected.
    pub fn with_cfo(&self, cfo: &CfoModel, params: &FrameParams) -> Result<Self> {
        let shift = cfo.epsilon() * params.n() as f64;
        let shift_r = shift.round();
        if (shift - shift_r).abs() > 1e-9 {
            return Err(Error::FractionalTap(format!(
                "CFO eps={} is {shift} Doppler bins for N={}",
                cfo.epsilon(),
                params.n()
            )));
        }
        let a = shift_r as i64;
        let mn = params.mn() as f64;
        let paths = self
            .paths
            .iter()
            .map(|p| Path {
                gain: p.gain
                    * C64::from_polar(1.0, 2.0 * PI * (a * p.delay_tap as i64) as f64 / mn),
                delay_tap: p.delay_tap,
                doppler_tap: p.doppler_tap + a,
            })
            .collect();
        Self::new(self.user_id, paths, params)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fading {
    Rayleigh,
    /// Line-of-sight component of a Ricean tap.
    #[serde(alias = "ricean", alias = "ricean-los")]
    Los,
}

/// One row of a tapped-delay-line power delay profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TapSpec {
    pub tap: u32,
    pub normalized_delay: f64,
    pub power_db: f64,
    pub fading: Fading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelProfile {
    pub name: String,
    #[serde(rename = "tap")]
    pub taps: Vec<TapSpec>,
    /// Seconds per unit of normalized delay.
    #[serde(default = "default_delay_spread")]
    pub delay_spread_s: f64,
    #[serde(default = "default_max_doppler_hz")]
    pub max_doppler_hz: f64,
    /// Doppler of the LOS component; defaults to `max_doppler_hz`.
    #[serde(default)]
    pub los_doppler_hz: Option<f64>,
}

fn default_delay_spread() -> f64 {
    DEFAULT_DELAY_SPREAD_S
}

fn tap(tap: u32, normalized_delay: f64, power_db: f64, fading: Fading) -> TapSpec {
    TapSpec {
        tap,
        normalized_delay,
        power_db,
        fading,
    }
}

impl ChannelProfile {
    /// NTN-TDL-B: four NLOS Rayleigh taps. The two rows labelled tap 2 in the
    /// 3GPP table are kept as separate taps.
    pub fn ntn_tdl_b() -> Self {
        Self {
            name: "NTN-TDL-B".into(),
            taps: vec![
                tap(1, 0.0, 0.0, Fading::Rayleigh),
                tap(2, 0.7429, -1.973, Fading::Rayleigh),
                tap(2, 0.7410, -4.332, Fading::Rayleigh),
                tap(3, 5.792, -11.914, Fading::Rayleigh),
            ],
            delay_spread_s: DEFAULT_DELAY_SPREAD_S,
            max_doppler_hz: default_max_doppler_hz(),
            los_doppler_hz: None,
        }
    }

    /// NTN-TDL-D: a Ricean first tap (LOS and diffuse rows at delay 0) and two
    /// Rayleigh taps.
    pub fn ntn_tdl_d() -> Self {
        Self {
            name: "NTN-TDL-D".into(),
            taps: vec![
                tap(1, 0.0, -0.284, Fading::Los),
                tap(1, 0.0, -11.991, Fading::Rayleigh),
                tap(2, 0.5596, -9.887, Fading::Rayleigh),
                tap(3, 7.3340, -16.771, Fading::Rayleigh),
            ],
            delay_spread_s: DEFAULT_DELAY_SPREAD_S,
            max_doppler_hz: default_max_doppler_hz(),
            los_doppler_hz: None,
        }
    }

    /// Looks up a built-in profile by name (`ntn-tdl-b`, `NTN-TDL-D`, ...).
    pub fn builtin(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "ntn-tdl-b" | "tdl-b" | "b" => Some(Self::ntn_tdl_b()),
            "ntn-tdl-d" | "tdl-d" | "d" => Some(Self::ntn_tdl_d()),
            _ => None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let profile: Self = toml::from_str(text).map_err(|e| Error::ProfileParse(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn load(path: impl AsRef<FsPath>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::ProfileParse(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::ProfileParse("profile has no taps".into()));
        }
        if !(self.delay_spread_s >= 0.0 && self.max_doppler_hz >= 0.0) {
            return Err(Error::ProfileParse(
                "delay spread and max Doppler must be non-negative".into(),
            ));
        }
        for t in &self.taps {
            if !(t.normalized_delay >= 0.0
                && t.normalized_delay.is_finite()
                && t.power_db.is_finite())
            {
                return Err(Error::ProfileParse(format!(
                    "tap {} has invalid values",
                    t.tap
                )));
            }
        }
        Ok(())
    }

    /// Linear tap powers, before normalization.
    pub fn linear_powers(&self) -> Vec<f64> {
        self.taps
            .iter()
            .map(|t| 10f64.powf(t.power_db / 10.0))
            .collect()
    }

    pub fn with_delay_spread(mut self, delay_spread_s: f64) -> Self {
        self.delay_spread_s = delay_spread_s;
        self
    }

    pub fn with_max_doppler(mut self, max_doppler_hz: f64) -> Self {
        self.max_doppler_hz = max_doppler_hz;
        self
    }

    /// Groups rows into physical taps: a LOS row absorbs the Rayleigh rows
    /// sharing its normalized delay. Groups are ordered by mean power, strongest
    /// first.
    pub fn tap_groups(&self) -> Vec<TapGroup> {
        let powers = self.linear_powers();
        let total: f64 = powers.iter().sum();
        let mut used = vec![false; self.taps.len()];
        let mut groups = Vec::new();
        for (i, t) in self.taps.iter().enumerate() {
            if t.fading != Fading::Los || used[i] {
                continue;
            }
            used[i] = true;
            let mut diffuse = 0.0;
            for (j, u) in self.taps.iter().enumerate() {
                if !used[j]
                    && u.fading == Fading::Rayleigh
                    && (u.normalized_delay - t.normalized_delay).abs() < 1e-12
                {
                    used[j] = true;
                    diffuse += powers[j];
                }
            }
            groups.push(TapGroup {
                normalized_delay: t.normalized_delay,
                los_power: powers[i] / total,
                diffuse_power: diffuse / total,
            });
        }
        for (i, t) in self.taps.iter().enumerate() {
            if !used[i] {
                groups.push(TapGroup {
                    normalized_delay: t.normalized_delay,
                    los_power: 0.0,
                    diffuse_power: powers[i] / total,
                });
            }
        }
        groups.sort_by(|a, b| b.mean_power().total_cmp(&a.mean_power()));
        groups
    }
}

/// A physical tap after merging LOS and diffuse rows; powers are normalized
/// so that all groups of a profile sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TapGroup {
    pub normalized_delay: f64,
    pub los_power: f64,
    pub diffuse_power: f64,
}

impl TapGroup {
    pub fn mean_power(&self) -> f64 {
        self.los_power + self.diffuse_power
    }

    pub fn is_los(&self) -> bool {
        self.los_power > 0.0
    }

    /// Ricean K-factor (linear); infinite for a pure LOS tap.
    pub fn k_factor(&self) -> f64 {
        self.los_power / self.diffuse_power
    }
}

/// Number of Doppler re-draws before a persistent collision becomes an error.
pub const DEFAULT_COLLISION_RETRIES: usize = 8;

/// Draws one channel realization from a power delay profile.
pub fn realize_channel<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    params: &FrameParams,
    user_id: usize,
    rng: &mut R,
) -> Result<UserChannel> {
    realize_channel_with_retries(profile, params, user_id, DEFAULT_COLLISION_RETRIES, rng)
}

pub fn realize_channel_with_retries<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    params: &FrameParams,
    user_id: usize,
    retries: usize,
    rng: &mut R,
) -> Result<UserChannel> {
    profile.validate()?;
    let samples_per_delay = profile.delay_spread_s * params.m() as f64 * params.delta_f();
    let frame_s = params.n() as f64 * params.symbol_duration();
    let los_doppler = profile.los_doppler_hz.unwrap_or(profile.max_doppler_hz);

    let mut paths: Vec<Path> = Vec::new();
    for group in profile.tap_groups() {
        let delay = (group.normalized_delay * samples_per_delay).round() as usize;
        if delay >= params.m() {
            return Err(Error::DelayOverflow {
                tap: delay,
                m: params.m(),
            });
        }
        let mut gain = complex_gaussian(rng, group.diffuse_power);
        if group.is_los() {
            let phase = rng.random_range(0.0..2.0 * PI);
            gain += C64::from_polar(group.los_power.sqrt(), phase);
        }
        let collides = |k: i64, paths: &[Path]| {
            paths
                .iter()
                .any(|p| p.delay_tap == delay && p.doppler_bin(params.n()) == wrap(k, params.n()))
        };
        let draw = |rng: &mut R| -> i64 {
            if group.is_los() {
                (los_doppler * frame_s).round() as i64
            } else {
                let theta = rng.random_range(0.0..2.0 * PI);
                (profile.max_doppler_hz * theta.cos() * frame_s).round() as i64
            }
        };
        let mut doppler = draw(rng);
        let mut attempts = 0;
        while collides(doppler, &paths) {
            if attempts == retries {
                return Err(Error::TapCollision {
                    delay,
                    doppler,
                    attempts,
                });
            }
            attempts += 1;
            doppler = draw(rng);
        }
        paths.push(Path {
            gain,
            delay_tap: delay,
            doppler_tap: doppler,
        });
    }
    UserChannel::new(user_id, paths, params)
}

/// Realizes `users` channels, drawing each one again from scratch (up to
/// `redraws` times) when `retries` Doppler re-draws cannot resolve a tap
/// collision.
pub fn realize_users<R: Rng + ?Sized>(
    profile: &ChannelProfile,
    params: &FrameParams,
    users: usize,
    retries: usize,
    redraws: usize,
    rng: &mut R,
) -> Result<Vec<UserChannel>> {
    (0..users)
        .map(|u| {
            let mut attempt = 0;
            loop {
                match realize_channel_with_retries(profile, params, u, retries, rng) {
                    Err(Error::TapCollision { .. }) if attempt < redraws => attempt += 1,
                    other => return other,
                }
            }
        })
        .collect()
}

/// Normalized carrier frequency offset `eps = f_offset / delta_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfoModel {
    epsilon: f64,
}

impl CfoModel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon.abs() <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "normalized CFO must satisfy |eps| <= 1, got {epsilon}"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn none() -> Self {
        Self { epsilon: 0.0 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Phase factor of sample `q`: `exp(j 2 pi eps q / M)`.
    #[inline]
    pub fn phase(&self, q: usize, m: usize) -> C64 {
        C64::from_polar(1.0, 2.0 * PI * self.epsilon * q as f64 / m as f64)
    }
}

/// `Delta^{eps N} s`: a phase ramp continuous over the whole frame.
pub fn apply_cfo(s: &DVector<C64>, cfo: &CfoModel, params: &FrameParams) -> Result<DVector<C64>> {
    if s.len() != params.mn() {
        return Err(dim_mismatch("apply_cfo", params.mn(), s.len()));
    }
    Ok(DVector::from_iterator(
        s.len(),
        s.iter()
            .enumerate()
            .map(|(q, v)| v * cfo.phase(q, params.m())),
    ))
}

/// Sparse time-domain operator `Delta^{eps N} sum_p h_p Pi^{l_p} Delta^{k_p}`.
#[derive(Debug, Clone)]
pub struct TdOperator {
    params: FrameParams,
    paths: Vec<Path>,
    cfo: CfoModel,
}

impl TdOperator {
    pub fn new(channel: &UserChannel, params: &FrameParams) -> Self {
        Self::with_cfo(channel, CfoModel::none(), params)
    }

    pub fn with_cfo(channel: &UserChannel, cfo: CfoModel, params: &FrameParams) -> Self {
        Self {
            params: *params,
            paths: channel.paths().to_vec(),
            cfo,
        }
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    /// Nonzero entries of row `q` as `(column, value)`.
    fn row_entries(&self, q: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        let mn = self.params.mn();
        let cfo = if self.cfo.epsilon() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            self.cfo.phase(q, self.params.m())
        };
        self.paths.iter().map(move |p| {
            let c = (q + mn - p.delay_tap) % mn;
            let phase = 2.0 * PI * (wrap(p.doppler_tap * c as i64, mn)) as f64 / mn as f64;
            (c, cfo * p.gain * C64::from_polar(1.0, phase))
        })
    }

    pub fn apply(&self, s: &DVector<C64>) -> Result<DVector<C64>> {
        let mn = self.params.mn();
        if s.len() != mn {
            return Err(dim_mismatch("channel apply", mn, s.len()));
        }
        Ok(DVector::from_iterator(
            mn,
            (0..mn).map(|q| self.row_entries(q).map(|(c, h)| h * s[c]).sum()),
        ))
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mn = self.params.mn();
        let mut h = DMatrix::zeros(mn, mn);
        for q in 0..mn {
            for (c, v) in self.row_entries(q) {
                h[(q, c)] += v;
            }
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Td,
    Dd,
    Tf,
}

/// `MN x MN` effective channel in one of the three representations.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub domain: Domain,
    pub matrix: DMatrix<C64>,
}

impl EffectiveChannel {
    pub fn apply(&self, x: &DVector<C64>) -> Result<DVector<C64>> {
        if x.len() != self.matrix.ncols() {
            return Err(dim_mismatch(
                "effective channel",
                self.matrix.ncols(),
                x.len(),
            ));
        }
        Ok(&self.matrix * x)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.matrix.norm()
    }
}

pub fn build_h_td(ch: &UserChannel, params: &FrameParams) -> EffectiveChannel {
    EffectiveChannel {
        domain: Domain::Td,
        matrix: TdOperator::new(ch, params).to_dense(),
    }
}

/// `(F_N kron I_M) H_TD (F_N^H kron I_M)`, assembled column by column through
/// the FFT transforms.
pub fn build_h_dd(ch: &UserChannel, params: &FrameParams) -> EffectiveChannel {
    h_dd_from_operator(&TdOperator::new(ch, params))
}

/// `(I_N kron F_M) H_TD (I_N kron F_M^H)`.
pub fn build_h_tf(ch: &UserChannel, params: &FrameParams) -> EffectiveChannel {
    h_tf_from_operator(&TdOperator::new(ch, params))
}

pub fn h_dd_from_operator(op: &TdOperator) -> EffectiveChannel {
    let modem = OtfsModem::new(*op.params());
    let matrix = push_columns(op, |v| modem.dd_to_td(v), |v| modem.td_to_dd(v));
    EffectiveChannel {
        domain: Domain::Dd,
        matrix,
    }
}

pub fn h_tf_from_operator(op: &TdOperator) -> EffectiveChannel {
    let modem = OtfsModem::new(*op.params());
    let matrix = push_columns(op, |v| modem.heisenberg(v), |v| modem.wigner(v));
    EffectiveChannel {
        domain: Domain::Tf,
        matrix,
    }
}

fn push_columns(
    op: &TdOperator,
    into_td: impl Fn(&DVector<C64>) -> Result<DVector<C64>> + Sync,
    out_of_td: impl Fn(&DVector<C64>) -> Result<DVector<C64>> + Sync,
) -> DMatrix<C64> {
    let mn = op.params().mn();
    let columns: Vec<DVector<C64>> = (0..mn)
        .into_par_iter()
        .map(|c| {
            let mut e = DVector::zeros(mn);
            e[c] = C64::new(1.0, 0.0);
            // Lengths are fixed by construction, so the transforms cannot fail.
            let td = into_td(&e).expect("length matches");
            let y = op.apply(&td).expect("length matches");
            out_of_td(&y).expect("length matches")
        })
        .collect();
    DMatrix::from_columns(&columns)
}

/// `r = H_TD s + w` with `w ~ CN(0, N0 I)`.
pub fn apply_channel<R: Rng + ?Sized>(
    s: &DVector<C64>,
    h_td: &EffectiveChannel,
    n0: f64,
    rng: &mut R,
) -> Result<DVector<C64>> {
    if !(n0 >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "noise PSD must be >= 0, got {n0}"
        )));
    }
    let mut r = h_td.apply(s)?;
    add_noise(&mut r, n0, rng);
    Ok(r)
}

pub fn add_noise<R: Rng + ?Sized>(r: &mut DVector<C64>, n0: f64, rng: &mut R) {
    if n0 > 0.0 {
        r.iter_mut().for_each(|v| *v += complex_gaussian(rng, n0));
    }
}
