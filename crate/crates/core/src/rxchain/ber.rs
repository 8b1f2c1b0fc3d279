//! Monte-Carlo bit error rate of OTFS with LMMSE detection against OFDM with
//! genie one-tap equalization and OFDM with pilot-based estimation.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::constellation::Constellation;
use super::detect::{equalize, LmmseDetector, OneTapOutput};
use super::pilots::{cfo_compensate, ls_channel_estimate, moose_cfo_estimate, zc_pilot};
use crate::channel::{
    add_noise, h_dd_from_operator, h_tf_from_operator, realize_users, CfoModel, ChannelProfile,
    TdOperator, UserChannel, DEFAULT_COLLISION_RETRIES,
};
use crate::ddgrid::{vec, FrameParams, OtfsModem, C64};
use crate::error::{Error, Result};
use crate::linkmodel::{ofdm_block_channels, OfdmBlocks};
use crate::random::{stream_id, substream, SimRng};

/// Number of pilot slots at the head of a practical OFDM frame.
pub const PRACTICAL_PILOT_SLOTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BerScheme {
    /// OTFS with LMMSE detection on the true `H_DD`.
    OtfsLmmse,
    /// OFDM with one-tap equalization on the true diagonal of `H_TF`.
    OfdmOneTap,
    /// OFDM with ZC pilots, Moose CFO estimation and compensation, and LS
    /// channel estimation.
    OfdmPractical,
}

impl BerScheme {
    pub const ALL: [BerScheme; 3] = [
        BerScheme::OtfsLmmse,
        BerScheme::OfdmOneTap,
        BerScheme::OfdmPractical,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BerScheme::OtfsLmmse => "otfs-lmmse",
            BerScheme::OfdmOneTap => "ofdm-1tap",
            BerScheme::OfdmPractical => "ofdm-practical",
        }
    }

    /// Slots per frame that carry data.
    pub fn data_slots(&self, params: &FrameParams) -> usize {
        match self {
            BerScheme::OfdmPractical => params.n().saturating_sub(PRACTICAL_PILOT_SLOTS),
            _ => params.n(),
        }
    }

    pub fn bits_per_frame(&self, params: &FrameParams, constellation: Constellation) -> usize {
        params.m() * self.data_slots(params) * constellation.bits_per_symbol()
    }
}

impl fmt::Display for BerScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BerScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BerScheme::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown BER scheme '{s}'")))
    }
}

/// Where the per-realization channels come from.
#[derive(Debug, Clone)]
pub enum ChannelSource {
    Profile(ChannelProfile),
    Fixed(UserChannel),
}

#[derive(Debug, Clone)]
pub struct BerConfig {
    pub params: FrameParams,
    pub channel: ChannelSource,
    pub constellation: Constellation,
    pub schemes: Vec<BerScheme>,
    /// `SNR = 1 / N0` with unit symbol power; `+inf` means noiseless.
    pub snr_db: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub realizations: usize,
    pub frames_per_realization: usize,
    pub seed: u64,
    pub zc_root: usize,
    /// Doppler re-draws per colliding tap.
    pub collision_retries: usize,
    /// Whole-channel re-draws allowed when a realization hits a tap collision.
    pub channel_redraws: usize,
}

impl BerConfig {
    pub fn new(params: FrameParams, channel: ChannelSource) -> Self {
        Self {
            params,
            channel,
            constellation: Constellation::Qpsk,
            schemes: BerScheme::ALL.to_vec(),
            snr_db: vec![15.0],
            epsilons: vec![0.0],
            realizations: 10,
            frames_per_realization: 10,
            seed: 1,
            zc_root: 1,
            collision_retries: DEFAULT_COLLISION_RETRIES,
            channel_redraws: 16,
        }
    }

    pub fn frames(&self) -> usize {
        self.realizations * self.frames_per_realization
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 || self.frames_per_realization == 0 {
            return Err(Error::InvalidParameter(
                "BER run needs at least one frame".into(),
            ));
        }
        if self.schemes.contains(&BerScheme::OfdmPractical)
            && self.params.n() <= PRACTICAL_PILOT_SLOTS
        {
            return Err(Error::InvalidParameter(format!(
                "practical OFDM needs more than {PRACTICAL_PILOT_SLOTS} slots, got N = {}",
                self.params.n()
            )));
        }
        for &eps in &self.epsilons {
            CfoModel::new(eps)?;
        }
        if let Some(s) = self.snr_db.iter().find(|s| s.is_nan()) {
            return Err(Error::InvalidParameter(format!("SNR {s} dB")));
        }
        zc_pilot(self.params.m(), self.zc_root)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerResult {
    pub scheme: BerScheme,
    pub snr_db: f64,
    pub epsilon: f64,
    pub errors: u64,
    pub bits: u64,
    pub ber: f64,
    pub frames: usize,
    pub seed: u64,
}

fn n0_from_snr_db(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

fn draw_channel(cfg: &BerConfig, realization: usize) -> Result<UserChannel> {
    let profile = match &cfg.channel {
        ChannelSource::Fixed(ch) => return Ok(ch.clone()),
        ChannelSource::Profile(p) => p,
    };
    let mut rng = substream(cfg.seed, stream_id(0xC4A7_7E15, realization as u64));
    Ok(realize_users(
        profile,
        &cfg.params,
        1,
        cfg.collision_retries,
        cfg.channel_redraws,
        &mut rng,
    )?
    .remove(0))
}

fn random_bits(rng: &mut SimRng, count: usize) -> Vec<u8> {
    (0..count).map(|_| u8::from(rng.random::<bool>())).collect()
}

fn count_errors(sent: &[u8], symbols: &[C64], constellation: Constellation) -> u64 {
    let got = constellation.demap_all(symbols);
    sent.iter().zip(&got).filter(|(a, b)| a != b).count() as u64
}

/// Channel-dependent state shared by every frame of one realization.
struct Receivers {
    op: TdOperator,
    modem: OtfsModem,
    lmmse: Vec<Option<LmmseDetector>>,
    blocks: Option<OfdmBlocks>,
    pilot: Vec<C64>,
}

fn build_receivers(cfg: &BerConfig, channel: &UserChannel, eps: f64) -> Result<Receivers> {
    let params = cfg.params;
    let op = TdOperator::with_cfo(channel, CfoModel::new(eps)?, &params);
    let lmmse = if cfg.schemes.contains(&BerScheme::OtfsLmmse) {
        let h_dd = h_dd_from_operator(&op);
        cfg.snr_db
            .iter()
            .map(|&snr| {
                let det = LmmseDetector::new(&h_dd, n0_from_snr_db(snr), 1.0)?;
                Ok(Some(match cfg.constellation {
                    Constellation::Qpsk => det,
                    _ => det.with_unbiasing(),
                }))
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![None; cfg.snr_db.len()]
    };
    let blocks = if cfg.schemes.contains(&BerScheme::OfdmOneTap) {
        Some(ofdm_block_channels(&h_tf_from_operator(&op), &params)?)
    } else {
        None
    };
    Ok(Receivers {
        op,
        modem: OtfsModem::new(params),
        lmmse,
        blocks,
        pilot: zc_pilot(params.m(), cfg.zc_root)?,
    })
}

fn run_frame(
    cfg: &BerConfig,
    rx: &Receivers,
    scheme: BerScheme,
    snr_index: usize,
    rng: &mut SimRng,
) -> Result<(u64, u64)> {
    let params = &cfg.params;
    let (m, n) = (params.m(), params.n());
    let c = cfg.constellation;
    let n0 = n0_from_snr_db(cfg.snr_db[snr_index]);
    let bits = random_bits(rng, scheme.bits_per_frame(params, c));
    let data = c.map_all(&bits)?;

    let detected: Vec<C64> = match scheme {
        BerScheme::OtfsLmmse => {
            let x_dd = DVector::from_vec(data);
            let mut r = rx.op.apply(&rx.modem.dd_to_td(&x_dd)?)?;
            add_noise(&mut r, n0, rng);
            let y_dd = rx.modem.td_to_dd(&r)?;
            let det = rx.lmmse[snr_index].as_ref().expect("built for OTFS runs");
            det.detect(&y_dd)?.iter().copied().collect()
        }
        BerScheme::OfdmOneTap => {
            let x_tf = DVector::from_vec(data);
            let mut r = rx.op.apply(&rx.modem.heisenberg(&x_tf)?)?;
            add_noise(&mut r, n0, rng);
            let y_tf = DMatrix::from_column_slice(m, n, rx.modem.wigner(&r)?.as_slice());
            let blocks = rx.blocks.as_ref().expect("built for OFDM runs");
            let OneTapOutput { symbols, .. } = super::detect::ofdm_onetap_detect(&y_tf, blocks)?;
            symbols.as_slice().to_vec()
        }
        BerScheme::OfdmPractical => {
            let mut x_tf = DMatrix::<C64>::zeros(m, n);
            for s in 0..PRACTICAL_PILOT_SLOTS {
                x_tf.column_mut(s).copy_from_slice(&rx.pilot);
            }
            x_tf.as_mut_slice()[PRACTICAL_PILOT_SLOTS * m..].copy_from_slice(&data);
            let mut r = rx.op.apply(&rx.modem.heisenberg(&vec(&x_tf))?)?;
            add_noise(&mut r, n0, rng);
            let eps_hat = moose_cfo_estimate(&r.as_slice()[..m], &r.as_slice()[m..2 * m])?;
            let r = cfo_compensate(&r, eps_hat, m);
            let y_tf = DMatrix::from_column_slice(m, n, rx.modem.wigner(&r)?.as_slice());
            // Slot 1 is preceded by an identical pilot, so its estimate is free of
            // data interference.
            let h_hat = ls_channel_estimate(y_tf.column(1).as_slice(), &rx.pilot)?;
            let gains = DMatrix::from_fn(m, n, |sc, _| h_hat[sc]);
            let out = equalize(&y_tf, &gains);
            out.symbols.as_slice()[PRACTICAL_PILOT_SLOTS * m..].to_vec()
        }
    };
    Ok((count_errors(&bits, &detected, c), bits.len() as u64))
}

/// Runs every scheme at every `(SNR, eps)` point. Channel realizations are
/// shared by all points and noise and data by all schemes, so comparisons are
/// on matched seeds. Output is ordered by epsilon, then SNR, then scheme.
pub fn ber_monte_carlo(cfg: &BerConfig) -> Result<Vec<BerResult>> {
    cfg.validate()?;
    let (ns, nsch) = (cfg.snr_db.len(), cfg.schemes.len());
    let tasks: Vec<(usize, usize)> = (0..cfg.epsilons.len())
        .flat_map(|e| (0..cfg.realizations).map(move |r| (e, r)))
        .collect();

    let counts: Vec<Vec<(u64, u64)>> = tasks
        .par_iter()
        .map(|&(e, r)| {
            let eps = cfg.epsilons[e];
            let channel = draw_channel(cfg, r)?;
            let rx = build_receivers(cfg, &channel, eps)?;
            let mut out = vec![(0u64, 0u64); ns * nsch];
            for (si, &snr) in cfg.snr_db.iter().enumerate() {
                let point = stream_id(snr.to_bits(), eps.to_bits());
                let base = substream(cfg.seed, stream_id(point, r as u64));
                for (ci, &scheme) in cfg.schemes.iter().enumerate() {
                    let mut rng = base.clone();
                    for f in 0..cfg.frames_per_realization {
                        let (err, bits) =
                            run_frame(cfg, &rx, scheme, si, &mut rng).map_err(|source| {
                                Error::Frame {
                                    frame: r * cfg.frames_per_realization + f,
                                    source: Box::new(source),
                                }
                            })?;
                        let slot = &mut out[si * nsch + ci];
                        slot.0 += err;
                        slot.1 += bits;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut results = Vec::with_capacity(cfg.epsilons.len() * ns * nsch);
    for (e, &eps) in cfg.epsilons.iter().enumerate() {
        for (si, &snr) in cfg.snr_db.iter().enumerate() {
            for (ci, &scheme) in cfg.schemes.iter().enumerate() {
                let (errors, bits) = counts[e * cfg.realizations..(e + 1) * cfg.realizations]
                    .iter()
                    .fold((0, 0), |acc, c| {
                        (acc.0 + c[si * nsch + ci].0, acc.1 + c[si * nsch + ci].1)
                    });
                results.push(BerResult {
                    scheme,
                    snr_db: snr,
                    epsilon: eps,
                    errors,
                    bits,
                    ber: errors as f64 / bits as f64,
                    frames: cfg.frames(),
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(results)
}
