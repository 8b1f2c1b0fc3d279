//! The four experiment families. Each averages over seeded channel
//! realizations; realization `r` draws the same channels in every experiment
//! and at every sweep point.

use ddlink_core::access::uniform_power;
use ddlink_core::allocator::{initial_state, penalty_ccp};
use ddlink_core::channel::{h_tf_from_operator, realize_users};
use ddlink_core::linkmodel::{ofdm_block_channels, ofdm_sum_rate, otfs_sum_rate, OfdmBlocks};
use ddlink_core::random::{stream_id, substream};
use ddlink_core::rxchain::{ber_monte_carlo, BerConfig, ChannelSource};
use ddlink_core::{
    AccessScheme, CfoModel, ChannelProfile, FrameParams, GridDomain, LinkBudget, PowerGrid,
    TdOperator, UserChannel,
};
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::report::{num, ExperimentReport};
use crate::CliError;

const CHANNEL_STREAM: u64 = 0x5CE7_A210;

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Channels of realization `r`, one per user.
pub fn scenario_channels(
    cfg: &ScenarioConfig,
    profile: &ChannelProfile,
    params: &FrameParams,
    users: usize,
    realization: usize,
) -> Result<Vec<UserChannel>, CliError> {
    let mut rng = substream(cfg.seed, stream_id(CHANNEL_STREAM, realization as u64));
    Ok(realize_users(
        profile,
        params,
        users,
        cfg.channel.collision_retries,
        cfg.channel.channel_redraws,
        &mut rng,
    )?)
}

fn with_cfo(
    channels: &[UserChannel],
    eps: f64,
    params: &FrameParams,
) -> Result<Vec<UserChannel>, CliError> {
    let cfo = CfoModel::new(eps)?;
    Ok(channels
        .iter()
        .map(|c| c.with_cfo(&cfo, params))
        .collect::<ddlink_core::Result<_>>()?)
}

fn scheme_powers(
    schemes: &[AccessScheme],
    params: &FrameParams,
    users: usize,
    p0: f64,
) -> Result<Vec<PowerGrid>, CliError> {
    Ok(schemes
        .iter()
        .map(|s| uniform_power(&s.mask(params, users)?, p0))
        .collect::<ddlink_core::Result<_>>()?)
}

/// Runs `f` for every realization in parallel and returns results in order.
fn per_realization<T: Send>(
    realizations: usize,
    f: impl Fn(usize) -> Result<T, CliError> + Sync + Send,
) -> Result<Vec<T>, CliError> {
    (0..realizations).into_par_iter().map(f).collect()
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// OTFS sum rate of every OMA scheme under uniform power, versus SNR.
pub fn run_sumrate_oma(cfg: &ScenarioConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let params = cfg.frame_params()?;
    let profile = cfg.channel_profile()?;
    let schemes = cfg.oma_schemes()?;
    let powers = scheme_powers(&schemes, &params, cfg.users, cfg.p0)?;
    let snrs = sorted(&cfg.snr_db);

    let rates = per_realization(cfg.realizations, |r| {
        let channels = scenario_channels(cfg, &profile, &params, cfg.users, r)?;
        let channels = with_cfo(&channels, cfg.sumrate_oma.epsilon, &params)?;
        let mut out = Vec::with_capacity(snrs.len() * powers.len());
        for &snr in &snrs {
            let budget = LinkBudget::from_snr_db(cfg.p0, snr, &params)?;
            for rho in &powers {
                out.push(otfs_sum_rate(rho, &channels, budget.n0, &params)?);
            }
        }
        Ok(out)
    })?;

    let mut report = ExperimentReport::new(
        "sumrate-oma",
        &["snr_db", "scheme", "sum_rate_bits", "realizations", "seed"],
        cfg.seed,
        &cfg.hash(),
    );
    for (si, &snr) in snrs.iter().enumerate() {
        for (ci, scheme) in schemes.iter().enumerate() {
            let idx = si * schemes.len() + ci;
            report.push(vec![
                num(snr),
                scheme.name().into(),
                num(mean(rates.iter().map(|r| r[idx]))),
                cfg.realizations.to_string(),
                cfg.seed.to_string(),
            ]);
        }
    }
    Ok(report)
}

/// Per-user TF block channels under CFO `eps`.
pub fn ofdm_blocks(
    channels: &[UserChannel],
    eps: f64,
    params: &FrameParams,
) -> Result<Vec<OfdmBlocks>, CliError> {
    let cfo = CfoModel::new(eps)?;
    Ok(channels
        .iter()
        .map(|c| {
            ofdm_block_channels(
                &h_tf_from_operator(&TdOperator::with_cfo(c, cfo, params)),
                params,
            )
        })
        .collect::<ddlink_core::Result<_>>()?)
}

/// OTFS and OFDM sum rates versus CFO, plus the rate of an ideal
/// single-path, offset-free channel.
pub fn run_sumrate_cfo(cfg: &ScenarioConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let params = cfg.frame_params()?;
    let profile = cfg.channel_profile()?;
    let scheme: AccessScheme = cfg.sumrate_cfo.scheme.parse()?;
    let rho_dd = uniform_power(&scheme.mask(&params, cfg.users)?, cfg.p0)?;
    let rho_tf = rho_dd.as_domain(GridDomain::Tf);
    let snrs = sorted(&cfg.snr_db);
    let epsilons = sorted(&cfg.epsilon);
    let budgets = snrs
        .iter()
        .map(|&s| LinkBudget::from_snr_db(cfg.p0, s, &params))
        .collect::<ddlink_core::Result<Vec<_>>>()?;

    let ideal_channels: Vec<UserChannel> = (0..cfg.users).map(UserChannel::identity).collect();
    let ideal = budgets
        .iter()
        .map(|b| otfs_sum_rate(&rho_dd, &ideal_channels, b.n0, &params))
        .collect::<ddlink_core::Result<Vec<_>>>()?;

    // [realization][eps][snr] -> (otfs, ofdm)
    let rates = per_realization(cfg.realizations, |r| {
        let channels = scenario_channels(cfg, &profile, &params, cfg.users, r)?;
        epsilons
            .iter()
            .map(|&eps| {
                let shifted = with_cfo(&channels, eps, &params)?;
                let blocks = ofdm_blocks(&channels, eps, &params)?;
                budgets
                    .iter()
                    .map(|b| {
                        Ok((
                            otfs_sum_rate(&rho_dd, &shifted, b.n0, &params)?,
                            ofdm_sum_rate(&rho_tf, &blocks, b.n0, &params)?,
                        ))
                    })
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let mut report = ExperimentReport::new(
        "sumrate-cfo",
        &[
            "snr_db",
            "epsilon",
            "modulation",
            "sum_rate_bits",
            "realizations",
            "seed",
        ],
        cfg.seed,
        &cfg.hash(),
    );
    for (si, &snr) in snrs.iter().enumerate() {
        for (ei, &eps) in epsilons.iter().enumerate() {
            let otfs = mean(rates.iter().map(|r| r[ei][si].0));
            let ofdm = mean(rates.iter().map(|r| r[ei][si].1));
            for (name, value) in [("otfs", otfs), ("ofdm", ofdm), ("ideal", ideal[si])] {
                report.push(vec![
                    num(snr),
                    num(eps),
                    name.into(),
                    num(value),
                    cfg.realizations.to_string(),
                    cfg.seed.to_string(),
                ]);
            }
        }
    }
    Ok(report)
}

pub fn ber_config(cfg: &ScenarioConfig) -> Result<BerConfig, CliError> {
    let b = &cfg.ber;
    let mut ber = BerConfig::new(
        cfg.frame_params()?,
        ChannelSource::Profile(cfg.channel_profile()?),
    );
    ber.constellation = cfg.constellation()?;
    ber.schemes = cfg.ber_schemes()?;
    ber.snr_db = sorted(&b.snr_db);
    ber.epsilons = sorted(&b.epsilon);
    ber.realizations = b.realizations;
    ber.frames_per_realization = b.frames_per_realization;
    ber.seed = cfg.seed;
    ber.zc_root = b.zc_root;
    ber.collision_retries = cfg.channel.collision_retries;
    ber.channel_redraws = cfg.channel.channel_redraws;
    Ok(ber)
}

/// Monte-Carlo BER of the three receiver chains versus SNR and CFO.
pub fn run_ber(cfg: &ScenarioConfig) -> Result<ExperimentReport, CliError> {
    cfg.validate()?;
    let results = ber_monte_carlo(&ber_config(cfg)?)?;
    let mut report = ExperimentReport::new(
        "ber",
        &[
            "scheme", "snr_db", "epsilon", "frames", "bits", "errors", "ber", "seed",
        ],
        cfg.seed,
        &cfg.hash(),
    );
    for r in results {
        report.push(vec![
            r.scheme.name().into(),
            num(r.snr_db),
            num(r.epsilon),
            r.frames.to_string(),
            r.bits.to_string(),
            r.errors.to_string(),
            num(r.ber),
            r.seed.to_string(),
        ]);
    }
    Ok(report)
}

/// Penalty-CCP allocation against the OMA baselines, one row per
/// `(SNR, realization)`, plus the per-iteration convergence trace.
pub fn run_optimizer(
    cfg: &ScenarioConfig,
) -> Result<(ExperimentReport, ExperimentReport), CliError> {
    cfg.validate()?;
    let (params, users) = cfg.optimizer_grid()?;
    let profile = cfg.channel_profile()?;
    let schemes = cfg.oma_schemes()?;
    let powers = scheme_powers(&schemes, &params, users, cfg.p0)?;
    let init_scheme: AccessScheme = cfg.optimizer.init_scheme.parse()?;
    let init_mask = init_scheme.mask(&params, users)?;
    let ccp = cfg.ccp_config(&params, users);
    let snrs = sorted(&cfg.optimizer.snr_db);
    let runs = cfg.optimizer.realizations;

    let tasks: Vec<(usize, usize)> = (0..snrs.len())
        .flat_map(|s| (0..runs).map(move |r| (s, r)))
        .collect();
    let outcomes = tasks
        .par_iter()
        .map(|&(si, r)| {
            let channels = scenario_channels(cfg, &profile, &params, users, r)?;
            let budget = LinkBudget::from_snr_db(cfg.p0, snrs[si], &params)?;
            let oma = powers
                .iter()
                .map(|rho| otfs_sum_rate(rho, &channels, budget.n0, &params))
                .collect::<ddlink_core::Result<Vec<_>>>()?;
            let outcome = penalty_ccp(
                &channels,
                &params,
                &budget,
                &ccp,
                initial_state(&init_mask, cfg.p0)?,
            )?;
            Ok((oma, outcome))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut header = vec!["snr_db", "realization"];
    header.extend(schemes.iter().map(|s| s.name()));
    header.extend([
        "ccp",
        "ccp_relaxed",
        "iterations",
        "converged",
        "binary_gap",
        "seed",
    ]);
    let hash = cfg.hash();
    let mut report = ExperimentReport::new("optimize", &header, cfg.seed, &hash);
    let mut trace = ExperimentReport::new(
        "optimize-trace",
        &[
            "snr_db",
            "realization",
            "iteration",
            "objective",
            "sum_rate_bits",
            "slack_l1",
            "xi",
            "rho_change_l1",
            "slack_change_l1",
            "binary_gap",
            "newton_steps",
        ],
        cfg.seed,
        &hash,
    );
    for (&(si, r), (oma, out)) in tasks.iter().zip(&outcomes) {
        let last_gap = out.trace.last().map_or(0.0, |t| t.binary_gap);
        let mut row = vec![num(snrs[si]), r.to_string()];
        row.extend(oma.iter().map(|v| num(*v)));
        row.extend([
            num(out.sum_rate),
            num(out.relaxed_sum_rate),
            out.iterations().to_string(),
            out.converged.to_string(),
            num(last_gap),
            cfg.seed.to_string(),
        ]);
        report.push(row);
        for t in &out.trace {
            trace.push(vec![
                num(snrs[si]),
                r.to_string(),
                t.iteration.to_string(),
                num(t.objective),
                num(t.sum_rate),
                num(t.slack_l1),
                num(t.xi),
                num(t.rho_change_l1),
                num(t.slack_change_l1),
                num(t.binary_gap),
                t.newton_steps.to_string(),
            ]);
        }
    }
    Ok((report, trace))
}
