//! Symbol-wise DD input-output relation, interference decomposition and
//! sum-rate analytics for OTFS and OFDM.
//!
//! Each received DD symbol of user `i` is
//!
//! ```text
//! Y[l,k] = sum_p sum_j g_{l,k}^{i,p} X^{(j)}[[l - l_p]_M, [k - k_p]_N] + W[l,k]
//! ```
//!
//! where path 1 of user `i` carries the desired signal, its other paths cause
//! multipath self-interference (MPSI) and every path applied to another user's
//! symbols causes multiuser interference (MUI).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::channel::{EffectiveChannel, Path, UserChannel};
use crate::ddgrid::{FrameParams, C64};
use crate::error::{dim_mismatch, Error, Result};
use crate::tensor::{wrap, Tensor3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridDomain {
    Dd,
    Tf,
}

/// Per-symbol powers `rho[(l, k, i)]` (or `(m, n, i)` in the TF domain).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerGrid {
    pub rho: Tensor3<f64>,
    pub domain: GridDomain,
}

impl PowerGrid {
    pub fn new(rho: Tensor3<f64>, domain: GridDomain) -> Result<Self> {
        if let Some(v) = rho.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "power entries must be >= 0, found {v}"
            )));
        }
        Ok(Self { rho, domain })
    }

    pub fn zeros(params: &FrameParams, k: usize, domain: GridDomain) -> Self {
        Self {
            rho: Tensor3::zeros(params.m(), params.n(), k),
            domain,
        }
    }

    pub fn users(&self) -> usize {
        self.rho.dims().2
    }

    pub fn total(&self) -> f64 {
        self.rho.sum()
    }

    /// Same entries, relabelled as the other domain.
    pub fn as_domain(&self, domain: GridDomain) -> Self {
        Self {
            rho: self.rho.clone(),
            domain,
        }
    }

    /// Sum over users: `T[l, k] = sum_i rho[(l, k, i)]`.
    pub fn occupancy(&self) -> DMatrix<f64> {
        let (m, n, k) = self.rho.dims();
        DMatrix::from_fn(m, n, |l, kk| (0..k).map(|i| self.rho[(l, kk, i)]).sum())
    }

    fn check(&self, params: &FrameParams, users: usize, domain: GridDomain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::InvalidParameter(format!(
                "power grid is in the {:?} domain, expected {domain:?}",
                self.domain
            )));
        }
        let expected = (params.m(), params.n(), users);
        if self.rho.dims() != expected {
            return Err(dim_mismatch(
                "power grid",
                format!("{expected:?}"),
                format!("{:?}", self.rho.dims()),
            ));
        }
        Ok(())
    }
}

/// Total power `P0` and per-sample noise PSD `N0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub p0: f64,
    pub n0: f64,
}

impl LinkBudget {
    pub fn new(p0: f64, n0: f64) -> Result<Self> {
        if !(p0 > 0.0 && n0 > 0.0 && p0.is_finite() && n0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "link budget needs P0 > 0 and N0 > 0, got P0={p0}, N0={n0}"
            )));
        }
        Ok(Self { p0, n0 })
    }

    /// Budget with `SNR = P0 / (MN N0)` given in dB.
    pub fn from_snr_db(p0: f64, snr_db: f64, params: &FrameParams) -> Result<Self> {
        let snr = 10f64.powf(snr_db / 10.0);
        Self::new(p0, p0 / (params.mn() as f64 * snr))
    }

    pub fn snr(&self, params: &FrameParams) -> f64 {
        self.p0 / (params.mn() as f64 * self.n0)
    }

    pub fn snr_db(&self, params: &FrameParams) -> f64 {
        10.0 * self.snr(params).log10()
    }
}

/// Expected powers of the terms of one received symbol.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterferenceBreakdown {
    pub desired: f64,
    pub mpsi: f64,
    pub mui: f64,
    pub noise: f64,
}

impl InterferenceBreakdown {
    pub fn sinr(&self) -> f64 {
        self.desired / (self.mpsi + self.mui + self.noise)
    }
}

/// Noiseless received symbol split into its desired, MPSI and MUI parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolTerms {
    pub desired: C64,
    pub mpsi: C64,
    pub mui: C64,
}

impl SymbolTerms {
    pub fn total(&self) -> C64 {
        self.desired + self.mpsi + self.mui
    }
}

/// `([l - l_p]_M, [k - k_p]_N)`: the transmit block that path `p` maps onto
/// receive block `(l, k)`.
#[inline]
pub fn source_block(l: usize, k: usize, path: &Path, m: usize, n: usize) -> (usize, usize) {
    (
        wrap(l as i64 - path.delay_tap as i64, m),
        wrap(k as i64 - path.doppler_tap, n),
    )
}

/// Symbol-wise effective coefficient `g_{l,k}^{p}`.
pub fn effective_coeff(l: usize, k: usize, path: &Path, params: &FrameParams) -> C64 {
    let (m, n, mn) = (params.m(), params.n(), params.mn() as f64);
    let dl = l as i64 - path.delay_tap as i64;
    let kp = path.doppler_tap as f64;
    if dl >= 0 {
        path.gain * C64::from_polar(1.0, 2.0 * PI * kp * dl as f64 / mn)
    } else {
        let wrapped = wrap(dl, m) as f64;
        path.gain
            * C64::from_polar(1.0, 2.0 * PI * kp * wrapped / mn)
            * C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)
    }
}

fn check_users(channels: &[UserChannel], i: usize) -> Result<()> {
    if i >= channels.len() {
        return Err(Error::InvalidParameter(format!(
            "user {i} out of range for {} channels",
            channels.len()
        )));
    }
    Ok(())
}

/// Noiseless `Y^{(i)}[l, k]` from the per-user DD symbol matrices.
pub fn symbolwise_output(
    x_dd: &[DMatrix<C64>],
    channels: &[UserChannel],
    i: usize,
    l: usize,
    k: usize,
    params: &FrameParams,
) -> Result<SymbolTerms> {
    check_users(channels, i)?;
    let (m, n) = (params.m(), params.n());
    for x in x_dd {
        if x.shape() != (m, n) {
            return Err(dim_mismatch(
                "DD symbols",
                format!("{m}x{n}"),
                format!("{:?}", x.shape()),
            ));
        }
    }
    if i >= x_dd.len() || l >= m || k >= n {
        return Err(Error::InvalidParameter(format!(
            "index (user {i}, l {l}, k {k}) outside {} users on a {m}x{n} grid",
            x_dd.len()
        )));
    }
    let zero = C64::new(0.0, 0.0);
    let mut terms = SymbolTerms {
        desired: zero,
        mpsi: zero,
        mui: zero,
    };
    for (p, path) in channels[i].paths().iter().enumerate() {
        let g = effective_coeff(l, k, path, params);
        let src = source_block(l, k, path, m, n);
        for (j, x) in x_dd.iter().enumerate() {
            let v = g * x[src];
            match (j == i, p == 0) {
                (true, true) => terms.desired += v,
                (true, false) => terms.mpsi += v,
                (false, _) => terms.mui += v,
            }
        }
    }
    Ok(terms)
}

/// Full noiseless received grid of user `i`, assembled symbol by symbol.
pub fn symbolwise_grid(
    x_dd: &[DMatrix<C64>],
    channels: &[UserChannel],
    i: usize,
    params: &FrameParams,
) -> Result<DMatrix<C64>> {
    let mut y = DMatrix::zeros(params.m(), params.n());
    for k in 0..params.n() {
        for l in 0..params.m() {
            y[(l, k)] = symbolwise_output(x_dd, channels, i, l, k, params)?.total();
        }
    }
    Ok(y)
}

/// Expected desired, MPSI and MUI powers of `Y^{(i)}[l, k]` under independent
/// `CN(0, rho)` symbols.
pub fn interference_powers(
    i: usize,
    l: usize,
    k: usize,
    rho: &PowerGrid,
    channels: &[UserChannel],
    n0: f64,
) -> InterferenceBreakdown {
    let (m, n, users) = rho.rho.dims();
    let mut out = InterferenceBreakdown {
        noise: n0,
        ..Default::default()
    };
    for (p, path) in channels[i].paths().iter().enumerate() {
        let g2 = path.power();
        let (sl, sk) = source_block(l, k, path, m, n);
        for j in 0..users {
            let v = g2 * rho.rho[(sl, sk, j)];
            match (j == i, p == 0) {
                (true, true) => out.desired += v,
                (true, false) => out.mpsi += v,
                (false, _) => out.mui += v,
            }
        }
    }
    out
}

fn check_dd(rho: &PowerGrid, channels: &[UserChannel], params: &FrameParams) -> Result<()> {
    rho.check(params, channels.len(), GridDomain::Dd)
}

/// SINR of the `(l, k)`-th received symbol of user `i`.
pub fn otfs_sinr(
    i: usize,
    l: usize,
    k: usize,
    rho: &PowerGrid,
    channels: &[UserChannel],
    n0: f64,
    params: &FrameParams,
) -> Result<f64> {
    check_dd(rho, channels, params)?;
    check_users(channels, i)?;
    Ok(interference_powers(i, l, k, rho, channels, n0).sinr())
}

/// Per-symbol rates `R[(l, k, i)] = log2(1 + Gamma) / 2`.
pub fn otfs_rate_terms(
    rho: &PowerGrid,
    channels: &[UserChannel],
    n0: f64,
    params: &FrameParams,
) -> Result<Tensor3<f64>> {
    check_dd(rho, channels, params)?;
    let (m, n, k) = rho.rho.dims();
    let occupancy = rho.occupancy();
    let mut rates = Tensor3::zeros(m, n, k);
    for (i, ch) in channels.iter().enumerate() {
        let paths = ch.paths();
        for kk in 0..n {
            for l in 0..m {
                let (dl, dk) = source_block(l, kk, &paths[0], m, n);
                let signal = paths[0].power() * rho.rho[(dl, dk, i)];
                if signal == 0.0 {
                    continue;
                }
                let mut interference =
                    paths[0].power() * (occupancy[(dl, dk)] - rho.rho[(dl, dk, i)]).max(0.0);
                for path in &paths[1..] {
                    interference += path.power() * occupancy[source_block(l, kk, path, m, n)];
                }
                rates[(l, kk, i)] = 0.5 * (1.0 + signal / (interference + n0)).log2();
            }
        }
    }
    Ok(rates)
}

/// OTFS sum rate in bits per frame.
pub fn otfs_sum_rate(
    rho: &PowerGrid,
    channels: &[UserChannel],
    n0: f64,
    params: &FrameParams,
) -> Result<f64> {
    Ok(otfs_rate_terms(rho, channels, n0, params)?.sum())
}

/// Per-slot diagonal blocks `H_{n,0}` and sub-diagonal blocks `H_{n,1}` of a
/// TF channel, with the energy of every other block kept as a diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmBlocks {
    pub current: Vec<DMatrix<C64>>,
    /// `previous[0]` is all zeros: slot 0 has no preceding slot.
    pub previous: Vec<DMatrix<C64>>,
    pub residual_energy: f64,
}

impl OfdmBlocks {
    pub fn slots(&self) -> usize {
        self.current.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.current.first().map_or(0, |b| b.nrows())
    }

    pub fn block_energy(&self) -> f64 {
        self.current
            .iter()
            .chain(&self.previous)
            .map(|b| b.norm_squared())
            .sum()
    }
}

pub fn ofdm_block_channels(h_tf: &EffectiveChannel, params: &FrameParams) -> Result<OfdmBlocks> {
    let (m, n) = (params.m(), params.n());
    let h = &h_tf.matrix;
    if h.shape() != (m * n, m * n) {
        return Err(dim_mismatch(
            "TF channel",
            format!("{0}x{0}", m * n),
            format!("{:?}", h.shape()),
        ));
    }
    let block = |r: usize, c: usize| h.view((r * m, c * m), (m, m)).into_owned();
    let current: Vec<_> = (0..n).map(|s| block(s, s)).collect();
    let previous: Vec<_> = (0..n)
        .map(|s| {
            if s == 0 {
                DMatrix::zeros(m, m)
            } else {
                block(s, s - 1)
            }
        })
        .collect();
    let kept: f64 = current
        .iter()
        .chain(&previous)
        .map(|b| b.norm_squared())
        .sum();
    let residual_energy = (h.norm_squared() - kept).max(0.0);
    Ok(OfdmBlocks {
        current,
        previous,
        residual_energy,
    })
}

/// Expected powers of one received OFDM symbol.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OfdmInterference {
    pub desired: f64,
    pub ici: f64,
    pub isi: f64,
    pub noise: f64,
}

impl OfdmInterference {
    pub fn sinr(&self) -> f64 {
        self.desired / (self.ici + self.isi + self.noise)
    }
}

/// Per-symbol OFDM interference terms for subcarrier `m`, slot `n`, user `i`.
/// ICI counts every user's power on the other subcarriers of slot `n`; ISI
/// counts every user's power in slot `n - 1`.
pub fn ofdm_interference(
    i: usize,
    m: usize,
    n: usize,
    rho: &PowerGrid,
    blocks: &[OfdmBlocks],
    n0: f64,
) -> OfdmInterference {
    let (mm, _, users) = rho.rho.dims();
    let b = &blocks[i];
    let mut out = OfdmInterference {
        desired: b.current[n][(m, m)].norm_sqr() * rho.rho[(m, n, i)],
        noise: n0,
        ..Default::default()
    };
    for j in 0..users {
        for mp in 0..mm {
            if mp != m {
                out.ici += b.current[n][(m, mp)].norm_sqr() * rho.rho[(mp, n, j)];
            }
            if n > 0 {
                out.isi += b.previous[n][(m, mp)].norm_sqr() * rho.rho[(mp, n - 1, j)];
            }
        }
    }
    out
}

/// Per-symbol OFDM rates `R[(m, n, i)]`.
pub fn ofdm_rate_terms(
    rho: &PowerGrid,
    blocks: &[OfdmBlocks],
    n0: f64,
    params: &FrameParams,
) -> Result<Tensor3<f64>> {
    rho.check(params, blocks.len(), GridDomain::Tf)?;
    let (m, n, k) = rho.rho.dims();
    for b in blocks {
        if b.slots() != n || b.subcarriers() != m {
            return Err(dim_mismatch(
                "OFDM blocks",
                format!("{n} slots of {m} subcarriers"),
                format!("{} slots of {} subcarriers", b.slots(), b.subcarriers()),
            ));
        }
    }
    let occupancy = rho.occupancy();
    let mut rates = Tensor3::zeros(m, n, k);
    for (i, b) in blocks.iter().enumerate() {
        let cur2: Vec<DMatrix<f64>> = b.current.iter().map(|h| h.map(|v| v.norm_sqr())).collect();
        let prev2: Vec<DMatrix<f64>> = b.previous.iter().map(|h| h.map(|v| v.norm_sqr())).collect();
        for s in 0..n {
            let t_now = DVector::from_iterator(m, occupancy.column(s).iter().copied());
            let mut interference = &cur2[s] * &t_now;
            if s > 0 {
                let t_prev = DVector::from_iterator(m, occupancy.column(s - 1).iter().copied());
                interference += &prev2[s] * t_prev;
            }
            for sc in 0..m {
                let signal = cur2[s][(sc, sc)] * rho.rho[(sc, s, i)];
                if signal == 0.0 {
                    continue;
                }
                let own = cur2[s][(sc, sc)] * occupancy[(sc, s)];
                let denom = (interference[sc] - own).max(0.0) + n0;
                rates[(sc, s, i)] = 0.5 * (1.0 + signal / denom).log2();
            }
        }
    }
    Ok(rates)
}

/// OFDM sum rate in bits per frame.
pub fn ofdm_sum_rate(
    rho: &PowerGrid,
    blocks: &[OfdmBlocks],
    n0: f64,
    params: &FrameParams,
) -> Result<f64> {
    Ok(ofdm_rate_terms(rho, blocks, n0, params)?.sum())
}
