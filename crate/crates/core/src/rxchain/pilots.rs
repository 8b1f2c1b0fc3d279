//! Zadoff-Chu pilots, least-squares channel estimation and Moose CFO
//! estimation for the practical OFDM receiver.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::ddgrid::C64;
use crate::error::{dim_mismatch, Error, Result};

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Length-`m` Zadoff-Chu sequence: `exp(j pi u m^2 / M)` for even `M`,
/// `exp(j pi u m (m + 1) / M)` for odd `M`.
pub fn zc_pilot(m: usize, root: usize) -> Result<Vec<C64>> {
    if m == 0 || root == 0 || gcd(root, m) != 1 {
        return Err(Error::InvalidParameter(format!(
            "Zadoff-Chu root {root} must be coprime with length {m}"
        )));
    }
    let (mf, u) = (m as f64, root as f64);
    Ok((0..m)
        .map(|i| {
            let i = i as f64;
            let arg = if m % 2 == 0 { i * i } else { i * (i + 1.0) };
            C64::from_polar(1.0, PI * u * arg / mf)
        })
        .collect())
}

/// `H[m] = Y[m] / pilot[m]`.
pub fn ls_channel_estimate(y: &[C64], pilot: &[C64]) -> Result<Vec<C64>> {
    if y.len() != pilot.len() {
        return Err(dim_mismatch("LS estimate", pilot.len(), y.len()));
    }
    Ok(y.iter().zip(pilot).map(|(y, p)| y / p).collect())
}

/// `eps = arg(sum y2 conj(y1)) / 2 pi` from two received copies of the same
/// `M`-sample block spaced `M` samples apart. The range is `(-1/2, 1/2]`.
pub fn moose_cfo_estimate(y1: &[C64], y2: &[C64]) -> Result<f64> {
    if y1.len() != y2.len() {
        return Err(dim_mismatch("Moose blocks", y1.len(), y2.len()));
    }
    let corr: C64 = y1.iter().zip(y2).map(|(a, b)| b * a.conj()).sum();
    if corr.norm() == 0.0 {
        return Err(Error::ZeroCorrelation);
    }
    Ok(corr.arg() / (2.0 * PI))
}

/// `r[q] exp(-j 2 pi eps q / M)`.
pub fn cfo_compensate(r: &DVector<C64>, eps_hat: f64, m: usize) -> DVector<C64> {
    DVector::from_iterator(
        r.len(),
        r.iter()
            .enumerate()
            .map(|(q, v)| v * C64::from_polar(1.0, -2.0 * PI * eps_hat * q as f64 / m as f64)),
    )
}
