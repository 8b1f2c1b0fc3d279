#![allow(dead_code)]

use ddlink_core::random::complex_gaussian;
use ddlink_core::{FrameParams, Path, UserChannel};
use rand::Rng;

pub fn params(m: usize, n: usize) -> FrameParams {
    FrameParams::new(m, n, 15e3).unwrap()
}

/// Random integer-tap channel with `paths` distinct delay/Doppler bins and
/// unit mean total power; the strongest path is listed first.
pub fn random_channel<R: Rng>(
    rng: &mut R,
    user: usize,
    paths: usize,
    p: &FrameParams,
) -> UserChannel {
    loop {
        let mut list: Vec<Path> = (0..paths)
            .map(|_| Path {
                gain: complex_gaussian(rng, 1.0 / paths as f64),
                delay_tap: rng.random_range(0..p.m()),
                doppler_tap: rng.random_range(-(p.n() as i64) / 2..=(p.n() as i64 - 1) / 2),
            })
            .collect();
        list.sort_by(|a, b| b.power().total_cmp(&a.power()));
        if let Ok(ch) = UserChannel::new(user, list, p) {
            return ch;
        }
    }
}

pub fn random_channels<R: Rng>(
    rng: &mut R,
    k: usize,
    paths: usize,
    p: &FrameParams,
) -> Vec<UserChannel> {
    (0..k).map(|u| random_channel(rng, u, paths, p)).collect()
}
