//! Shared fixtures for the benchmarks.

use ddlink_core::channel::realize_users;
use ddlink_core::random::{complex_gaussian, substream};
use ddlink_core::{ChannelProfile, FrameParams, UserChannel, C64};
use nalgebra::DMatrix;

pub fn params(m: usize, n: usize) -> FrameParams {
    FrameParams::new(m, n, 15e3).expect("valid frame")
}

pub fn random_grid(m: usize, n: usize, seed: u64) -> DMatrix<C64> {
    let mut rng = substream(seed, 0);
    DMatrix::from_fn(m, n, |_, _| complex_gaussian(&mut rng, 1.0))
}

/// `users` NTN-TDL-D channels on the given grid.
pub fn tdl_d_channels(params: &FrameParams, users: usize, seed: u64) -> Vec<UserChannel> {
    let profile = ChannelProfile::builtin("ntn-tdl-d").expect("builtin profile");
    realize_users(&profile, params, users, 8, 16, &mut substream(seed, 1))
        .expect("realizable channel")
}
