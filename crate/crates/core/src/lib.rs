//! Delay-Doppler multiple access over LEO satellite downlinks.
//!
//! The crate models an OTFS downlink in which a satellite serves `K` users
//! over one `M x N` delay-Doppler frame, and compares it with OFDM over the
//! same time-frequency resources.
//!
//! - [`ddgrid`]: frame parameters, ISFFT/SFFT, Heisenberg/Wigner transforms.
//! - [`channel`]: integer-tap channel realizations and effective channel matrices.
//! - [`linkmodel`]: per-path SINR and sum rate for OTFS and OFDM.
//! - [`access`]: resource masks for the four multiple-access schemes.
//! - [`allocator`]: joint power/resource allocation by penalty CCP.
//! - [`rxchain`]: modulation, detection, pilots, and BER simulation.

pub mod access;
pub mod allocator;
pub mod channel;
pub mod ddgrid;
pub mod error;
pub mod linkmodel;
pub mod random;
pub mod rxchain;
pub mod tensor;

pub use access::{AccessMask, AccessScheme};
pub use allocator::{AllocationState, CcpConfig, CcpOutcome};
pub use channel::{
    apply_cfo, apply_channel, build_h_dd, build_h_td, build_h_tf, realize_channel, realize_users,
    CfoModel, ChannelProfile, Domain, EffectiveChannel, Path, TdOperator, UserChannel,
};
pub use ddgrid::{DdGrid, FrameParams, OtfsModem, PulseShape, TdGrid, TfGrid, C64};
pub use error::{Error, Result};
pub use linkmodel::{GridDomain, LinkBudget, PowerGrid};
pub use rxchain::{BerResult, BerScheme, Constellation};
pub use tensor::Tensor3;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
