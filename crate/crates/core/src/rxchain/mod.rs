//! Receiver chains and Monte-Carlo BER.

mod ber;
mod constellation;
mod detect;
mod pilots;

pub use ber::{
    ber_monte_carlo, BerConfig, BerResult, BerScheme, ChannelSource, PRACTICAL_PILOT_SLOTS,
};
pub use constellation::Constellation;
pub use detect::{equalize, lmmse_detect, ofdm_onetap_detect, LmmseDetector, OneTapOutput};
pub use pilots::{cfo_compensate, ls_channel_estimate, moose_cfo_estimate, zc_pilot};
