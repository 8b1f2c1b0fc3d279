//! Gray-labelled unit-energy QPSK and 16QAM.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::ddgrid::C64;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constellation {
    Qpsk,
    Qam16,
}

impl Constellation {
    pub fn bits_per_symbol(&self) -> usize {
        match self {
            Constellation::Qpsk => 2,
            Constellation::Qam16 => 4,
        }
    }

    pub fn order(&self) -> usize {
        1 << self.bits_per_symbol()
    }

    /// Bits per axis and the axis scale.
    fn axis(&self) -> (usize, f64) {
        match self {
            Constellation::Qpsk => (1, FRAC_1_SQRT_2),
            Constellation::Qam16 => (2, 1.0 / 10f64.sqrt()),
        }
    }

    fn map_axis(bits: &[u8]) -> f64 {
        match bits {
            [b] => 1.0 - 2.0 * f64::from(*b),
            // Gray order along the axis: 10 -> -3, 11 -> -1, 01 -> +1, 00 -> +3.
            [b0, b1] => {
                let sign = 1.0 - 2.0 * f64::from(*b0);
                let mag = if *b1 == 0 { 3.0 } else { 1.0 };
                sign * mag
            }
            _ => unreachable!("axes carry one or two bits"),
        }
    }

    fn demap_axis(v: f64, out: &mut [u8]) {
        match out.len() {
            1 => out[0] = u8::from(v < 0.0),
            2 => {
                out[0] = u8::from(v < 0.0);
                out[1] = u8::from(v.abs() < 2.0);
            }
            _ => unreachable!("axes carry one or two bits"),
        }
    }

    /// Maps `bits_per_symbol` bits (first half on I, second half on Q).
    pub fn map(&self, bits: &[u8]) -> C64 {
        let (per_axis, scale) = self.axis();
        C64::new(
            Self::map_axis(&bits[..per_axis]) * scale,
            Self::map_axis(&bits[per_axis..2 * per_axis]) * scale,
        )
    }

    pub fn map_all(&self, bits: &[u8]) -> Result<Vec<C64>> {
        let b = self.bits_per_symbol();
        if bits.len() % b != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} bits do not fill {b}-bit symbols",
                bits.len()
            )));
        }
        Ok(bits.chunks(b).map(|c| self.map(c)).collect())
    }

    /// Hard decision to the nearest point, returning its label.
    pub fn demap(&self, symbol: C64, out: &mut [u8]) {
        let (per_axis, scale) = self.axis();
        Self::demap_axis(symbol.re / scale, &mut out[..per_axis]);
        Self::demap_axis(symbol.im / scale, &mut out[per_axis..2 * per_axis]);
    }

    pub fn demap_all(&self, symbols: &[C64]) -> Vec<u8> {
        let b = self.bits_per_symbol();
        let mut out = vec![0u8; symbols.len() * b];
        for (s, chunk) in symbols.iter().zip(out.chunks_mut(b)) {
            self.demap(*s, chunk);
        }
        out
    }

    /// All points in label order (label bits read MSB first).
    pub fn points(&self) -> Vec<C64> {
        let b = self.bits_per_symbol();
        (0..self.order())
            .map(|label| {
                let bits: Vec<u8> = (0..b).map(|j| ((label >> (b - 1 - j)) & 1) as u8).collect();
                self.map(&bits)
            })
            .collect()
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Constellation::Qpsk => "QPSK",
            Constellation::Qam16 => "16QAM",
        })
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" | "4qam" => Ok(Constellation::Qpsk),
            "16qam" | "qam16" => Ok(Constellation::Qam16),
            _ => Err(Error::InvalidParameter(format!(
                "unknown constellation '{s}'"
            ))),
        }
    }
}
