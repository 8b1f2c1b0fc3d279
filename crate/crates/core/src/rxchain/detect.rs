//! Symbol detectors: LMMSE for OTFS and the one-tap OFDM equalizer.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::channel::EffectiveChannel;
use crate::ddgrid::C64;
use crate::error::{dim_mismatch, Error, Result};
use crate::linkmodel::OfdmBlocks;

/// Entries below this fraction of the largest magnitude are dropped when the
/// channel matrix is stored sparsely.
const SPARSITY_THRESHOLD: f64 = 1e-14;

/// `x = H^H (H H^H + (N0 / rho) I)^{-1} y`, factorized once per channel.
#[derive(Debug, Clone)]
pub struct LmmseDetector {
    /// Nonzeros of each column as `(row, value)`.
    columns: Vec<Vec<(usize, C64)>>,
    chol: Cholesky<C64, Dyn>,
    /// Per-symbol gain `h_c^H G^{-1} h_c`, computed on request.
    gains: Option<DVector<f64>>,
}

impl LmmseDetector {
    pub fn new(h: &EffectiveChannel, n0: f64, symbol_power: f64) -> Result<Self> {
        if !(n0 >= 0.0 && symbol_power > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "LMMSE needs N0 >= 0 and symbol power > 0, got {n0}, {symbol_power}"
            )));
        }
        let mat = &h.matrix;
        let dim = mat.nrows();
        if mat.ncols() != dim {
            return Err(dim_mismatch(
                "LMMSE channel",
                "square",
                format!("{:?}", mat.shape()),
            ));
        }
        let cut = SPARSITY_THRESHOLD * mat.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let columns: Vec<Vec<(usize, C64)>> = (0..dim)
            .map(|c| {
                mat.column(c)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.norm() > cut)
                    .map(|(r, v)| (r, *v))
                    .collect()
            })
            .collect();
        let mut gram = DMatrix::<C64>::zeros(dim, dim);
        for col in &columns {
            for &(r1, v1) in col {
                for &(r2, v2) in col {
                    gram[(r1, r2)] += v1 * v2.conj();
                }
            }
        }
        let reg = n0 / symbol_power;
        for d in 0..dim {
            gram[(d, d)] += C64::new(reg, 0.0);
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numerical("LMMSE Gram matrix is singular".into()))?;
        Ok(Self {
            columns,
            chol,
            gains: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Computes the per-symbol gains used to unbias amplitude-carrying
    /// constellations.
    pub fn with_unbiasing(mut self) -> Self {
        let dim = self.dim();
        let mut h = DMatrix::<C64>::zeros(dim, dim);
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                h[(r, c)] = v;
            }
        }
        let solved = self.chol.solve(&h);
        self.gains = Some(DVector::from_fn(dim, |c, _| {
            self.columns[c]
                .iter()
                .map(|&(r, v)| (v.conj() * solved[(r, c)]).re)
                .sum()
        }));
        self
    }

    pub fn detect(&self, y: &DVector<C64>) -> Result<DVector<C64>> {
        if y.len() != self.dim() {
            return Err(dim_mismatch("LMMSE input", self.dim(), y.len()));
        }
        let z = self.chol.solve(y);
        let mut x = DVector::from_iterator(
            self.dim(),
            self.columns
                .iter()
                .map(|col| col.iter().map(|&(r, v)| v.conj() * z[r]).sum::<C64>()),
        );
        if let Some(g) = &self.gains {
            for (v, gain) in x.iter_mut().zip(g.iter()) {
                if *gain > 0.0 {
                    *v /= *gain;
                }
            }
        }
        Ok(x)
    }
}

/// One-shot LMMSE detection.
pub fn lmmse_detect(
    y: &DVector<C64>,
    h: &EffectiveChannel,
    n0: f64,
    symbol_power: f64,
) -> Result<DVector<C64>> {
    LmmseDetector::new(h, n0, symbol_power)?.detect(y)
}

/// Soft symbols of a one-tap OFDM equalizer plus an erasure flag per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct OneTapOutput {
    pub symbols: DMatrix<C64>,
    pub erased: DMatrix<bool>,
}

/// Divides each received TF symbol by the diagonal of its slot block.
pub fn ofdm_onetap_detect(y_tf: &DMatrix<C64>, blocks: &OfdmBlocks) -> Result<OneTapOutput> {
    let (m, n) = (blocks.subcarriers(), blocks.slots());
    if y_tf.shape() != (m, n) {
        return Err(dim_mismatch(
            "OFDM grid",
            format!("{m}x{n}"),
            format!("{:?}", y_tf.shape()),
        ));
    }
    let gains = DMatrix::from_fn(m, n, |sc, s| blocks.current[s][(sc, sc)]);
    Ok(equalize(y_tf, &gains))
}

/// Per-entry division `y / h`, flagging gains below `1e-12` as erasures.
pub fn equalize(y: &DMatrix<C64>, gains: &DMatrix<C64>) -> OneTapOutput {
    let erased = gains.map(|h| h.norm() < 1e-12);
    let symbols = DMatrix::from_fn(y.nrows(), y.ncols(), |r, c| {
        if erased[(r, c)] {
            C64::new(0.0, 0.0)
        } else {
            y[(r, c)] / gains[(r, c)]
        }
    });
    OneTapOutput { symbols, erased }
}
