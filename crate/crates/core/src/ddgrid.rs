//! Delay-Doppler grid geometry and the lattice transforms between the
//! delay-Doppler (DD), time-frequency (TF) and time-delay (TD) domains.
//!
//! All DFT matrices are unitary: `F_M[a, b] = exp(-j 2 pi a b / M) / sqrt(M)`.
//! Grids are `M x N` matrices whose rows are delay bins (or subcarriers) and
//! whose columns are Doppler bins (or time slots). [`vec`] stacks columns,
//! so sample `q = l + n M` of a TD vector is delay sample `l` of slot `n`.
//!
//! The FFT-backed routines in [`OtfsModem`] are the production path; the
//! [`dense`] module holds explicit matrix versions used as references.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{dim_mismatch, Error, Result};

pub type C64 = Complex64;

/// Frame geometry shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    m: usize,
    n: usize,
    delta_f: f64,
    symbol_duration: f64,
}

impl FrameParams {
    /// Builds a frame with `T = 1 / delta_f`.
    pub fn new(m: usize, n: usize, delta_f: f64) -> Result<Self> {
        Self::with_symbol_duration(m, n, delta_f, 1.0 / delta_f)
    }

    pub fn with_symbol_duration(m: usize, n: usize, delta_f: f64, t: f64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid needs M >= 1 and N >= 1, got M={m}, N={n}"
            )));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "subcarrier spacing must be positive, got {delta_f}"
            )));
        }
        if !((t * delta_f - 1.0).abs() <= 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "symbol duration {t} s is not 1/delta_f for delta_f={delta_f} Hz"
            )));
        }
        Ok(Self {
            m,
            n,
            delta_f,
            symbol_duration: t,
        })
    }

    /// Delay bins (subcarriers).
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Doppler bins (time slots).
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
    }

    /// Delay resolution `1 / (M delta_f)` in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `1 / (N T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n as f64 * self.symbol_duration)
    }

    fn check_grid(&self, context: &'static str, mat: &DMatrix<C64>) -> Result<()> {
        if mat.nrows() != self.m || mat.ncols() != self.n {
            return Err(dim_mismatch(
                context,
                format!("{}x{}", self.m, self.n),
                format!("{}x{}", mat.nrows(), mat.ncols()),
            ));
        }
        Ok(())
    }

    fn check_len(&self, context: &'static str, len: usize) -> Result<()> {
        if len != self.mn() {
            return Err(dim_mismatch(context, self.mn(), len));
        }
        Ok(())
    }
}

macro_rules! grid_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(pub DMatrix<C64>);

        impl $name {
            pub fn new(data: DMatrix<C64>) -> Self {
                Self(data)
            }

            pub fn zeros(params: &FrameParams) -> Self {
                Self(DMatrix::zeros(params.m(), params.n()))
            }

            pub fn matrix(&self) -> &DMatrix<C64> {
                &self.0
            }

            pub fn into_matrix(self) -> DMatrix<C64> {
                self.0
            }

            pub fn to_vec(&self) -> DVector<C64> {
                vec(&self.0)
            }

            pub fn from_vec(v: &DVector<C64>, params: &FrameParams) -> Result<Self> {
                unvec(v, params).map(Self)
            }
        }
    };
}

grid_newtype!(
    /// Symbols on the delay-Doppler lattice; entry `[l, k]` sits at delay bin
    /// `l` and Doppler bin `k`.
    DdGrid
);
grid_newtype!(
    /// Symbols on the time-frequency lattice; entry `[m, n]` is subcarrier `m`
    /// of slot `n`.
    TfGrid
);
grid_newtype!(
    /// Time-delay samples; column `n` holds the `M` samples of slot `n`.
    TdGrid
);

/// Column-major stacking of an `M x N` matrix.
pub fn vec(mat: &DMatrix<C64>) -> DVector<C64> {
    DVector::from_column_slice(mat.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<C64>, params: &FrameParams) -> Result<DMatrix<C64>> {
    params.check_len("unvec", v.len())?;
    Ok(DMatrix::from_column_slice(
        params.m(),
        params.n(),
        v.as_slice(),
    ))
}

/// Diagonal transmit/receive pulse samples `g(0), g(T/M), ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseShape {
    pub g_tx: Vec<f64>,
    pub g_rx: Vec<f64>,
}

impl PulseShape {
    pub fn rectangular(m: usize) -> Self {
        Self {
            g_tx: vec![1.0; m],
            g_rx: vec![1.0; m],
        }
    }

    pub fn is_rectangular(&self) -> bool {
        self.g_tx.iter().chain(&self.g_rx).all(|&g| g == 1.0)
    }

    fn check(&self, params: &FrameParams) -> Result<()> {
        if self.g_tx.len() != params.m() || self.g_rx.len() != params.m() {
            return Err(dim_mismatch(
                "pulse shape",
                params.m(),
                format!("tx {} / rx {}", self.g_tx.len(), self.g_rx.len()),
            ));
        }
        Ok(())
    }
}

/// Planned unitary FFTs for one frame geometry.
///
/// Cheap to clone and safe to share between threads.
#[derive(Clone)]
pub struct OtfsModem {
    params: FrameParams,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for OtfsModem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OtfsModem")
            .field("params", &self.params)
            .finish()
    }
}

impl OtfsModem {
    pub fn new(params: FrameParams) -> Self {
        let mut planner = FftPlanner::<f64>::new();
        Self {
            params,
            fwd_m: planner.plan_fft_forward(params.m()),
            inv_m: planner.plan_fft_inverse(params.m()),
            fwd_n: planner.plan_fft_forward(params.n()),
            inv_n: planner.plan_fft_inverse(params.n()),
        }
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    /// Unitary DFT (or inverse DFT) of every column in place.
    fn columns(&self, mat: &mut DMatrix<C64>, inverse: bool) {
        let fft = if inverse { &self.inv_m } else { &self.fwd_m };
        let scale = 1.0 / (self.params.m() as f64).sqrt();
        let slice = mat.as_mut_slice();
        fft.process(slice);
        slice.iter_mut().for_each(|v| *v *= scale);
    }

    /// Unitary DFT (or inverse DFT) of every row in place.
    fn rows(&self, mat: &mut DMatrix<C64>, inverse: bool) {
        let fft = if inverse { &self.inv_n } else { &self.fwd_n };
        let (m, n) = (self.params.m(), self.params.n());
        let scale = 1.0 / (n as f64).sqrt();
        // Transpose so each row becomes a contiguous run for the planner.
        let mut t = mat.transpose();
        fft.process(t.as_mut_slice());
        for l in 0..m {
            for k in 0..n {
                mat[(l, k)] = t[(k, l)] * scale;
            }
        }
    }

    /// `X_TF = F_M X_DD F_N^H`.
    pub fn isfft(&self, x_dd: &DdGrid) -> Result<TfGrid> {
        self.params.check_grid("isfft", &x_dd.0)?;
        let mut out = x_dd.0.clone();
        self.columns(&mut out, false);
        self.rows(&mut out, true);
        Ok(TfGrid(out))
    }

    /// `X_DD = F_M^H Y_TF F_N`, the inverse of [`OtfsModem::isfft`].
    pub fn sfft(&self, y_tf: &TfGrid) -> Result<DdGrid> {
        self.params.check_grid("sfft", &y_tf.0)?;
        let mut out = y_tf.0.clone();
        self.columns(&mut out, true);
        self.rows(&mut out, false);
        Ok(DdGrid(out))
    }

    /// `(I_N kron F_M^H) x_TF`: one inverse DFT per slot.
    pub fn heisenberg(&self, x_tf: &DVector<C64>) -> Result<DVector<C64>> {
        self.params.check_len("heisenberg", x_tf.len())?;
        let mut mat = unvec(x_tf, &self.params)?;
        self.columns(&mut mat, true);
        Ok(vec(&mat))
    }

    /// `(I_N kron F_M) y_TD`: one forward DFT per slot.
    pub fn wigner(&self, y_td: &DVector<C64>) -> Result<DVector<C64>> {
        self.params.check_len("wigner", y_td.len())?;
        let mut mat = unvec(y_td, &self.params)?;
        self.columns(&mut mat, false);
        Ok(vec(&mat))
    }

    /// Transmit samples `s = vec(G_tx X_TD)` with `x_TD = (F_N^H kron I_M) x_DD`.
    pub fn modulate(&self, x_dd: &DdGrid, pulse: &PulseShape) -> Result<DVector<C64>> {
        self.params.check_grid("otfs_modulate", &x_dd.0)?;
        pulse.check(&self.params)?;
        let mut td = x_dd.0.clone();
        self.rows(&mut td, true);
        scale_rows(&mut td, &pulse.g_tx);
        Ok(vec(&td))
    }

    /// `Y_DD` from received samples: receive pulse, Wigner transform and SFFT.
    pub fn demodulate(&self, r: &DVector<C64>, pulse: &PulseShape) -> Result<DdGrid> {
        self.params.check_len("otfs_demodulate", r.len())?;
        pulse.check(&self.params)?;
        let mut td = unvec(r, &self.params)?;
        scale_rows(&mut td, &pulse.g_rx);
        self.rows(&mut td, false);
        Ok(DdGrid(td))
    }

    /// `(F_N^H kron I_M) x` on a stacked vector, without pulse shaping.
    pub fn dd_to_td(&self, x_dd: &DVector<C64>) -> Result<DVector<C64>> {
        let mut mat = unvec(x_dd, &self.params)?;
        self.rows(&mut mat, true);
        Ok(vec(&mat))
    }

    /// `(F_N kron I_M) y` on a stacked vector, without pulse shaping.
    pub fn td_to_dd(&self, y_td: &DVector<C64>) -> Result<DVector<C64>> {
        let mut mat = unvec(y_td, &self.params)?;
        self.rows(&mut mat, false);
        Ok(vec(&mat))
    }
}

fn scale_rows(mat: &mut DMatrix<C64>, g: &[f64]) {
    if g.iter().all(|&v| v == 1.0) {
        return;
    }
    for mut col in mat.column_iter_mut() {
        for (v, &gl) in col.iter_mut().zip(g) {
            *v *= gl;
        }
    }
}

/// Explicit matrix forms of the transforms. Quadratic memory, cubic time;
/// meant for checking the FFT paths on small grids.
pub mod dense {
    use super::*;

    /// Unitary `n`-point DFT matrix.
    pub fn dft_matrix(n: usize) -> DMatrix<C64> {
        let scale = 1.0 / (n as f64).sqrt();
        DMatrix::from_fn(n, n, |a, b| {
            let phase = -2.0 * std::f64::consts::PI * ((a * b) % n) as f64 / n as f64;
            C64::from_polar(scale, phase)
        })
    }

    pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
        a.kronecker(b)
    }

    pub fn identity(n: usize) -> DMatrix<C64> {
        DMatrix::identity(n, n)
    }

    /// `F_N kron I_M`, the per-delay Doppler DFT on stacked vectors.
    pub fn doppler_dft(params: &FrameParams) -> DMatrix<C64> {
        kron(&dft_matrix(params.n()), &identity(params.m()))
    }

    /// `I_N kron F_M`, the per-slot subcarrier DFT on stacked vectors.
    pub fn slot_dft(params: &FrameParams) -> DMatrix<C64> {
        kron(&identity(params.n()), &dft_matrix(params.m()))
    }

    pub fn isfft(x_dd: &DMatrix<C64>) -> DMatrix<C64> {
        let fm = dft_matrix(x_dd.nrows());
        let fn_ = dft_matrix(x_dd.ncols());
        &fm * x_dd * fn_.adjoint()
    }

    pub fn sfft(y_tf: &DMatrix<C64>) -> DMatrix<C64> {
        let fm = dft_matrix(y_tf.nrows());
        let fn_ = dft_matrix(y_tf.ncols());
        fm.adjoint() * y_tf * fn_
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params(m: usize, n: usize) -> FrameParams {
        FrameParams::new(m, n, 15e3).unwrap()
    }

    fn sample(m: usize, n: usize, seed: u64) -> DMatrix<C64> {
        // Small deterministic LCG so the unit tests do not depend on rand.
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        DMatrix::from_fn(m, n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn frame_params_validation() {
        assert!(FrameParams::new(0, 4, 15e3).is_err());
        assert!(FrameParams::new(4, 0, 15e3).is_err());
        assert!(FrameParams::new(4, 4, -1.0).is_err());
        assert!(FrameParams::with_symbol_duration(4, 4, 15e3, 1.0 / 14e3).is_err());
        let p = params(64, 16);
        assert_relative_eq!(p.symbol_duration() * p.delta_f(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn vec_is_column_major() {
        let a = C64::new(1.0, 0.0);
        let b = C64::new(2.0, 0.0);
        let c = C64::new(3.0, 0.0);
        let d = C64::new(4.0, 0.0);
        let mat = DMatrix::from_row_slice(2, 2, &[a, c, b, d]);
        assert_eq!(vec(&mat).as_slice(), &[a, b, c, d]);
        let back = unvec(&vec(&mat), &params(2, 2)).unwrap();
        assert_eq!(back, mat);
    }

    #[test]
    fn vec_of_zero_grid_is_zero() {
        let v = vec(&DMatrix::zeros(3, 5));
        assert_eq!(v.len(), 15);
        assert!(v.iter().all(|z| *z == C64::new(0.0, 0.0)));
    }

    #[test]
    fn unvec_rejects_wrong_length() {
        let v = DVector::zeros(7);
        assert!(matches!(
            unvec(&v, &params(2, 4)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn single_bin_grid_is_identity() {
        let p = params(1, 1);
        let modem = OtfsModem::new(p);
        let x = DdGrid(DMatrix::from_element(1, 1, C64::new(0.3, -0.7)));
        assert_eq!(modem.isfft(&x).unwrap().0, x.0);
        let s = modem.modulate(&x, &PulseShape::rectangular(1)).unwrap();
        assert_eq!(s[0], x.0[(0, 0)]);
    }

    #[test]
    fn isfft_matches_dense_and_preserves_norm() {
        let p = params(4, 4);
        let modem = OtfsModem::new(p);
        let x = sample(4, 4, 3);
        let fast = modem.isfft(&DdGrid(x.clone())).unwrap().0;
        let slow = dense::isfft(&x);
        assert!((&fast - &slow).norm() < 1e-12);
        assert_relative_eq!(fast.norm(), x.norm(), epsilon = 1e-12);
    }

    #[test]
    fn sfft_of_single_tf_entry_matches_kronecker_product() {
        let p = params(2, 2);
        let modem = OtfsModem::new(p);
        let mut y = DMatrix::zeros(2, 2);
        y[(0, 0)] = C64::new(1.0, 0.0);
        let fast = modem.sfft(&TfGrid(y.clone())).unwrap().0;
        let op = dense::kron(&dense::dft_matrix(2), &dense::dft_matrix(2).adjoint());
        let slow = unvec(&(op * vec(&y)), &p).unwrap();
        assert!((fast - slow).norm() < 1e-14);
    }

    #[test]
    fn heisenberg_of_all_ones_slot() {
        // F_2^H [1, 1]^T = sqrt(2) [1, 0]^T
        let p = params(2, 1);
        let modem = OtfsModem::new(p);
        let ones = DVector::from_element(2, C64::new(1.0, 0.0));
        let td = modem.heisenberg(&ones).unwrap();
        assert_relative_eq!(td[0].re, 2f64.sqrt(), epsilon = 1e-14);
        assert!(td[1].norm() < 1e-14);
    }

    #[test]
    fn heisenberg_after_isfft_is_doppler_idft() {
        let p = params(4, 8);
        let modem = OtfsModem::new(p);
        let x = sample(4, 8, 11);
        let tf = modem.isfft(&DdGrid(x.clone())).unwrap();
        let td = modem.heisenberg(&tf.to_vec()).unwrap();
        let op = dense::kron(&dense::dft_matrix(8).adjoint(), &dense::identity(4));
        assert!((td - op * vec(&x)).norm() < 1e-12);
    }

    #[test]
    fn modulate_matches_dense_and_demodulate_inverts() {
        let p = params(8, 4);
        let modem = OtfsModem::new(p);
        let pulse = PulseShape::rectangular(8);
        let x = DdGrid(sample(8, 4, 5));
        let s = modem.modulate(&x, &pulse).unwrap();
        let op = dense::kron(&dense::dft_matrix(4).adjoint(), &dense::identity(8));
        assert!((&s - op * x.to_vec()).norm() < 1e-12);
        assert_relative_eq!(s.norm(), x.0.norm(), epsilon = 1e-12);
        let back = modem.demodulate(&s, &pulse).unwrap();
        assert!((back.0 - x.0).norm() < 1e-12);
    }

    #[test]
    fn zero_inputs_give_zero_outputs() {
        let p = params(4, 2);
        let modem = OtfsModem::new(p);
        let pulse = PulseShape::rectangular(4);
        assert_eq!(modem.isfft(&DdGrid::zeros(&p)).unwrap().0.norm(), 0.0);
        assert_eq!(modem.sfft(&TfGrid::zeros(&p)).unwrap().0.norm(), 0.0);
        assert_eq!(
            modem.modulate(&DdGrid::zeros(&p), &pulse).unwrap().norm(),
            0.0
        );
        assert_eq!(
            modem
                .demodulate(&DVector::zeros(8), &pulse)
                .unwrap()
                .0
                .norm(),
            0.0
        );
    }

    #[test]
    fn pulse_shaping_scales_delay_rows() {
        let p = params(2, 2);
        let modem = OtfsModem::new(p);
        let pulse = PulseShape {
            g_tx: vec![1.0, 0.5],
            g_rx: vec![1.0, 2.0],
        };
        let x = DdGrid(sample(2, 2, 8));
        let s = modem.modulate(&x, &pulse).unwrap();
        let back = modem.demodulate(&s, &pulse).unwrap();
        assert!((&back.0 - &x.0).norm() < 1e-12);
        assert!(modem.modulate(&x, &PulseShape::rectangular(3)).is_err());
    }
}
