//! Difference-of-concave split of the (pre-log free) sum rate.
//!
//! With `u = sum_{j,p} |h_p^i|^2 rho^{(j)}[src_p(l,k)] + N0` the total received
//! power of symbol `(l, k)` at user `i` and `d = u - |h_1^i|^2 rho^{(i)}[src_1]`
//! its interference-plus-noise power,
//!
//! ```text
//! sum log2(1 + Gamma) = sum log2(u) - sum log2(d) = Q - Z.
//! ```
//!
//! Both `Q` and `Z` are concave in the powers; the sum rate reported elsewhere
//! carries an extra factor 1/2.

use std::f64::consts::LN_2;

use nalgebra::DMatrix;

use crate::channel::UserChannel;
use crate::ddgrid::FrameParams;
use crate::error::{dim_mismatch, Result};
use crate::linkmodel::PowerGrid;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tap {
    weight: f64,
    dl: usize,
    dk: usize,
}

/// Channel power taps of every user with block-index arithmetic on the grid.
///
/// Power vectors are flat, indexed `e = b + MN i` with block `b = l + M k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateModel {
    m: usize,
    n: usize,
    k: usize,
    taps: Vec<Vec<Tap>>,
}

impl RateModel {
    pub fn new(channels: &[UserChannel], params: &FrameParams) -> Self {
        let taps = channels
            .iter()
            .map(|ch| {
                ch.paths()
                    .iter()
                    .map(|p| Tap {
                        weight: p.power(),
                        dl: p.delay_tap,
                        dk: p.doppler_bin(params.n()),
                    })
                    .collect()
            })
            .collect();
        Self {
            m: params.m(),
            n: params.n(),
            k: channels.len(),
            taps,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.k)
    }

    pub fn blocks(&self) -> usize {
        self.m * self.n
    }

    pub fn len(&self) -> usize {
        self.m * self.n * self.k
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Transmit block seen by receive block `b` through `tap`.
    #[inline]
    fn src(&self, tap: &Tap, b: usize) -> usize {
        let (l, k) = (b % self.m, b / self.m);
        (l + self.m - tap.dl) % self.m + self.m * ((k + self.n - tap.dk) % self.n)
    }

    /// Receive block reached from transmit block `b` through `tap`.
    #[inline]
    fn dst(&self, tap: &Tap, b: usize) -> usize {
        let (l, k) = (b % self.m, b / self.m);
        (l + tap.dl) % self.m + self.m * ((k + tap.dk) % self.n)
    }

    /// Per-block total power `T[b] = sum_i x[b + MN i]`.
    pub fn occupancy(&self, x: &[f64]) -> Vec<f64> {
        let mn = self.blocks();
        let mut t = vec![0.0; mn];
        for i in 0..self.k {
            for (tb, xe) in t.iter_mut().zip(&x[i * mn..(i + 1) * mn]) {
                *tb += xe;
            }
        }
        t
    }

    /// Received powers `u[e]` from the per-block totals.
    pub fn received(&self, t: &[f64], n0: f64) -> Vec<f64> {
        let mn = self.blocks();
        let mut u = vec![n0; self.len()];
        for (i, taps) in self.taps.iter().enumerate() {
            for b in 0..mn {
                u[b + mn * i] += taps
                    .iter()
                    .map(|tap| tap.weight * t[self.src(tap, b)])
                    .sum::<f64>();
            }
        }
        u
    }

    /// Interference-plus-noise powers `d[e]`.
    pub fn interference(&self, x: &[f64], n0: f64) -> Vec<f64> {
        let mn = self.blocks();
        let t = self.occupancy(x);
        let mut d = vec![n0; self.len()];
        for (i, taps) in self.taps.iter().enumerate() {
            for b in 0..mn {
                let mut acc = 0.0;
                for (p, tap) in taps.iter().enumerate() {
                    let src = self.src(tap, b);
                    let others = if p == 0 {
                        t[src] - x[src + mn * i]
                    } else {
                        t[src]
                    };
                    acc += tap.weight * others.max(0.0);
                }
                d[b + mn * i] += acc;
            }
        }
        d
    }

    pub fn q_bar(&self, x: &[f64], n0: f64) -> f64 {
        self.received(&self.occupancy(x), n0)
            .iter()
            .map(|u| u.log2())
            .sum()
    }

    pub fn z_bar(&self, x: &[f64], n0: f64) -> f64 {
        self.interference(x, n0).iter().map(|d| d.log2()).sum()
    }

    /// `sum log2(1 + Gamma)` computed as `Q - Z` term by term.
    pub fn rate(&self, x: &[f64], n0: f64) -> f64 {
        let u = self.received(&self.occupancy(x), n0);
        let d = self.interference(x, n0);
        u.iter().zip(&d).map(|(u, d)| (u / d).log2()).sum()
    }

    /// `dQ / dT[b] = (1/ln 2) sum_{i,p} w_p^i / u^i[b + shift_p^i]`.
    pub fn grad_q_occupancy(&self, u: &[f64]) -> Vec<f64> {
        let mn = self.blocks();
        let mut g = vec![0.0; mn];
        for (i, taps) in self.taps.iter().enumerate() {
            for (b, gb) in g.iter_mut().enumerate() {
                for tap in taps {
                    *gb += tap.weight / u[self.dst(tap, b) + mn * i];
                }
            }
        }
        g.iter_mut().for_each(|v| *v /= LN_2);
        g
    }

    /// Negated Hessian of `Q` with respect to the block totals `T`:
    /// `(1/ln 2) sum_e a_e a_e^T / u_e^2`, positive semidefinite.
    pub fn neg_hess_q_occupancy(&self, u: &[f64]) -> DMatrix<f64> {
        let mn = self.blocks();
        let mut h = DMatrix::zeros(mn, mn);
        for (i, taps) in self.taps.iter().enumerate() {
            for b in 0..mn {
                let c = 1.0 / (LN_2 * u[b + mn * i].powi(2));
                for tp in taps {
                    let sp = self.src(tp, b);
                    for tq in taps {
                        h[(sp, self.src(tq, b))] += c * tp.weight * tq.weight;
                    }
                }
            }
        }
        h
    }

    /// `dZ / dx[j, b] = (1/ln 2) sum_i sum_p [p > 1 or i != j] w_p^i / d^i[b + shift_p^i]`.
    pub fn grad_z(&self, x: &[f64], n0: f64) -> Vec<f64> {
        let mn = self.blocks();
        let d = self.interference(x, n0);
        // Gradient with respect to T (every path of every user), minus the
        // desired-path term that only user i's own power is exempt from.
        let mut through_t = vec![0.0; mn];
        for (i, taps) in self.taps.iter().enumerate() {
            for (b, acc) in through_t.iter_mut().enumerate() {
                for tap in taps {
                    *acc += tap.weight / d[self.dst(tap, b) + mn * i];
                }
            }
        }
        let mut g = vec![0.0; self.len()];
        for (i, taps) in self.taps.iter().enumerate() {
            let first = &taps[0];
            for b in 0..mn {
                let own = first.weight / d[self.dst(first, b) + mn * i];
                g[b + mn * i] = (through_t[b] - own) / LN_2;
            }
        }
        g
    }
}

/// Values of the two concave parts and the gradient of `Z` at a power grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DcTerms {
    pub q_bar: f64,
    pub z_bar: f64,
    pub grad_z: Tensor3<f64>,
}

impl DcTerms {
    /// `sum log2(1 + Gamma)` (no 1/2 factor).
    pub fn rate(&self) -> f64 {
        self.q_bar - self.z_bar
    }
}

fn check(rho: &PowerGrid, channels: &[UserChannel], params: &FrameParams) -> Result<()> {
    let expected = (params.m(), params.n(), channels.len());
    if rho.rho.dims() != expected {
        return Err(dim_mismatch(
            "power grid",
            format!("{expected:?}"),
            format!("{:?}", rho.rho.dims()),
        ));
    }
    Ok(())
}

pub fn dc_decompose(
    rho: &PowerGrid,
    channels: &[UserChannel],
    n0: f64,
    params: &FrameParams,
) -> Result<DcTerms> {
    check(rho, channels, params)?;
    let model = RateModel::new(channels, params);
    let x = rho.rho.as_slice();
    Ok(DcTerms {
        q_bar: model.q_bar(x, n0),
        z_bar: model.z_bar(x, n0),
        grad_z: grad_tensor(&model, model.grad_z(x, n0)),
    })
}

pub fn grad_zbar(
    rho: &PowerGrid,
    channels: &[UserChannel],
    n0: f64,
    params: &FrameParams,
) -> Result<Tensor3<f64>> {
    check(rho, channels, params)?;
    let model = RateModel::new(channels, params);
    Ok(grad_tensor(&model, model.grad_z(rho.rho.as_slice(), n0)))
}

fn grad_tensor(model: &RateModel, g: Vec<f64>) -> Tensor3<f64> {
    let (m, n, k) = model.dims();
    Tensor3::from_vec(m, n, k, g).expect("gradient length matches grid")
}

/// First-order expansion of `Z` about `rho_m`: an upper bound of `Z`
/// everywhere, tight at `rho_m`.
pub fn linearize_z(rho: &Tensor3<f64>, rho_m: &Tensor3<f64>, at_m: &DcTerms) -> f64 {
    at_m.z_bar
        + rho
            .iter()
            .zip(rho_m.iter())
            .zip(at_m.grad_z.iter())
            .map(|((r, rm), g)| g * (r - rm))
            .sum::<f64>()
}
