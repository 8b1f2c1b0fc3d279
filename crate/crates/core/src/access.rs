//! Orthogonal multiple-access resource masks on the `M x N` grid.
//!
//! User indices are 0-based throughout: user `u` of `K`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::ddgrid::FrameParams;
use crate::error::{Error, Result};
use crate::linkmodel::{GridDomain, PowerGrid};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessScheme {
    /// Contiguous delay rows per user.
    Ddma,
    /// Contiguous Doppler columns per user.
    Dodma,
    /// One `(M / sqrt K) x (N / sqrt K)` tile per user.
    Ddodma,
    /// Periodic interleaving with delay period `g1` and Doppler period `g2`.
    /// `None` means `g1 = g2 = sqrt K`.
    Ddoidma(Option<(usize, usize)>),
}

impl AccessScheme {
    pub const ALL: [AccessScheme; 4] = [
        AccessScheme::Ddma,
        AccessScheme::Dodma,
        AccessScheme::Ddodma,
        AccessScheme::Ddoidma(None),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AccessScheme::Ddma => "DDMA",
            AccessScheme::Dodma => "DoDMA",
            AccessScheme::Ddodma => "DDoDMA",
            AccessScheme::Ddoidma(_) => "DDoIDMA",
        }
    }

    pub fn mask(&self, params: &FrameParams, k: usize) -> Result<AccessMask> {
        match *self {
            AccessScheme::Ddma => ddma_mask(params, k),
            AccessScheme::Dodma => dodma_mask(params, k),
            AccessScheme::Ddodma => ddodma_mask(params, k),
            AccessScheme::Ddoidma(Some((g1, g2))) => ddoidma_mask(params, k, g1, g2),
            AccessScheme::Ddoidma(None) => {
                let g = exact_sqrt(k).ok_or_else(|| Error::Divisibility {
                    scheme: "DDoIDMA",
                    reason: format!("K={k} is not a perfect square; give g1 and g2 explicitly"),
                })?;
                ddoidma_mask(params, k, g, g)
            }
        }
    }
}

impl fmt::Display for AccessScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AccessScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ddma" => Ok(AccessScheme::Ddma),
            "dodma" => Ok(AccessScheme::Dodma),
            "ddodma" => Ok(AccessScheme::Ddodma),
            "ddoidma" => Ok(AccessScheme::Ddoidma(None)),
            _ => Err(Error::InvalidParameter(format!(
                "unknown access scheme '{s}'"
            ))),
        }
    }
}

/// Binary schedule `s[(l, k, u)]`; at most one user per block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessMask {
    s: Tensor3<bool>,
}

impl AccessMask {
    /// Wraps a raw schedule, rejecting any block shared by two users.
    pub fn new(s: Tensor3<bool>) -> Result<Self> {
        let (m, n, k) = s.dims();
        for kk in 0..n {
            for l in 0..m {
                if (0..k).filter(|&u| s[(l, kk, u)]).count() > 1 {
                    return Err(Error::InvalidParameter(format!(
                        "block ({l}, {kk}) is scheduled for more than one user"
                    )));
                }
            }
        }
        Ok(Self { s })
    }

    fn from_owner(params: &FrameParams, k: usize, owner: impl Fn(usize, usize) -> usize) -> Self {
        Self {
            s: Tensor3::from_fn(params.m(), params.n(), k, |l, kk, u| owner(l, kk) == u),
        }
    }

    pub fn tensor(&self) -> &Tensor3<bool> {
        &self.s
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.s.dims()
    }

    pub fn users(&self) -> usize {
        self.s.dims().2
    }

    pub fn get(&self, l: usize, k: usize, u: usize) -> bool {
        self.s[(l, k, u)]
    }

    /// The user scheduled on block `(l, k)`, if any.
    pub fn owner(&self, l: usize, k: usize) -> Option<usize> {
        (0..self.users()).find(|&u| self.s[(l, k, u)])
    }

    pub fn blocks_of(&self, u: usize) -> usize {
        let (m, n, _) = self.dims();
        (0..n)
            .flat_map(|k| (0..m).map(move |l| (l, k)))
            .filter(|&(l, k)| self.s[(l, k, u)])
            .count()
    }

    pub fn active_blocks(&self) -> usize {
        self.s.iter().filter(|v| **v).count()
    }

    pub fn to_f64(&self) -> Tensor3<f64> {
        self.s.map(|v| if *v { 1.0 } else { 0.0 })
    }

    /// Active `(l, k, user)` triples in storage order.
    pub fn triples(&self) -> Vec<(usize, usize, usize)> {
        let (m, n, k) = self.dims();
        let mut out = Vec::with_capacity(self.active_blocks());
        for u in 0..k {
            for kk in 0..n {
                for l in 0..m {
                    if self.s[(l, kk, u)] {
                        out.push((l, kk, u));
                    }
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "l,k,user")?;
        for (l, k, u) in self.triples() {
            writeln!(w, "{l},{k},{u}")?;
        }
        Ok(())
    }
}

fn exact_sqrt(k: usize) -> Option<usize> {
    let r = (k as f64).sqrt().round() as usize;
    (r * r == k).then_some(r)
}

fn check_users(k: usize, scheme: &'static str) -> Result<()> {
    if k == 0 {
        return Err(Error::Divisibility {
            scheme,
            reason: "K must be at least 1".into(),
        });
    }
    Ok(())
}

fn require_divides(d: usize, n: usize, scheme: &'static str, what: &str) -> Result<()> {
    if d == 0 || n % d != 0 {
        return Err(Error::Divisibility {
            scheme,
            reason: format!("{what}: {d} does not divide {n}"),
        });
    }
    Ok(())
}

/// User `u` owns delay rows `[u M/K, (u+1) M/K)`.
pub fn ddma_mask(params: &FrameParams, k: usize) -> Result<AccessMask> {
    check_users(k, "DDMA")?;
    require_divides(k, params.m(), "DDMA", "K must divide M")?;
    let rows = params.m() / k;
    Ok(AccessMask::from_owner(params, k, |l, _| l / rows))
}

/// User `u` owns Doppler columns `[u N/K, (u+1) N/K)`.
pub fn dodma_mask(params: &FrameParams, k: usize) -> Result<AccessMask> {
    check_users(k, "DoDMA")?;
    require_divides(k, params.n(), "DoDMA", "K must divide N")?;
    let cols = params.n() / k;
    Ok(AccessMask::from_owner(params, k, |_, kk| kk / cols))
}

/// User `u` owns tile `(u / sqrt K, u mod sqrt K)` of a `sqrt K x sqrt K` tiling.
pub fn ddodma_mask(params: &FrameParams, k: usize) -> Result<AccessMask> {
    check_users(k, "DDoDMA")?;
    let g = exact_sqrt(k).ok_or_else(|| Error::Divisibility {
        scheme: "DDoDMA",
        reason: format!("K={k} is not a perfect square"),
    })?;
    require_divides(g, params.m(), "DDoDMA", "sqrt K must divide M")?;
    require_divides(g, params.n(), "DDoDMA", "sqrt K must divide N")?;
    let (rows, cols) = (params.m() / g, params.n() / g);
    Ok(AccessMask::from_owner(params, k, |l, kk| {
        (l / rows) * g + kk / cols
    }))
}

/// User `u` owns `l = (u mod g1) + g1 v`, `k = floor(u / g1) + g2 v'`.
pub fn ddoidma_mask(params: &FrameParams, k: usize, g1: usize, g2: usize) -> Result<AccessMask> {
    check_users(k, "DDoIDMA")?;
    if g1 * g2 != k {
        return Err(Error::Divisibility {
            scheme: "DDoIDMA",
            reason: format!("g1 * g2 = {} differs from K = {k}", g1 * g2),
        });
    }
    require_divides(g1, params.m(), "DDoIDMA", "g1 must divide M")?;
    require_divides(g2, params.n(), "DDoIDMA", "g2 must divide N")?;
    Ok(AccessMask::from_owner(params, k, |l, kk| {
        (l % g1) + g1 * (kk % g2)
    }))
}

/// `P0 / |active blocks|` on every active block.
pub fn uniform_power(mask: &AccessMask, p0: f64) -> Result<PowerGrid> {
    let active = mask.active_blocks();
    if active == 0 {
        return Err(Error::InvalidParameter(
            "uniform power on an empty mask".into(),
        ));
    }
    let level = p0 / active as f64;
    PowerGrid::new(mask.s.map(|v| if *v { level } else { 0.0 }), GridDomain::Dd)
}
