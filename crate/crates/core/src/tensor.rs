//! Dense `M x N x K` tensors indexed by (delay bin, Doppler bin, user).

use std::ops::{Index, IndexMut};

/// A dense three-way tensor with layout `l + M * (k + N * i)`.
///
/// The first two axes follow the delay/Doppler (or subcarrier/slot) grid and
/// the third axis enumerates users.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor3<T> {
    m: usize,
    n: usize,
    k: usize,
    data: Vec<T>,
}

impl<T: Clone> Tensor3<T> {
    pub fn filled(m: usize, n: usize, k: usize, value: T) -> Self {
        Self {
            m,
            n,
            k,
            data: vec![value; m * n * k],
        }
    }
}

impl<T> Tensor3<T> {
    pub fn from_vec(m: usize, n: usize, k: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == m * n * k).then_some(Self { m, n, k, data })
    }

    pub fn from_fn(
        m: usize,
        n: usize,
        k: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Self {
        let mut data = Vec::with_capacity(m * n * k);
        for i in 0..k {
            for kk in 0..n {
                for l in 0..m {
                    data.push(f(l, kk, i));
                }
            }
        }
        Self { m, n, k, data }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m, self.n, self.k)
    }

    #[inline]
    pub fn offset(&self, l: usize, k: usize, i: usize) -> usize {
        debug_assert!(l < self.m && k < self.n && i < self.k);
        l + self.m * (k + self.n * i)
    }

    /// Inverse of [`Tensor3::offset`].
    #[inline]
    pub fn coords(&self, offset: usize) -> (usize, usize, usize) {
        let l = offset % self.m;
        let rest = offset / self.m;
        (l, rest % self.n, rest / self.n)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor3<U> {
        Tensor3 {
            m: self.m,
            n: self.n,
            k: self.k,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Tensor3<U>) -> bool {
        self.dims() == other.dims()
    }
}

impl Tensor3<f64> {
    pub fn zeros(m: usize, n: usize, k: usize) -> Self {
        Self::filled(m, n, k, 0.0)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

impl<T> Index<(usize, usize, usize)> for Tensor3<T> {
    type Output = T;

    #[inline]
    fn index(&self, (l, k, i): (usize, usize, usize)) -> &T {
        &self.data[self.offset(l, k, i)]
    }
}

impl<T> IndexMut<(usize, usize, usize)> for Tensor3<T> {
    #[inline]
    fn index_mut(&mut self, (l, k, i): (usize, usize, usize)) -> &mut T {
        let o = self.offset(l, k, i);
        &mut self.data[o]
    }
}

/// Euclidean modulo for grid indices.
#[inline]
pub fn wrap(x: i64, modulus: usize) -> usize {
    x.rem_euclid(modulus as i64) as usize
}
