//! The single seedable random source used by every generator.
//!
//! `SeededRng` is ChaCha20 keyed by the 64-bit seed (via `seed_from_u64`).
//! Independent substreams are derived with [`SeededRng::split`], which keeps
//! the key and selects a ChaCha stream id, so adding draws to one consumer
//! never shifts the numbers another consumer sees.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::DenseMatrix;

#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha20Rng,
    seed: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha20Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh generator on stream `stream` of the same key.
    /// Draws a seed for an independent child generator.
    pub fn next_seed(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn split(&self, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(self.seed);
        inner.set_stream(stream);
        SeededRng { inner, seed: self.seed }
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| self.uniform(lo, hi))
    }

    /// Haar-distributed orthogonal `n x n` matrix (QR of a Gaussian matrix
    /// with the sign of `R`'s diagonal folded into `Q`).
    pub fn orthogonal(&mut self, n: usize) -> DenseMatrix {
        let g = self.normal_matrix(n, n);
        let (mut q, r) = crate::linalg::householder_qr(&g);
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.col_mut(j).iter_mut().for_each(|x| *x = -*x);
            }
        }
        q
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.below(i + 1);
            p.swap(i, j);
        }
        p
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_seeds_give_equal_streams() {
        let mut a = SeededRng::new(17);
        let mut b = SeededRng::new(17);
        for _ in 0..100 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
    }

    #[test]
    fn split_streams_are_independent_of_parent_use() {
        let mut parent = SeededRng::new(3);
        let before = parent.split(5).normal();
        parent.normal();
        assert_eq!(before.to_bits(), parent.split(5).normal().to_bits());
        assert_ne!(parent.split(5).normal().to_bits(), parent.split(6).normal().to_bits());
    }

    #[test]
    fn orthogonal_matrix_is_orthogonal() {
        let q = SeededRng::new(1).orthogonal(6);
        let e = q.t_matmul(&q).unwrap().sub(&DenseMatrix::identity(6)).unwrap().max_abs();
        assert!(e < 1e-12);
    }
}
