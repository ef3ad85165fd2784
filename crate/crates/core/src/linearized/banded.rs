//! Banded LU factorisation with partial pivoting.
//!
//! Storage follows the LAPACK `gbtrf` layout: column `j` is a contiguous
//! slice of length `2·kl + ku + 1` and `A[i][j]` sits at row `kl + ku + i - j`.
//! The top `kl` rows absorb fill-in created by row interchanges.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ld,
            data: vec![0.0; ld * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.kl
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.ku
    }

    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i <= j + self.kl && j <= i + self.ku
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        j * self.ld + self.kl + self.ku + i - j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            0.0
        }
    }

    /// Adds `v` to entry `(i, j)`; panics if the entry lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band (kl = {}, ku = {})",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// Nonzero column range of row `i`.
    fn row_span(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_span(i)
            .map(move |j| (j, self.get(i, j)))
            .filter(|&(_, v)| v != 0.0)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| self.row_span(i).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// LU factorisation with partial pivoting. Pivots below
    /// `n·ε·max|A|` are reported as a singular system.
    pub fn factorize(&self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.kl;
        let kv = self.kl + self.ku;
        let ld = self.ld;
        let mut ab = self.data.clone();
        let mut pivots = vec![0usize; n];
        let tiny = n as f64 * f64::EPSILON * self.max_abs();
        let at = |i: usize, j: usize| j * ld + kv + i - j;

        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[at(j, j)].abs();
            for t in 1..=km {
                let v = ab[at(j + t, j)].abs();
                if v > best {
                    best = v;
                    jp = t;
                }
            }
            pivots[j] = j + jp;
            if !(best > tiny) {
                return Err(Error::SingularSystem {
                    column: j,
                    pivot: best,
                });
            }
            ju = ju.max((j + self.ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(at(j, c), at(j + jp, c));
                }
            }
            if km > 0 {
                let inv = 1.0 / ab[at(j, j)];
                for t in 1..=km {
                    ab[at(j + t, j)] *= inv;
                }
                for c in j + 1..=ju {
                    let u = ab[at(j, c)];
                    if u != 0.0 {
                        for t in 1..=km {
                            let l = ab[at(j + t, j)];
                            ab[at(j + t, c)] -= l * u;
                        }
                    }
                }
            }
        }
        Ok(BandLu {
            n,
            kl,
            kv,
            ld,
            ab,
            pivots,
        })
    }
}

/// Factors `P A = L U` of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    kl: usize,
    kv: usize,
    ld: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl, kv, ld) = (self.n, self.kl, self.kv, self.ld);
        let at = |i: usize, j: usize| j * ld + kv + i - j;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(p, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                for t in 1..=kl.min(n - 1 - j) {
                    b[j + t] -= self.ab[at(j + t, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[at(j, j)];
            let bj = b[j];
            if bj != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= self.ab[at(i, j)] * bj;
                }
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
