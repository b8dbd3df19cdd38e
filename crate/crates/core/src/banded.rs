//! Symmetric positive-definite band matrices and their Cholesky factors.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix: entries `(i, j)` with `i − bw ≤ j ≤ i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Symmetric read; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, x: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(
            i - j <= self.bw,
            "entry ({i}, {j}) outside bandwidth {}",
            self.bw
        );
        let k = self.idx(i, j);
        self.data[k] += x;
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let mut l = BandMatrix::zeros(n, bw);
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let lo = i.saturating_sub(bw).max(j.saturating_sub(bw));
                let mut s = self.data[self.idx(i, j)];
                for k in lo..j {
                    s -= l.data[l.idx(i, k)] * l.data[l.idx(j, k)];
                }
                let v = if i == j {
                    if !(s > 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "matrix is not positive definite (pivot {i} = {s})"
                        )));
                    }
                    s.sqrt()
                } else {
                    s / l.data[l.idx(j, j)]
                };
                let k = l.idx(i, j);
                l.data[k] = v;
            }
        }
        Ok(BandCholesky { l })
    }
}

/// `A = L Lᵀ` with `L` lower-banded.
#[derive(Debug, Clone, PartialEq)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn dim(&self) -> usize {
        self.l.n
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.l.data[self.l.idx(i, j)]
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.l.n).map(|i| self.at(i, i).ln()).sum::<f64>()
    }

    /// Solve `L y = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let bw = self.l.bw;
        for i in 0..self.l.n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
    }

    /// Solve `Lᵀ x = y` in place.
    pub fn backward(&self, y: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n.min(i + bw + 1) {
                s -= self.at(k, i) * y[k];
            }
            y[i] = s / self.at(i, i);
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.forward(&mut x);
        self.backward(&mut x);
        x
    }

    /// Diagonal of `A⁻¹`.
    pub fn inverse_diagonal(&self) -> Vec<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        let mut u = vec![0.0; n];
        (0..n)
            .map(|i| {
                // L u = e_i; u vanishes above i
                u.iter_mut().for_each(|x| *x = 0.0);
                let mut acc = 0.0;
                for r in i..n {
                    let mut s = if r == i { 1.0 } else { 0.0 };
                    for k in r.saturating_sub(bw).max(i)..r {
                        s -= self.at(r, k) * u[k];
                    }
                    u[r] = s / self.at(r, r);
                    acc += u[r] * u[r];
                }
                acc
            })
            .collect()
    }
}
