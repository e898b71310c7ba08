//! Banded matrices and unpivoted LU, for the diagonally dominant systems
//! that arise on the inventory grid.

use crate::error::{Error, Result};

/// Square matrix with `lower` sub-diagonals and `upper` super-diagonals,
/// stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        BandedMatrix {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let off = j as isize - i as isize;
        if off < -(self.lower as isize) || off > self.upper as isize || i >= self.n || j >= self.n {
            return None;
        }
        Some(i * (self.lower + self.upper + 1) + (off + self.lower as isize) as usize)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` at `(i, j)`. Panics outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) is outside the band"));
        self.data[s] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// LU factorization without pivoting; fill-in stays inside the band.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        for k in 0..n {
            let pivot = self.get(k, k);
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularPivot(k));
            }
            let rows = (k + self.lower).min(n - 1);
            let cols = (k + self.upper).min(n - 1);
            for i in k + 1..=rows {
                let s = self.slot(i, k).unwrap();
                let l = self.data[s] / pivot;
                self.data[s] = l;
                if l == 0.0 {
                    continue;
                }
                for j in k + 1..=cols {
                    let a = self.get(k, j);
                    let t = self.slot(i, j).unwrap();
                    self.data[t] -= l * a;
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.lu;
        let n = m.n;
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(m.lower);
            let s: f64 = (lo..i).map(|j| m.get(i, j) * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = (i + m.upper).min(n - 1);
            let s: f64 = (i + 1..=hi).map(|j| m.get(i, j) * x[j]).sum();
            x[i] = (x[i] - s) / m.get(i, i);
        }
        x
    }
}
