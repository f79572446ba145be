//! Banded direct solvers.
//!
//! The implicit operators of the marching scheme are symmetric M-matrices
//! once weighted by the quadrature weights. Cholesky factors of such a
//! matrix keep nonpositive off-diagonals, so forward and backward
//! substitution on a nonnegative right-hand side only ever add nonnegative
//! terms: the solution is nonnegative bit-for-bit and exponentially small
//! entries keep their relative accuracy.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is singular (zero pivot at column {0})")]
    Singular(usize),
}

/// Symmetric banded matrix stored by lower rows: entry `(i, j)` with
/// `i - bw <= j <= i` lives at `data[i * (bw + 1) + (i - j)]`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (i - j)
    }

    /// Adds `v` to `(i, j)` (and implicitly to `(j, i)`).
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let k = self.idx(r, c);
        self.data[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for j in lo..i {
                let a = row[i - j];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
        }
    }

    /// In-place `L Lᵀ` factorization.
    pub fn cholesky(mut self) -> Result<BandedCholesky, LinalgError> {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let klo = lo.max(j.saturating_sub(bw));
                let mut s = self.data[i * stride + (i - j)];
                for k in klo..j {
                    s -= self.data[i * stride + (i - k)] * self.data[j * stride + (j - k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { row: i, pivot: s });
                    }
                    self.data[i * stride] = s.sqrt();
                } else {
                    self.data[i * stride + (i - j)] = s / self.data[j * stride];
                }
            }
        }
        Ok(BandedCholesky { n, bw, data: self.data })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let stride = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let row = &self.data[i * stride..(i + 1) * stride];
            let mut s = b[i];
            for k in lo..i {
                s -= row[i - k] * b[k];
            }
            b[i] = s / row[0];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = b[i];
            for k in (i + 1)..=hi {
                s -= self.data[k * stride + (k - i)] * b[k];
            }
            b[i] = s / self.data[i * stride];
        }
    }
}

/// General banded matrix with `kl` sub- and `ku` super-diagonals, stored
/// with `kl` extra super-diagonals of room for partial-pivoting fill.
#[derive(Debug, Clone)]
pub struct Banded {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl Banded {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "entry ({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// LU factorization with partial pivoting.
    pub fn lu(mut self) -> Result<BandedLu, LinalgError> {
        let n = self.n;
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + self.kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for r in (k + 1)..=last_row {
                let v = self.data[self.idx(r, k)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            piv[k] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(LinalgError::Singular(k));
            }
            let last_col = (k + self.kl + self.ku).min(n - 1);
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for r in (k + 1)..=last_row {
                let rk = self.idx(r, k);
                let l = self.data[rk] / pivot;
                self.data[rk] = l;
                if l == 0.0 {
                    continue;
                }
                for j in (k + 1)..=last_col {
                    let kj = self.data[self.idx(k, j)];
                    let rj = self.idx(r, j);
                    self.data[rj] -= l * kj;
                }
            }
        }
        Ok(BandedLu { m: self, piv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    m: Banded,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.m;
        let n = m.n;
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let last_row = (k + m.kl).min(n - 1);
            for r in (k + 1)..=last_row {
                b[r] -= m.data[m.idx(r, k)] * b[k];
            }
        }
        for i in (0..n).rev() {
            let last_col = (i + m.kl + m.ku).min(n - 1);
            let mut s = b[i];
            for j in (i + 1)..=last_col {
                s -= m.data[m.idx(i, j)] * b[j];
            }
            b[i] = s / m.data[m.idx(i, i)];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting on a dense copy.
        let n = b.len();
        let mut m: Vec<Vec<f64>> = a.to_vec();
        let mut x = b.to_vec();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs())).unwrap();
            m.swap(k, p);
            x.swap(k, p);
            for r in (k + 1)..n {
                let l = m[r][k] / m[k][k];
                for c in k..n {
                    m[r][c] -= l * m[k][c];
                }
                x[r] -= l * x[k];
            }
        }
        for i in (0..n).rev() {
            let s: f64 = ((i + 1)..n).map(|j| m[i][j] * x[j]).sum();
            x[i] = (x[i] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn cholesky_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, bw) = (23, 4);
        let mut a = SymBanded::zeros(n, bw);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(bw)..i {
                let v = -rng.gen_range(0.0..1.0);
                a.add(i, j, v);
                dense[i][j] += v;
                dense[j][i] += v;
            }
        }
        for i in 0..n {
            let off: f64 = dense[i].iter().map(|v| v.abs()).sum();
            let d = off + rng.gen_range(0.1..1.0);
            a.add(i, i, d);
            dense[i][i] += d;
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let want = dense_solve(&dense, &b);
        let mut x = b.clone();
        a.clone().cholesky().unwrap().solve_in_place(&mut x);
        for (p, q) in x.iter().zip(&want) {
            assert!((p - q).abs() < 1e-12, "{p} vs {q}");
        }
        assert!(x.iter().all(|&v| v >= 0.0));
        let mut y = vec![0.0; n];
        a.matvec(&x, &mut y);
        for (p, q) in y.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymBanded::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.cholesky(), Err(LinalgError::NotPositiveDefinite { row: 1, .. })));
    }

    #[test]
    fn lu_matches_dense_with_pivoting() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (n, kl, ku) = (31, 3, 2);
        let mut a = Banded::zeros(n, kl, ku);
        let mut dense = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // small diagonal forces row exchanges
                let v = if i == j { rng.gen_range(-0.01..0.01) } else { rng.gen_range(-1.0..1.0) };
                a.add(i, j, v);
                dense[i][j] = v;
            }
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let want = dense_solve(&dense, &b);
        let mut x = b.clone();
        a.lu().unwrap().solve_in_place(&mut x);
        for (p, q) in x.iter().zip(&want) {
            assert!((p - q).abs() < 1e-8 * (1.0 + q.abs()), "{p} vs {q}");
        }
    }

    #[test]
    fn lu_detects_singular() {
        let mut a = Banded::zeros(3, 1, 1);
        a.add(0, 0, 1.0);
        a.add(1, 1, 0.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.lu(), Err(LinalgError::Singular(1))));
    }
}
