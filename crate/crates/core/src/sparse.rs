//! Compressed-row sparse matrix for the reservoir adjacency, and the
//! power-iteration spectral radius estimate used to scale it.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Maximum power iterations before giving up.
pub const MAX_POWER_ITERATIONS: usize = 10_000;
/// Convergence threshold on successive eigenvalue-magnitude estimates.
pub const POWER_TOLERANCE: f64 = 1e-10;

/// Row-major CSR matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets. Triplets must be sorted in
    /// row-major order without duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut prev: Option<(usize, usize)> = None;
        for &(r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            if prev.is_some_and(|p| p >= (r, c)) {
                return Err(Error::InvalidArgument(format!(
                    "triplet ({r}, {c}) is out of row-major order or duplicated"
                )));
            }
            prev = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    /// `out += self * x`.
    pub fn mul_add_to(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *o += acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        self.mul_add_to(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Spectral radius of a square sparse matrix by power iteration.
///
/// Each iteration forms `v1 = A v0`, `v2 = A v1` from a unit vector `v0`. If
/// `v1` is (numerically) parallel to `v0` the dominant eigenvalue is real and
/// the Rayleigh quotient is used. Otherwise the iterates rotate, and the
/// dominant pair is recovered from the least-squares fit
/// `v2 ≈ a v1 + b v0`, whose characteristic polynomial `λ² − aλ − b` has the
/// dominant eigenvalues as roots. Returns `Ok(0.0)` for a nilpotent matrix.
pub fn spectral_radius(a: &CsrMatrix) -> Result<f64> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimensionMismatch {
            what: "spectral radius of non-square matrix",
            expected: a.n_rows,
            got: a.n_cols,
        });
    }
    let n = a.n_rows;
    if n == 0 || a.nnz() == 0 {
        return Ok(0.0);
    }
    // deterministic start with no special alignment to coordinate axes
    let mut v0: Vec<f64> = (0..n).map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract()).collect();
    let n0 = norm(&v0);
    v0.iter_mut().for_each(|v| *v /= n0);

    let mut previous = f64::NAN;
    let mut agreed = 0;
    for _ in 0..MAX_POWER_ITERATIONS {
        let v1 = a.mul_vec(&v0);
        let n1 = norm(&v1);
        if n1 == 0.0 {
            return Ok(0.0);
        }
        let v2 = a.mul_vec(&v1);

        let rayleigh = dot(&v0, &v1);
        let off_axis = v1.iter().zip(&v0).map(|(p, q)| (p - rayleigh * q).powi(2)).sum::<f64>().sqrt();
        let estimate = if off_axis <= 1e-9 * n1 {
            rayleigh.abs()
        } else {
            two_step_estimate(&v0, &v1, &v2).unwrap_or(n1)
        };

        if (estimate - previous).abs() <= POWER_TOLERANCE * estimate.max(f64::MIN_POSITIVE) {
            agreed += 1;
            // two consecutive agreements guard against a lucky crossing
            if agreed >= 2 {
                return Ok(estimate);
            }
        } else {
            agreed = 0;
        }
        previous = estimate;
        v0 = v1.iter().map(|v| v / n1).collect();
    }
    Err(Error::SpectralRadiusEstimation {
        iterations: MAX_POWER_ITERATIONS,
    })
}

/// Dominant eigenvalue magnitude from the two-term recurrence fit.
fn two_step_estimate(v0: &[f64], v1: &[f64], v2: &[f64]) -> Option<f64> {
    // normal equations for min |v2 - a v1 - b v0|
    let g11 = dot(v1, v1);
    let g10 = dot(v1, v0);
    let g00 = dot(v0, v0);
    let r1 = dot(v1, v2);
    let r0 = dot(v0, v2);
    let det = g11 * g00 - g10 * g10;
    if det.abs() <= 1e-14 * g11 * g00 {
        return None;
    }
    let a = (r1 * g00 - r0 * g10) / det;
    let b = (g11 * r0 - g10 * r1) / det;
    let disc = a * a + 4.0 * b;
    Some(if disc >= 0.0 {
        let s = disc.sqrt();
        ((a + s) / 2.0).abs().max(((a - s) / 2.0).abs())
    } else {
        (-b).sqrt()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dense_radius(m: &CsrMatrix) -> f64 {
        m.to_dense()
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn triplet_ordering_is_enforced() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 1.0)]).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 1.0)]).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
        let m = CsrMatrix::from_triplets(2, 3, &[(0, 2, 1.5), (1, 0, -2.0)]).unwrap();
        assert_eq!(m.mul_vec(&[1.0, 1.0, 2.0]), vec![3.0, -2.0]);
        assert_eq!(m.triplets().collect::<Vec<_>>(), vec![(0, 2, 1.5), (1, 0, -2.0)]);
    }

    #[test]
    fn real_dominant_eigenvalue() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (0, 1, 1.0), (1, 1, -0.5)]).unwrap();
        assert_relative_eq!(spectral_radius(&m).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn rotation_has_complex_pair() {
        // 0.7 * rotation by 1 rad, plus a smaller real mode
        let (c, s) = (1.0f64.cos() * 0.7, 1.0f64.sin() * 0.7);
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 0, c), (0, 1, -s), (1, 0, s), (1, 1, c), (2, 2, 0.3)])
            .unwrap();
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.7, epsilon = 1e-9);
    }

    #[test]
    fn plus_minus_pair() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 4.0)]).unwrap();
        assert_relative_eq!(spectral_radius(&m).unwrap(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn nilpotent_is_zero() {
        let m = CsrMatrix::from_triplets(3, 3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        assert_eq!(spectral_radius(&m).unwrap(), 0.0);
        assert_eq!(spectral_radius(&CsrMatrix::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn agrees_with_dense_eigenvalues() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let mut t = Vec::new();
            for r in 0..40 {
                for c in 0..40 {
                    if rng.random::<f64>() < 0.1 {
                        t.push((r, c, rng.random_range(-1.0..1.0)));
                    }
                }
            }
            let m = CsrMatrix::from_triplets(40, 40, &t).unwrap();
            let expected = dense_radius(&m);
            assert_relative_eq!(spectral_radius(&m).unwrap(), expected, max_relative = 1e-6);
        }
    }
}
