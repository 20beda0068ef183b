//! 3×3 density matrices of the Λ atom (levels |1⟩, |2⟩ ground, |3⟩ excited).

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Tolerances for closed-form (analytic) density matrices.
pub const ANALYTIC_TOL: f64 = 1e-12;
/// Tolerances for numerically integrated density matrices.
pub const NUMERIC_TOL: f64 = 1e-8;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const PSD_TOL: f64 = -1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DensityError {
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("trace is {0} instead of 1")]
    BadTrace(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositive(f64),
}

/// Row-major 3×3 complex matrix, indexed with zero-based `(row, col)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix3 {
    pub entries: [C64; 9],
}

impl Default for DensityMatrix3 {
    fn default() -> Self {
        Self::ground()
    }
}

impl Index<(usize, usize)> for DensityMatrix3 {
    type Output = C64;
    fn index(&self, (a, b): (usize, usize)) -> &C64 {
        &self.entries[3 * a + b]
    }
}

impl IndexMut<(usize, usize)> for DensityMatrix3 {
    fn index_mut(&mut self, (a, b): (usize, usize)) -> &mut C64 {
        &mut self.entries[3 * a + b]
    }
}

impl DensityMatrix3 {
    pub fn zeros() -> Self {
        Self {
            entries: [C64::new(0.0, 0.0); 9],
        }
    }

    pub fn diag(p1: f64, p2: f64, p3: f64) -> Self {
        let mut m = Self::zeros();
        m[(0, 0)] = p1.into();
        m[(1, 1)] = p2.into();
        m[(2, 2)] = p3.into();
        m
    }

    /// All population in |1⟩.
    pub fn ground() -> Self {
        Self::diag(1.0, 0.0, 0.0)
    }

    /// Build from the ground-state 2×2 block and the excited population.
    pub fn from_blocks(ground: [[C64; 2]; 2], rho33: f64) -> Self {
        let mut m = Self::zeros();
        for a in 0..2 {
            for b in 0..2 {
                m[(a, b)] = ground[a][b];
            }
        }
        m[(2, 2)] = rho33.into();
        m
    }

    pub fn trace(&self) -> f64 {
        (self[(0, 0)] + self[(1, 1)] + self[(2, 2)]).re
    }

    /// Largest |ρ_ab − ρ_ba*|, including imaginary parts on the diagonal.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        for a in 0..3 {
            for b in a..3 {
                err = err.max((self[(a, b)] - self[(b, a)].conj()).norm());
            }
        }
        err
    }

    /// True when both optical coherences vanish (to `tol`).
    pub fn is_block_diagonal(&self, tol: f64) -> bool {
        [(0, 2), (1, 2), (2, 0), (2, 1)]
            .iter()
            .all(|&idx| self[idx].norm() <= tol)
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    ///
    /// Cyclic Jacobi on the real 6×6 embedding [[A, −B], [B, A]] of
    /// H = A + iB, whose spectrum is that of H with every value doubled.
    /// Unlike the trigonometric closed form this stays accurate for
    /// (near-)degenerate spectra such as pure states.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let h = |a: usize, b: usize| 0.5 * (self[(a, b)] + self[(b, a)].conj());
        let mut m = [[0.0f64; 6]; 6];
        for a in 0..3 {
            for b in 0..3 {
                let v = h(a, b);
                m[a][b] = v.re;
                m[a + 3][b + 3] = v.re;
                m[a][b + 3] = -v.im;
                m[a + 3][b] = v.im;
            }
        }
        for _sweep in 0..50 {
            let off: f64 = (0..6)
                .flat_map(|i| (0..6).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| m[i][j] * m[i][j])
                .sum();
            if off < 1e-30 {
                break;
            }
            for p in 0..6 {
                for q in p + 1..6 {
                    if m[p][q] == 0.0 {
                        continue;
                    }
                    let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..6 {
                        let (mkp, mkq) = (m[k][p], m[k][q]);
                        m[k][p] = c * mkp - s * mkq;
                        m[k][q] = s * mkp + c * mkq;
                    }
                    for k in 0..6 {
                        let (mpk, mqk) = (m[p][k], m[q][k]);
                        m[p][k] = c * mpk - s * mqk;
                        m[q][k] = s * mpk + c * mqk;
                    }
                }
            }
        }
        let mut d: Vec<f64> = (0..6).map(|i| m[i][i]).collect();
        d.sort_by(|x, y| x.total_cmp(y));
        [0.5 * (d[0] + d[1]), 0.5 * (d[2] + d[3]), 0.5 * (d[4] + d[5])]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Check Hermiticity and unit trace to `tol`, and positivity to [`PSD_TOL`].
    pub fn validate(&self, tol: f64) -> Result<(), DensityError> {
        let herm = self.hermiticity_error();
        if herm > tol {
            return Err(DensityError::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(DensityError::BadTrace(tr));
        }
        let min = self.min_eigenvalue();
        if min < PSD_TOL {
            return Err(DensityError::NotPositive(min));
        }
        Ok(())
    }
}
