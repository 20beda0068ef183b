//! Dense complex linear algebra for the tiny systems of the soliton
//! reconstruction (n ≤ [`MAX_DIM`]) and 2×2 ground-state blocks.

use num_complex::Complex64 as C64;

pub const MAX_DIM: usize = 4;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major n×n complex matrix with n ≤ [`MAX_DIM`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallMatrix {
    pub n: usize,
    pub a: [C64; MAX_DIM * MAX_DIM],
}

impl SmallMatrix {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_DIM && n > 0);
        Self {
            n,
            a: [ZERO; MAX_DIM * MAX_DIM],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.a[i * MAX_DIM + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.a[i * MAX_DIM + j] = v;
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self.get(i, j).norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn lu(&self) -> Option<Lu> {
        Lu::factor(self)
    }
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone, Copy)]
pub struct Lu {
    lu: SmallMatrix,
    perm: [usize; MAX_DIM],
}

impl Lu {
    /// `None` when a pivot is exactly zero.
    pub fn factor(m: &SmallMatrix) -> Option<Self> {
        let n = m.n;
        let mut lu = *m;
        let mut perm = [0usize; MAX_DIM];
        for (i, p) in perm.iter_mut().enumerate().take(n) {
            *p = i;
        }
        for k in 0..n {
            let (p, best) = (k..n)
                .map(|i| (i, lu.get(i, k).norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu.get(k, j);
                    lu.set(k, j, lu.get(p, j));
                    lu.set(p, j, tmp);
                }
                perm.swap(k, p);
            }
            let pivot = lu.get(k, k);
            for i in k + 1..n {
                let f = lu.get(i, k) / pivot;
                lu.set(i, k, f);
                for j in k + 1..n {
                    let v = lu.get(i, j) - f * lu.get(k, j);
                    lu.set(i, j, v);
                }
            }
        }
        Some(Self { lu, perm })
    }

    pub fn solve(&self, b: &[C64]) -> [C64; MAX_DIM] {
        let n = self.lu.n;
        let mut x = [ZERO; MAX_DIM];
        for i in 0..n {
            let mut s = b[self.perm[i]];
            for (j, xj) in x.iter().enumerate().take(i) {
                s -= self.lu.get(i, j) * xj;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu.get(i, j) * x[j];
            }
            x[i] = s / self.lu.get(i, i);
        }
        x
    }

    pub fn inverse(&self) -> SmallMatrix {
        let n = self.lu.n;
        let mut inv = SmallMatrix::zeros(n);
        for j in 0..n {
            let mut e = [ZERO; MAX_DIM];
            e[j] = ONE;
            let col = self.solve(&e[..n]);
            for (i, v) in col.iter().enumerate().take(n) {
                inv.set(i, j, *v);
            }
        }
        inv
    }
}

/// 1-norm condition number, infinite for a singular matrix.
pub fn condition_number(m: &SmallMatrix) -> f64 {
    match m.lu() {
        Some(lu) => m.norm1() * lu.inverse().norm1(),
        None => f64::INFINITY,
    }
}

/// 2×2 complex matrix `[[a, b], [c, d]]`.
pub type Mat2 = [[C64; 2]; 2];

pub fn identity2() -> Mat2 {
    [[ONE, ZERO], [ZERO, ONE]]
}

pub fn mul2(x: &Mat2, y: &Mat2) -> Mat2 {
    let mut r = [[ZERO; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    r
}

pub fn adjoint2(x: &Mat2) -> Mat2 {
    [
        [x[0][0].conj(), x[1][0].conj()],
        [x[0][1].conj(), x[1][1].conj()],
    ]
}

pub fn apply2(x: &Mat2, v: &[C64; 2]) -> [C64; 2] {
    [
        x[0][0] * v[0] + x[0][1] * v[1],
        x[1][0] * v[0] + x[1][1] * v[1],
    ]
}

/// Solve `x · u = v` for `u` (Cramer's rule).
pub fn solve2(x: &Mat2, v: &[C64; 2]) -> [C64; 2] {
    let det = x[0][0] * x[1][1] - x[0][1] * x[1][0];
    [
        (x[1][1] * v[0] - x[0][1] * v[1]) / det,
        (x[0][0] * v[1] - x[1][0] * v[0]) / det,
    ]
}
