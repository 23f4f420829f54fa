//! Small dense symmetric matrices (2x2 and 3x3), the carriers of Hessians.
//!
//! Eigenvalues use the closed-form quadratic in dimension 2 and cyclic
//! Jacobi sweeps in dimension 3; closed-form 3x3 root formulas are fragile
//! near repeated eigenvalues.

use serde::{Deserialize, Serialize};

/// Convergence tolerance for the 3x3 Jacobi sweep, relative to the matrix scale.
const JACOBI_TOL: f64 = 1e-14;

/// Symmetric N x N matrix with N in {2, 3}. Only the upper triangle is stored,
/// so symmetry holds by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    /// Upper triangle in row order: [m11, m12, m13, m22, m23, m33].
    /// The last three slots are unused when `dim == 2`.
    e: [f64; 6],
}

impl SymMatrix {
    pub fn new2(m11: f64, m12: f64, m22: f64) -> Self {
        Self { dim: 2, e: [m11, m12, 0.0, m22, 0.0, 0.0] }
    }

    pub fn new3(m11: f64, m12: f64, m13: f64, m22: f64, m23: f64, m33: f64) -> Self {
        Self { dim: 3, e: [m11, m12, m13, m22, m23, m33] }
    }

    pub fn zero(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "SymMatrix dimension must be 2 or 3");
        Self { dim, e: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zero(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zero(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Rank-one matrix v ⊗ v.
    pub fn outer(v: &[f64]) -> Self {
        let mut m = Self::zero(v.len());
        for i in 0..v.len() {
            for j in i..v.len() {
                m.set(i, j, v[i] * v[j]);
            }
        }
        m
    }

    /// Symmetrized product u ⊗ v + v ⊗ u.
    pub fn sym_outer(u: &[f64], v: &[f64]) -> Self {
        let mut m = Self::zero(u.len());
        for i in 0..u.len() {
            for j in i..u.len() {
                m.set(i, j, u[i] * v[j] + v[i] * u[j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        match (r, c) {
            (0, 0) => 0,
            (0, 1) => 1,
            (0, 2) => 2,
            (1, 1) => 3,
            (1, 2) => 4,
            (2, 2) => 5,
            _ => panic!("index ({i},{j}) out of range"),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.dim && j < self.dim);
        self.e[self.slot(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.dim && j < self.dim);
        let s = self.slot(i, j);
        self.e[s] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut m = *self;
        for v in m.e.iter_mut() {
            *v *= t;
        }
        m
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut m = *self;
        for (v, w) in m.e.iter_mut().zip(other.e.iter()) {
            *v += w;
        }
        m
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }

    /// Quadratic form vᵀ M v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += v[i] * self.get(i, j) * v[j];
            }
        }
        s
    }

    /// Congruence Qᵀ M Q for a dense square matrix Q given in row-major rows.
    pub fn congruence(&self, q: &[[f64; 3]]) -> Self {
        let n = self.dim;
        let mut m = Self::zero(n);
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for k in 0..n {
                    for l in 0..n {
                        s += q[k][i] * self.get(k, l) * q[l][j];
                    }
                }
                m.set(i, j, s);
            }
        }
        m
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        match self.dim {
            2 => {
                let (a, b, c) = (self.get(0, 0), self.get(0, 1), self.get(1, 1));
                let mean = 0.5 * (a + c);
                let rad = f64::hypot(0.5 * (a - c), b);
                vec![mean - rad, mean + rad]
            }
            3 => {
                let mut lam = jacobi3(self);
                lam.sort_by(|x, y| x.partial_cmp(y).unwrap());
                lam.to_vec()
            }
            _ => unreachable!(),
        }
    }

    /// Spectral radius max |λ_i|, the matrix norm used by the x-Hölder modulus check.
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0, |m, &l| m.max(l.abs()))
    }
}

/// Cyclic Jacobi eigenvalue iteration for a symmetric 3x3 matrix.
fn jacobi3(m: &SymMatrix) -> [f64; 3] {
    let mut a = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            a[i][j] = m.get(i, j);
        }
    }
    let scale = a
        .iter()
        .flatten()
        .fold(0.0f64, |s, &v| s.max(v.abs()))
        .max(1e-300);
    for _sweep in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq.abs() <= f64::MIN_POSITIVE {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut b = a;
            for k in 0..3 {
                b[p][k] = c * a[p][k] - s * a[q][k];
                b[q][k] = s * a[p][k] + c * a[q][k];
            }
            let mut a2 = b;
            for k in 0..3 {
                a2[k][p] = c * b[k][p] - s * b[k][q];
                a2[k][q] = s * b[k][p] + c * b[k][q];
            }
            a = a2;
            a[p][q] = 0.0;
            a[q][p] = 0.0;
        }
    }
    [a[0][0], a[1][1], a[2][2]]
}
