#![allow(dead_code)]

use dpto::{DirectedTopology, Matrix};

pub fn digraph1() -> DirectedTopology {
    DirectedTopology::from_rows(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[1.0, 0.0, 0.0]).unwrap()
}

pub fn digraph2() -> DirectedTopology {
    DirectedTopology::from_rows(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], &[1.0, 0.0, 0.0]).unwrap()
}

pub fn example_estimates() -> Matrix {
    Matrix::from_rows(&[[0.4, 0.6, 0.3], [0.8, 0.5, 0.7], [0.6, 0.4, 0.5]]).unwrap()
}

pub fn det(m: &Matrix) -> f64 {
    match m.rows() {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        n => panic!("det oracle supports N <= 3, got {n}"),
    }
}

fn minor(m: &Matrix, skip_r: usize, skip_c: usize) -> Matrix {
    let n = m.rows();
    let data: Vec<f64> = (0..n)
        .filter(|&r| r != skip_r)
        .flat_map(|r| (0..n).filter(move |&c| c != skip_c).map(move |c| (r, c)))
        .map(|(r, c)| m[(r, c)])
        .collect();
    Matrix::from_row_major(n - 1, n - 1, data).unwrap()
}

/// Inverse by the adjugate formula.
pub fn cofactor_inverse(m: &Matrix) -> Matrix {
    let n = m.rows();
    let d = det(m);
    if n == 1 {
        return Matrix::from_rows(&[[1.0 / d]]).unwrap();
    }
    let mut inv = Matrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            inv.as_mut_slice()[c * n + r] = sign * det(&minor(m, r, c)) / d;
        }
    }
    inv
}

/// `ρ = (L0ᵀ)⁻¹·1` via the cofactor inverse.
pub fn rho_oracle(l0: &Matrix) -> Vec<f64> {
    cofactor_inverse(&l0.transpose()).mul_vec(&vec![1.0; l0.rows()]).unwrap()
}

/// Smallest eigenvalue of a symmetric matrix of size <= 3 from the roots of
/// its characteristic polynomial.
pub fn min_eig_oracle(m: &Matrix) -> f64 {
    match m.rows() {
        1 => m[(0, 0)],
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let mean = 0.5 * (a + d);
            mean - (0.25 * (a - d) * (a - d) + b * b).sqrt()
        }
        3 => {
            // Trigonometric solution of the depressed cubic.
            let q = (m[(0, 0)] + m[(1, 1)] + m[(2, 2)]) / 3.0;
            let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
            let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
            let p = (p2 / 6.0).sqrt();
            if p == 0.0 {
                return q;
            }
            let mut b = m.clone();
            for i in 0..3 {
                b.as_mut_slice()[i * 3 + i] -= q;
            }
            let b = Matrix::from_row_major(3, 3, b.as_slice().iter().map(|v| v / p).collect()).unwrap();
            let r = (det(&b) / 2.0).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
        }
        n => panic!("eigen oracle supports N <= 3, got {n}"),
    }
}

/// `½(diag(w)·L0 + L0ᵀ·diag(w))` built entrywise.
pub fn mirror_oracle(l0: &Matrix, w: &[f64]) -> Matrix {
    let n = l0.rows();
    let data = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            0.5 * (w[i] * l0[(i, j)] + w[j] * l0[(j, i)])
        })
        .collect();
    Matrix::from_row_major(n, n, data).unwrap()
}
