//! One collapse step written as a Gaussian superposition of unitaries:
//!
//! `exp(−Δt (w − 2λA)²/(4λ)) = π^{−1/2} ∫du e^{−u²} e^{iusw} e^{−i2λsuA}`
//! with `s = √(Δt/λ)`, evaluated by Gauss–Hermite quadrature.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{invalid, require_positive, Result};

pub const MIN_QUADRATURE_ORDER: usize = 8;
const MAX_DIM: usize = 4;

/// Nodes and weights for `∫ e^{−u²} f(u) du` (Golub–Welsch).
pub fn gauss_hermite(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if order == 0 {
        return Err(invalid("order", "must be >= 1"));
    }
    let jacobi = DMatrix::<f64>::from_fn(order, order, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..order)
        .map(|k| (eig.eigenvalues[k], std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Operator-norm distance between the quadrature superposition and the
/// direct Gaussian operator for Hermitian `operator` (row-major, dim ≤ 4).
pub fn unitary_representation_check(operator: &[Complex64], dim: usize, lambda: f64, dt: f64, w: f64, order: usize) -> Result<f64> {
    if order < MIN_QUADRATURE_ORDER {
        return Err(invalid("order", format!("quadrature order {order} is below {MIN_QUADRATURE_ORDER}")));
    }
    if dim == 0 || dim > MAX_DIM || operator.len() != dim * dim {
        return Err(invalid("operator", format!("need a square matrix with 1..={MAX_DIM} rows")));
    }
    require_positive("lambda", lambda)?;
    require_positive("dt", dt)?;
    if !w.is_finite() {
        return Err(invalid("w", "must be finite"));
    }
    let a = DMatrix::from_row_slice(dim, dim, operator);
    if (&a - a.adjoint()).norm() > 1e-12 * (1.0 + a.norm()) {
        return Err(invalid("operator", "not Hermitian"));
    }
    let eig = a.symmetric_eigen();
    let v = &eig.eigenvectors;
    let apply = |f: &dyn Fn(f64) -> Complex64| {
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| f(e)));
        v * d * v.adjoint()
    };

    let direct = apply(&|e| Complex64::new((-dt * (w - 2.0 * lambda * e).powi(2) / (4.0 * lambda)).exp(), 0.0));
    let (nodes, weights) = gauss_hermite(order)?;
    let s = (dt / lambda).sqrt();
    let norm = std::f64::consts::PI.sqrt();
    let superposed = apply(&|e| {
        nodes
            .iter()
            .zip(&weights)
            .map(|(u, wt)| Complex64::from_polar(wt / norm, u * s * (w - 2.0 * lambda * e)))
            .sum()
    });
    Ok((superposed - direct).singular_values().max())
}
