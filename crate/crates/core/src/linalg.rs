//! Complex dense linear-algebra aliases and small helpers shared by the
//! solvers.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Phase of `z` with the convention that the angle of zero is zero.
pub fn phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        0.0
    } else {
        z.arg()
    }
}

/// `exp(j * phase)`, always of unit modulus.
pub fn unit_phasor(phase: f64) -> Complex64 {
    let (s, c) = phase.sin_cos();
    Complex64::new(c, s)
}

/// Squared Frobenius norm.
pub fn fro_sq(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Inner product `a^H b`.
pub fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// Stack `[top; bottom]` row-wise.
pub fn vstack(top: &CMatrix, bottom: &CMatrix) -> CMatrix {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let mut out = CMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
    out.rows_mut(0, top.nrows()).copy_from(top);
    out.rows_mut(top.nrows(), bottom.nrows()).copy_from(bottom);
    out
}

/// Stack `[left, right]` column-wise.
pub fn hstack(left: &CMatrix, right: &CMatrix) -> CMatrix {
    debug_assert_eq!(left.nrows(), right.nrows());
    let mut out = CMatrix::zeros(left.nrows(), left.ncols() + right.ncols());
    out.columns_mut(0, left.ncols()).copy_from(left);
    out.columns_mut(left.ncols(), right.ncols())
        .copy_from(right);
    out
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn hermitian_max_eigenvalue(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Maximum absolute deviation of `m m^H` from the identity.
pub fn row_orthonormality_error(m: &CMatrix) -> f64 {
    let gram = m * m.adjoint();
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
