//! Dense symmetric-matrix helpers backing the Fisher-information algebra.
//!
//! Matrices here are small (a handful of parameters per anchor), so
//! everything is direct: Cholesky where the block is positive definite,
//! a symmetric eigendecomposition as the pivoted fallback. The
//! singularity threshold is `eps * dim * max|diag|`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::RealScalar;

/// Behaviour when the nuisance block of a Schur reduction is singular.
///
/// The pseudo-inverse route is opt-in and never silent: callers that
/// enable it are expected to report the degeneracy to the user.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SingularPolicy {
    /// Reject singular nuisance blocks with [`Error::SingularNuisance`].
    #[default]
    Reject,
    /// Invert on the non-null eigenspace only.
    PseudoInverse,
}

/// `eps * dim * max|diag|`, the working rank cutoff for symmetric blocks.
pub(crate) fn singularity_threshold<S: RealScalar>(m: &DMatrix<S>) -> S {
    let mut max_diag = S::zero();
    for i in 0..m.nrows() {
        let d = m[(i, i)].abs();
        if d > max_diag {
            max_diag = d;
        }
    }
    // Fully zero matrices still need a positive cutoff.
    if max_diag == S::zero() {
        max_diag = S::one();
    }
    S::default_epsilon() * S::from_usize(m.nrows()).unwrap() * max_diag
}

/// Force exact symmetry; the assembly routines accumulate tiny asymmetries.
pub(crate) fn symmetrize<S: RealScalar>(m: &mut DMatrix<S>) {
    let half = S::of(0.5);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solve `M X = B` for symmetric `M`.
///
/// Cholesky first; on failure (or on a pivot below the threshold) fall back
/// to a symmetric eigendecomposition, honouring `policy` for the null space.
pub(crate) fn sym_solve<S: RealScalar>(
    m: &DMatrix<S>,
    rhs: &DMatrix<S>,
    policy: SingularPolicy,
) -> Result<DMatrix<S>> {
    let thr = singularity_threshold(m);
    if let Some(chol) = Cholesky::new(m.clone()) {
        let l = chol.l_dirty();
        let mut min_pivot = S::max_value().unwrap();
        for i in 0..m.nrows() {
            if l[(i, i)] < min_pivot {
                min_pivot = l[(i, i)];
            }
        }
        if min_pivot * min_pivot > thr {
            return Ok(chol.solve(rhs));
        }
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut null_dims = 0usize;
    let mut inv_vals = DVector::<S>::zeros(m.nrows());
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v.abs() <= thr {
            null_dims += 1;
        } else {
            inv_vals[i] = S::one() / v;
        }
    }
    if null_dims > 0 && policy == SingularPolicy::Reject {
        return Err(Error::SingularNuisance(format!(
            "symmetric {}x{} block has {} eigenvalue(s) below threshold {:.3e}",
            m.nrows(),
            m.ncols(),
            null_dims,
            thr.as_f64()
        )));
    }
    let q = &eig.eigenvectors;
    let scaled = q.transpose() * rhs;
    let mut scaled = scaled;
    for i in 0..scaled.nrows() {
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= inv_vals[i];
        }
    }
    Ok(q * scaled)
}

/// Invert a symmetric matrix under the same pivoting rules as [`sym_solve`].
pub(crate) fn sym_inverse<S: RealScalar>(
    m: &DMatrix<S>,
    policy: SingularPolicy,
) -> Result<DMatrix<S>> {
    let eye = DMatrix::<S>::identity(m.nrows(), m.ncols());
    let mut inv = sym_solve(m, &eye, policy)?;
    symmetrize(&mut inv);
    Ok(inv)
}

/// Schur complement of the trailing block: keep the leading `n` parameters.
///
/// For `J = [[A, B], [Bᵀ, C]]` returns `A − B C⁻¹ Bᵀ`, the equivalent
/// Fisher information for the first `n` coordinates.
pub fn schur_complement<S: RealScalar>(
    j: &DMatrix<S>,
    n: usize,
    policy: SingularPolicy,
) -> Result<DMatrix<S>> {
    let dim = j.nrows();
    if j.ncols() != dim {
        return Err(Error::Numerical(format!(
            "Schur reduction needs a square matrix, got {}x{}",
            j.nrows(),
            j.ncols()
        )));
    }
    if n > dim {
        return Err(Error::Numerical(format!(
            "cannot keep {n} of {dim} parameters"
        )));
    }
    if n == dim {
        return Ok(j.clone());
    }
    let a = j.view((0, 0), (n, n)).into_owned();
    let b = j.view((0, n), (n, dim - n)).into_owned();
    let c = j.view((n, n), (dim - n, dim - n)).into_owned();
    let cx = sym_solve(&c, &b.transpose(), policy)?;
    let mut out = a - b * cx;
    symmetrize(&mut out);
    Ok(out)
}

/// Smallest eigenvalue of a symmetric matrix (diagnostics, PSD checks).
pub fn min_symmetric_eigenvalue<S: RealScalar>(m: &DMatrix<S>) -> S {
    let eig = SymmetricEigen::new(m.clone());
    let mut min = S::max_value().unwrap();
    for &v in eig.eigenvalues.iter() {
        if v < min {
            min = v;
        }
    }
    min
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_three_by_three() {
        let j = DMatrix::<f64>::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 2.0]);
        let e = schur_complement(&j, 2, SingularPolicy::Reject).unwrap();
        assert!((e[(0, 0)] - 1.5).abs() < 1e-15);
        assert!((e[(1, 1)] - 2.0).abs() < 1e-15);
        assert!(e[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn block_diagonal_keeps_leading_block() {
        let j = DMatrix::<f64>::from_row_slice(4, 4, &[
            3.0, 0.5, 0.0, 0.0, //
            0.5, 2.0, 0.0, 0.0, //
            0.0, 0.0, 4.0, 1.0, //
            0.0, 0.0, 1.0, 4.0,
        ]);
        let e = schur_complement(&j, 2, SingularPolicy::Reject).unwrap();
        assert_eq!(e[(0, 0)], 3.0);
        assert_eq!(e[(0, 1)], 0.5);
        assert_eq!(e[(1, 1)], 2.0);
    }

    #[test]
    fn singular_nuisance_is_rejected_unless_pseudo() {
        let j = DMatrix::<f64>::from_row_slice(3, 3, &[2.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            schur_complement(&j, 1, SingularPolicy::Reject),
            Err(Error::SingularNuisance(_))
        ));
        // Pseudo-inverse route drops the null direction instead.
        let e = schur_complement(&j, 1, SingularPolicy::PseudoInverse).unwrap();
        assert!(e[(0, 0)].is_finite());
    }

    #[test]
    fn works_in_f32() {
        let j = DMatrix::<f32>::from_row_slice(3, 3, &[2.0, 0.0, 1.0, 0.0, 2.0, 0.0, 1.0, 0.0, 2.0]);
        let e = schur_complement(&j, 2, SingularPolicy::Reject).unwrap();
        assert!((e[(0, 0)] - 1.5).abs() < 1e-6);
    }
}
