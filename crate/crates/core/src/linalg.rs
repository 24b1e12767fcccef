// SPDX-License-Identifier: Apache-2.0

//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, SVector, Schur, SymmetricEigen};

use crate::{Error, Result, C64};

/// Complex 3×3 matrix (mode-space operators).
pub type CMat3 = Matrix3<C64>;
/// Complex 6×6 matrix (covariance space).
pub type CMat6 = Matrix6<C64>;

/// Promote a real 3×3 matrix to complex.
pub fn complexify(m: &Matrix3<f64>) -> CMat3 {
    m.map(|x| C64::new(x, 0.0))
}

/// Largest elementwise modulus of `m − m†`.
pub fn hermiticity_defect<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    (m - m.adjoint()).iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Hermitian part `(m + m†)/2`.
pub fn hermitian_part<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    (m + m.adjoint()).scale(0.5)
}

fn to_dynamic<const N: usize>(m: &SMatrix<C64, N, N>) -> DMatrix<C64> {
    DMatrix::from_iterator(N, N, m.iter().copied())
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues<const N: usize>(m: &SMatrix<C64, N, N>) -> [f64; N] {
    let eig = SymmetricEigen::new(to_dynamic(&hermitian_part(m)));
    let mut out = [0.0; N];
    for (o, v) in out.iter_mut().zip(eig.eigenvalues.iter()) {
        *o = *v;
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_hermitian_eigenvalue<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Eigenvalues of a general complex matrix (diagonal of its Schur form).
pub fn eigenvalues<const N: usize>(m: &SMatrix<C64, N, N>) -> [C64; N] {
    let (_, t) = Schur::new(to_dynamic(m)).unpack();
    let mut out = [C64::new(0.0, 0.0); N];
    for (i, o) in out.iter_mut().enumerate() {
        *o = t[(i, i)];
    }
    out
}

/// Eigen-decomposition `m = V diag(λ) V⁻¹` of a diagonalizable 3×3 matrix.
///
/// Each column of `V` is the right singular vector of `m − λI` with the
/// smallest singular value. Fails with [`Error::Singular`] when `V` is
/// numerically singular (defective or nearly defective `m`).
pub fn eigen_decomposition3(m: &CMat3) -> Result<([C64; 3], CMat3, CMat3)> {
    let lam = eigenvalues(m);
    let mut v = CMat3::zeros();
    for (k, &l) in lam.iter().enumerate() {
        let shifted = m - CMat3::identity() * l;
        let svd = to_dynamic(&shifted).svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Singular("SVD did not converge".into()))?;
        let imin = svd.singular_values.imin();
        for i in 0..3 {
            v[(i, k)] = v_t[(imin, i)].conj();
        }
    }
    let vinv = v
        .try_inverse()
        .ok_or_else(|| Error::Singular("matrix is defective".into()))?;
    let cond = max_abs(&v) * max_abs(&vinv);
    if !(cond < 1e8) {
        return Err(Error::Singular(format!(
            "eigenvector matrix is ill-conditioned ({cond:e})"
        )));
    }
    Ok((lam, v, vinv))
}

/// Largest real part of the spectrum of `m`.
pub fn spectral_abscissa<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    eigenvalues(m).iter().fold(f64::NEG_INFINITY, |acc, z| acc.max(z.re))
}

/// Largest elementwise modulus.
pub fn max_abs<const R: usize, const C: usize>(m: &SMatrix<C64, R, C>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Solve the Lyapunov equation `A X + X A† = −Q` for 3×3 complex matrices by
/// vectorization: a dense 9×9 LU solve.
pub fn lyapunov3(a: &CMat3, q: &CMat3) -> Result<CMat3> {
    let mut sys = SMatrix::<C64, 9, 9>::zeros();
    let mut rhs = SVector::<C64, 9>::zeros();
    let idx = |i: usize, j: usize| 3 * i + j;
    for i in 0..3 {
        for j in 0..3 {
            let row = idx(i, j);
            // (A X)_ij = Σ_k A_ik X_kj, (X A†)_ij = Σ_k X_ik conj(A_jk).
            for k in 0..3 {
                sys[(row, idx(k, j))] += a[(i, k)];
                sys[(row, idx(i, k))] += a[(j, k)].conj();
            }
            rhs[row] = -q[(i, j)];
        }
    }
    let lu = sys.lu();
    let x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("Lyapunov system is singular".into()))?;
    let mut out = CMat3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            out[(i, j)] = x[idx(i, j)];
        }
    }
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Singular("Lyapunov solution is not finite".into()));
    }
    Ok(out)
}

/// Block-diagonal 6×6 matrix `a ⊕ b`.
pub fn direct_sum(a: &CMat3, b: &CMat3) -> CMat6 {
    let mut m = CMat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(a);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(b);
    m
}
