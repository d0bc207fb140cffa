//! Dense complex linear algebra helpers shared across the crate: Hermitian
//! matrix exponentials through the eigenbasis, matrix norms, column-stacking
//! vectorization, and a Padé exponential for general (non-Hermitian) matrices.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eigh, Solve, UPLO, SVD};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Conjugate transpose.
pub fn dagger(a: &ArrayView2<C64>) -> Array2<C64> {
    a.t().mapv(|z| z.conj())
}

/// Kronecker product a ⊗ b.
pub fn kron(a: &Array2<C64>, b: &Array2<C64>) -> Array2<C64> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            if aij != c(0.0, 0.0) {
                out.slice_mut(ndarray::s![i * rb..(i + 1) * rb, j * cb..(j + 1) * cb])
                    .assign(&b.mapv(|z| z * aij));
            }
        }
    }
    out
}

/// Column-stacking vectorization, so that vec(A X B) = (Bᵀ ⊗ A) vec(X).
pub fn vec_col(a: &ArrayView2<C64>) -> Array1<C64> {
    Array1::from_iter(a.t().iter().cloned())
}

/// Inverse of [`vec_col`] for an n×n matrix.
pub fn unvec_col(v: &Array1<C64>, n: usize) -> Array2<C64> {
    let mut out = Array2::zeros((n, n));
    for j in 0..n {
        for i in 0..n {
            out[[i, j]] = v[j * n + i];
        }
    }
    out
}

pub fn identity(n: usize) -> Array2<C64> {
    Array2::eye(n)
}

pub fn fro_norm(a: &ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &ArrayView2<C64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let (_, s, _) = a.to_owned().svd(false, false)?;
    Ok(s.iter().cloned().fold(0.0, f64::max))
}

/// Sum of singular values.
pub fn nuclear_norm(a: &ArrayView2<C64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    let (_, s, _) = a.to_owned().svd(false, false)?;
    Ok(s.sum())
}

/// Max over rows of the absolute row sum (complex modulus entries).
pub fn max_row_sum(a: &ArrayView2<C64>) -> f64 {
    a.axis_iter(Axis(0))
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &ArrayView2<C64>, b: &ArrayView2<C64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Relative Hermiticity residual ‖A − A†‖_F / max(1, ‖A‖_F).
pub fn hermiticity_residual(a: &ArrayView2<C64>) -> f64 {
    let ad = dagger(a);
    let num = a
        .iter()
        .zip(ad.iter())
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    num / fro_norm(a).max(1.0)
}

pub fn check_hermitian(a: &ArrayView2<C64>, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimMismatch(format!(
            "expected square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let resid = hermiticity_residual(a);
    if resid > tol {
        return Err(Error::NotHermitian { resid, tol });
    }
    Ok(())
}

/// Unitarity residual ‖U†U − I‖_F.
pub fn unitarity_residual(u: &ArrayView2<C64>) -> f64 {
    let prod = dagger(u).dot(u);
    let n = u.ncols();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let expect = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
            acc += (prod[[i, j]] - expect).norm_sqr();
        }
    }
    acc.sqrt()
}

pub fn check_unitary(u: &ArrayView2<C64>, tol: f64) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(Error::DimMismatch(format!(
            "expected square matrix, got {}×{}",
            u.nrows(),
            u.ncols()
        )));
    }
    let resid = unitarity_residual(u);
    if resid > tol {
        return Err(Error::NotUnitary { resid, tol });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix, kept around so propagation and
/// the propagator derivatives can share one factorization per time step.
#[derive(Debug, Clone)]
pub struct HermEig {
    /// Real eigenvalues, ascending.
    pub vals: Array1<f64>,
    /// Unitary of eigenvectors (columns).
    pub vecs: Array2<C64>,
}

impl HermEig {
    pub fn new(h: &ArrayView2<C64>) -> Result<Self> {
        // LAPACK reads the row-major buffer column-major, so zheev actually
        // diagonalizes H* and returns its eigenvectors; conjugating restores
        // H = Q·diag(vals)·Q†. A reconstruction test pins this convention.
        let (vals, mut vecs) = h.to_owned().eigh(UPLO::Lower)?;
        vecs.mapv_inplace(|z| z.conj());
        Ok(HermEig { vals, vecs })
    }

    /// exp(−i·tau·H) assembled in the eigenbasis: Q · diag(e^{−iτλ}) · Q†.
    pub fn expi(&self, tau: f64) -> Array2<C64> {
        let mut scaled = self.vecs.clone();
        for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
            let phase = c(0.0, -tau * self.vals[j]).exp();
            col.mapv_inplace(|z| z * phase);
        }
        scaled.dot(&dagger(&self.vecs.view()))
    }

    /// Divided-difference table Ψ with Ψ_pq = (e^{−iτλ_p} − e^{−iτλ_q})/(λ_p − λ_q)
    /// and the confluent limit −iτ e^{−iτλ_p} on the diagonal, evaluated in the
    /// cancellation-free midpoint form −iτ·e^{−iτ(λ_p+λ_q)/2}·sinc(τ(λ_p−λ_q)/2).
    /// The directional derivative of exp(−iτH) along E is Q (Ψ ∘ (Q†EQ)) Q†.
    pub fn phi_expi(&self, tau: f64) -> Array2<C64> {
        let n = self.vals.len();
        let mut psi = Array2::zeros((n, n));
        for p in 0..n {
            for q in 0..n {
                let mid = 0.5 * (self.vals[p] + self.vals[q]);
                let half_gap = 0.5 * tau * (self.vals[p] - self.vals[q]);
                let sinc = if half_gap.abs() < 1e-100 {
                    1.0
                } else {
                    half_gap.sin() / half_gap
                };
                psi[[p, q]] = c(0.0, -tau) * c(0.0, -tau * mid).exp() * sinc;
            }
        }
        psi
    }
}

/// exp(−i·tau·H) for Hermitian H.
pub fn expm_hermitian(h: &ArrayView2<C64>, tau: f64) -> Result<Array2<C64>> {
    Ok(HermEig::new(h)?.expi(tau))
}

/// Symmetric PSD square root of a real matrix. Eigenvalues below −tol are an
/// error; values in [−tol, 0] are clipped to 0.
pub fn psd_sqrt(c_mat: &Array2<f64>, tol: f64) -> Result<Array2<f64>> {
    let (vals, vecs) = c_mat.clone().eigh(UPLO::Lower)?;
    let mut roots = Array1::<f64>::zeros(vals.len());
    for (i, &w) in vals.iter().enumerate() {
        if w < -tol {
            return Err(Error::Invalid(format!(
                "matrix is not positive semidefinite: eigenvalue {w:.3e}"
            )));
        }
        roots[i] = w.max(0.0).sqrt();
    }
    // V · diag(√w) · Vᵀ
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        col.mapv_inplace(|x| x * roots[j]);
    }
    Ok(scaled.dot(&vecs.t()))
}

/// General matrix exponential by scaling-and-squaring with the [13/13] Padé
/// approximant. Only used on the lifted Lindblad generator, which is not
/// Hermitian; everything unitary goes through [`expm_hermitian`].
pub fn expm_general(a: &ArrayView2<C64>) -> Result<Array2<C64>> {
    const THETA_13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimMismatch(format!(
            "expected square matrix, got {}×{}",
            n,
            a.ncols()
        )));
    }
    // 1-norm (max column abs sum) drives the scaling exponent
    let norm1 = a
        .axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scale = c(0.5f64.powi(s), 0.0);
    let a1 = a.mapv(|z| z * scale);
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let eye = identity(n);

    let u_inner = a6.mapv(|z| z * B[13])
        + a4.mapv(|z| z * B[11])
        + a2.mapv(|z| z * B[9]);
    let u = a1.dot(
        &(a6.dot(&u_inner)
            + a6.mapv(|z| z * B[7])
            + a4.mapv(|z| z * B[5])
            + a2.mapv(|z| z * B[3])
            + eye.mapv(|z| z * B[1])),
    );
    let v_inner = a6.mapv(|z| z * B[12])
        + a4.mapv(|z| z * B[10])
        + a2.mapv(|z| z * B[8]);
    let v = a6.dot(&v_inner)
        + a6.mapv(|z| z * B[6])
        + a4.mapv(|z| z * B[4])
        + a2.mapv(|z| z * B[2])
        + eye.mapv(|z| z * B[0]);

    // Solve (V − U) X = (V + U) column by column.
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut x = Array2::<C64>::zeros((n, n));
    for j in 0..n {
        let col = rhs.index_axis(Axis(1), j).to_owned();
        let sol = lhs.solve(&col)?;
        x.index_axis_mut(Axis(1), j).assign(&sol);
    }
    for _ in 0..s {
        x = x.dot(&x);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli;

    #[test]
    fn vec_col_is_column_major() {
        let a = ndarray::array![[c(1.0, 0.0), c(2.0, 0.0)], [c(3.0, 0.0), c(4.0, 0.0)]];
        let v = vec_col(&a.view());
        assert_eq!(v.to_vec(), vec![c(1.0, 0.0), c(3.0, 0.0), c(2.0, 0.0), c(4.0, 0.0)]);
        let back = unvec_col(&v, 2);
        assert_eq!(max_abs_diff(&a.view(), &back.view()), 0.0);
    }

    #[test]
    fn vec_of_product_matches_kron_identity() {
        // vec(A X B) = (Bᵀ ⊗ A) vec X on a fixed non-symmetric triple
        let a = ndarray::array![[c(1.0, 1.0), c(0.0, 2.0)], [c(-1.0, 0.5), c(2.0, 0.0)]];
        let x = ndarray::array![[c(0.5, 0.0), c(1.0, -1.0)], [c(2.0, 2.0), c(0.0, 1.0)]];
        let b = ndarray::array![[c(2.0, 0.0), c(0.0, -1.0)], [c(1.0, 1.0), c(3.0, 0.0)]];
        let lhs = vec_col(&a.dot(&x).dot(&b).view());
        let bt = b.t().to_owned();
        let rhs = kron(&bt, &a).dot(&vec_col(&x.view()));
        let diff = lhs
            .iter()
            .zip(rhs.iter())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-14, "vec identity violated by {diff:e}");
    }

    #[test]
    fn expm_hermitian_pauli_x_closed_form() {
        // exp(−iθσx) = cos(θ)I − i sin(θ)σx
        let theta = 0.7;
        let u = expm_hermitian(&pauli::sigma_x().view(), theta).unwrap();
        let expect = pauli::identity2().mapv(|z| z * theta.cos())
            + pauli::sigma_x().mapv(|z| z * c(0.0, -theta.sin()));
        assert!(max_abs_diff(&u.view(), &expect.view()) < 1e-14);
    }

    #[test]
    fn expm_general_matches_hermitian_path() {
        // include a σy component so transpose/conjugation slips cannot hide
        let h = pauli::sigma_z()
            + pauli::sigma_x().mapv(|z| z * 0.3)
            + pauli::sigma_y().mapv(|z| z * (-0.7));
        let tau = 0.9;
        let via_eig = expm_hermitian(&h.view(), tau).unwrap();
        let arg = h.mapv(|z| z * c(0.0, -tau));
        let via_pade = expm_general(&arg.view()).unwrap();
        assert!(max_abs_diff(&via_eig.view(), &via_pade.view()) < 1e-12);
    }

    #[test]
    fn eigh_reconstructs_complex_hermitian() {
        let h = pauli::sigma_z()
            + pauli::sigma_x().mapv(|z| z * 0.4)
            + pauli::sigma_y().mapv(|z| z * (-0.7));
        let e = HermEig::new(&h.view()).unwrap();
        let mut lam = Array2::<C64>::zeros((2, 2));
        for i in 0..2 {
            lam[[i, i]] = c(e.vals[i], 0.0);
        }
        let recon = e.vecs.dot(&lam).dot(&dagger(&e.vecs.view()));
        assert!(max_abs_diff(&recon.view(), &h.view()) < 1e-12);
    }

    #[test]
    fn exponential_of_pauli_combination_closed_form() {
        // exp(−iθ n̂·σ) = cos θ·I − i sin θ·n̂·σ, independent of any solver
        let (nx, ny, nz) = (0.48, -0.6, 0.64);
        let ns = pauli::sigma_x().mapv(|z| z * nx)
            + pauli::sigma_y().mapv(|z| z * ny)
            + pauli::sigma_z().mapv(|z| z * nz);
        let theta: f64 = 1.1;
        let expect =
            identity(2).mapv(|z| z * theta.cos()) + ns.mapv(|z| z * c(0.0, -theta.sin()));
        let via_eig = expm_hermitian(&ns.view(), theta).unwrap();
        assert!(max_abs_diff(&via_eig.view(), &expect.view()) < 1e-12);
        let via_pade = expm_general(&ns.mapv(|z| z * c(0.0, -theta)).view()).unwrap();
        assert!(max_abs_diff(&via_pade.view(), &expect.view()) < 1e-12);
    }

    #[test]
    fn expm_general_nilpotent_closed_form() {
        // exp([[0,1],[0,0]]) = [[1,1],[0,1]]
        let a = ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        let e = expm_general(&a.view()).unwrap();
        let expect = ndarray::array![[c(1.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]];
        assert!(max_abs_diff(&e.view(), &expect.view()) < 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let c_mat = ndarray::array![[2.0, 0.5], [0.5, 1.0]];
        let r = psd_sqrt(&c_mat, 1e-12).unwrap();
        let back = r.dot(&r);
        let diff = (&back - &c_mat).iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
        assert!(psd_sqrt(&ndarray::array![[1.0, 0.0], [0.0, -1.0]], 1e-12).is_err());
    }

    #[test]
    fn spectral_norm_rank_one() {
        // [[3],[4]] has singular value 5
        let a = ndarray::array![[c(3.0, 0.0)], [c(4.0, 0.0)]];
        assert!((spectral_norm(&a.view()).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn max_row_sum_uses_complex_modulus() {
        let a = ndarray::array![[c(3.0, 4.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 1.0)]];
        assert!((max_row_sum(&a.view()) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn phi_matrix_matches_finite_difference_of_exponential() {
        let h = pauli::sigma_z() + pauli::sigma_x().mapv(|z| z * 0.4);
        let e = HermEig::new(&h.view()).unwrap();
        let tau = 0.8;
        let dir = pauli::sigma_x();
        let psi = e.phi_expi(tau);
        let dir_eig = dagger(&e.vecs.view()).dot(&dir).dot(&e.vecs);
        let deriv = e.vecs.dot(&(&psi * &dir_eig)).dot(&dagger(&e.vecs.view()));
        // central difference of exp(−iτ(H + sE)) at s=0
        let s = 1e-6;
        let hp = &h + &dir.mapv(|z| z * s);
        let hm = &h - &dir.mapv(|z| z * s);
        let fd = (expm_hermitian(&hp.view(), tau).unwrap()
            - expm_hermitian(&hm.view(), tau).unwrap())
        .mapv(|z| z / (2.0 * s));
        assert!(max_abs_diff(&deriv.view(), &fd.view()) < 1e-9);
    }
}
