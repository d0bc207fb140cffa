//! Pauli matrices, Pauli-string tensor products, a handful of named gates,
//! and orthonormal Hermitian operator bases.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{c, kron};

pub fn identity2() -> Array2<C64> {
    array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

pub fn sigma_x() -> Array2<C64> {
    array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
}

pub fn sigma_y() -> Array2<C64> {
    array![[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
}

pub fn sigma_z() -> Array2<C64> {
    array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
}

/// Lowering operator σ₋ = |0⟩⟨1| (in the σz = diag(1, −1) convention).
pub fn sigma_minus() -> Array2<C64> {
    array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]
}

/// Tensor product of single-qubit Paulis named by a string like "Z" or "XY";
/// the leftmost character is the first tensor factor.
pub fn pauli_string(s: &str) -> Result<Array2<C64>> {
    if s.is_empty() {
        return Err(Error::Invalid("empty Pauli string".into()));
    }
    let mut out: Option<Array2<C64>> = None;
    for ch in s.chars() {
        let factor = match ch.to_ascii_uppercase() {
            'I' => identity2(),
            'X' => sigma_x(),
            'Y' => sigma_y(),
            'Z' => sigma_z(),
            other => {
                return Err(Error::Invalid(format!(
                    "unknown Pauli letter '{other}' in string \"{s}\""
                )))
            }
        };
        out = Some(match out {
            None => factor,
            Some(acc) => kron(&acc, &factor),
        });
    }
    Ok(out.unwrap())
}

/// Named target gates accepted by problem files.
pub fn named_gate(name: &str) -> Result<Array2<C64>> {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    match name.to_ascii_uppercase().as_str() {
        "I" => Ok(identity2()),
        "X" => Ok(sigma_x()),
        "Y" => Ok(sigma_y()),
        "Z" => Ok(sigma_z()),
        "H" => Ok(array![
            [c(inv_sqrt2, 0.0), c(inv_sqrt2, 0.0)],
            [c(inv_sqrt2, 0.0), c(-inv_sqrt2, 0.0)]
        ]),
        "CNOT" => {
            let mut m = Array2::zeros((4, 4));
            m[[0, 0]] = c(1.0, 0.0);
            m[[1, 1]] = c(1.0, 0.0);
            m[[2, 3]] = c(1.0, 0.0);
            m[[3, 2]] = c(1.0, 0.0);
            Ok(m)
        }
        other => Err(Error::Invalid(format!("unknown gate name \"{other}\""))),
    }
}

/// Orthonormal Hermitian basis of normalized Pauli strings over `qubits`
/// qubits (4^qubits matrices, each divided by √(2^qubits)), ordered
/// lexicographically in I, X, Y, Z.
pub fn pauli_basis(qubits: usize) -> Vec<Array2<C64>> {
    let dim = 1usize << qubits;
    let scale = 1.0 / (dim as f64).sqrt();
    let letters = ["I", "X", "Y", "Z"];
    let count = 4usize.pow(qubits as u32);
    let mut basis = Vec::with_capacity(count);
    for idx in 0..count {
        let mut name = String::new();
        let mut rem = idx;
        for pos in (0..qubits).rev() {
            name.push_str(letters[(rem / 4usize.pow(pos as u32)) % 4]);
            rem %= 4usize.pow(pos as u32);
        }
        let m = pauli_string(&name).expect("generated string is valid");
        basis.push(m.mapv(|z| z * scale));
    }
    basis
}

/// Orthonormal Hermitian basis for arbitrary dimension n: the n diagonal unit
/// matrices, then (E_ij + E_ji)/√2 and i(E_ij − E_ji)/√2 for i < j.
pub fn hermitian_basis(n: usize) -> Vec<Array2<C64>> {
    let mut basis = Vec::with_capacity(n * n);
    for i in 0..n {
        let mut m = Array2::zeros((n, n));
        m[[i, i]] = c(1.0, 0.0);
        basis.push(m);
    }
    let s = 1.0 / 2.0_f64.sqrt();
    for i in 0..n {
        for j in (i + 1)..n {
            let mut re = Array2::zeros((n, n));
            re[[i, j]] = c(s, 0.0);
            re[[j, i]] = c(s, 0.0);
            basis.push(re);
            let mut im = Array2::zeros((n, n));
            im[[i, j]] = c(0.0, s);
            im[[j, i]] = c(0.0, -s);
            basis.push(im);
        }
    }
    basis
}
