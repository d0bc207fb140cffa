//! Derivatives of the nominal fidelity and the robustness measure with
//! respect to the mN pulse amplitudes, packaged as local quadratic models.
//!
//! The fidelity gradient is analytic (directional derivatives of each step's
//! matrix exponential in its eigenbasis, chained through forward/backward
//! partial products); everything else is central finite differences. The
//! worst-case measures (max row sum, spectral norm) are nonsmooth on a
//! measure-zero set, which finite differences tolerate in practice; a
//! log-sum-exp temperature is available when that chatter matters.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{c, dagger, identity, HermEig};
use crate::problem::{ControlProblem, ControlVector};
use crate::propagation::propagate_nominal;
use crate::uncertainty::RobustnessObjective;

/// Second-order local model f(v+ṽ) ≈ value + gradientᵀṽ + ṽᵀ·hessian·ṽ/2.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    pub value: f64,
    pub gradient: Array1<f64>,
    pub hessian: Array2<f64>,
}

impl QuadraticModel {
    pub fn new(value: f64, gradient: Array1<f64>, hessian: Array2<f64>) -> Result<Self> {
        let d = gradient.len();
        if hessian.dim() != (d, d) {
            return Err(Error::DimMismatch(format!(
                "hessian is {}×{} for a {}-dim gradient",
                hessian.nrows(),
                hessian.ncols(),
                d
            )));
        }
        if !value.is_finite() || gradient.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite model data".into()));
        }
        let mut asym = 0.0f64;
        for i in 0..d {
            for j in (i + 1)..d {
                asym = asym.max((hessian[[i, j]] - hessian[[j, i]]).abs());
            }
        }
        if asym > 1e-10 {
            return Err(Error::Invalid(format!(
                "hessian asymmetry {asym:e} exceeds 1e-10"
            )));
        }
        Ok(QuadraticModel {
            value,
            gradient,
            hessian,
        })
    }

    /// Model prediction at displacement ṽ.
    pub fn predict(&self, step: &Array1<f64>) -> f64 {
        self.value + self.gradient.dot(step) + 0.5 * step.dot(&self.hessian.dot(step))
    }
}

/// Exact gradient of F_nom(v).
///
/// With Ū_M = X_M…X_1 and φ = Tr(W†Ū_M)/n, each ∂φ/∂a_{tj} inserts the
/// Fréchet derivative of X_t at its eigendecomposition; the per-sample
/// results fold back through the hold (and actuator) map onto the pulses.
pub fn fidelity_gradient(problem: &ControlProblem, v: &ControlVector) -> Result<Array1<f64>> {
    let n = problem.dim();
    let m_samples = problem.samples();
    let m_ctrl = problem.num_controls();
    if m_ctrl == 0 {
        return Ok(Array1::zeros(0));
    }
    let tau = problem.dt();
    let amps = problem.sample_amplitudes(v);

    let mut eigs = Vec::with_capacity(m_samples);
    let mut steps = Vec::with_capacity(m_samples);
    let mut prefix = Vec::with_capacity(m_samples + 1);
    prefix.push(identity(n));
    for t in 0..m_samples {
        let mut h = problem.drift().clone();
        for j in 0..m_ctrl {
            h.scaled_add(c(amps[[t, j]], 0.0), &problem.controls()[j]);
        }
        let eig = HermEig::new(&h.view())?;
        let x = eig.expi(tau);
        let next = x.dot(&prefix[t]);
        prefix.push(next);
        eigs.push(eig);
        steps.push(x);
    }

    let wdag = dagger(&problem.target().view());
    let phi = wdag.dot(&prefix[m_samples]).diag().sum() / c(n as f64, 0.0);

    // backward sweep: r = W†·X_M…X_{t+1}
    let mut grad_samples = Array2::zeros((m_samples, m_ctrl));
    let mut r = wdag;
    for t in (0..m_samples).rev() {
        let eig = &eigs[t];
        let q = &eig.vecs;
        let qd = dagger(&q.view());
        let y = qd.dot(&prefix[t].dot(&r)).dot(q); // Q†·(Ū_{t-1} W† P_t)·Q
        let psi = eig.phi_expi(tau);
        for j in 0..m_ctrl {
            let b = qd.dot(&problem.controls()[j]).dot(q);
            let mut dphi = C64::new(0.0, 0.0);
            for p in 0..n {
                for qi in 0..n {
                    dphi += y[[p, qi]] * psi[[qi, p]] * b[[qi, p]];
                }
            }
            grad_samples[[t, j]] = 2.0 * (phi.conj() * dphi / c(n as f64, 0.0)).re;
        }
        r = r.dot(&steps[t]);
    }
    Ok(problem.accumulate_to_pulses(&grad_samples.view()))
}

fn probe(problem: &ControlProblem, base: &Array1<f64>, k: usize, delta: f64) -> Result<ControlVector> {
    let mut amps = base.clone();
    amps[k] += delta;
    ControlVector::new_unbounded(problem, amps)
}

/// Hessian of F_nom(v): central differences of the analytic gradient,
/// symmetrized.
pub fn fidelity_hessian(problem: &ControlProblem, v: &ControlVector) -> Result<Array2<f64>> {
    let base = v.as_array();
    let d = base.len();
    let rows: Vec<Array1<f64>> = (0..d)
        .into_par_iter()
        .map(|k| -> Result<Array1<f64>> {
            let h = 1e-3 * base[k].abs().max(1.0);
            let gp = fidelity_gradient(problem, &probe(problem, base, k, h)?)?;
            let gm = fidelity_gradient(problem, &probe(problem, base, k, -h)?)?;
            Ok((gp - gm) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    let mut hess = Array2::zeros((d, d));
    for (k, row) in rows.into_iter().enumerate() {
        hess.row_mut(k).assign(&row);
    }
    let ht = hess.t().to_owned();
    Ok((hess + ht) * 0.5)
}

/// F_nom with its derivatives at v.
pub fn fidelity_quadratic(problem: &ControlProblem, v: &ControlVector) -> Result<QuadraticModel> {
    let traj = propagate_nominal(problem, v)?;
    let value = crate::propagation::nominal_fidelity(&traj, problem.target())?;
    QuadraticModel::new(
        value,
        fidelity_gradient(problem, v)?,
        fidelity_hessian(problem, v)?,
    )
}

fn objective_value(
    objective: &RobustnessObjective,
    problem: &ControlProblem,
    v: &ControlVector,
    temperature: Option<f64>,
) -> Result<f64> {
    let traj = propagate_nominal(problem, v)?;
    let val = objective.value_with_traj(problem, v, &traj, temperature)?;
    if !val.is_finite() {
        return Err(Error::Invalid(format!("non-finite measure {val} at probe point")));
    }
    Ok(val)
}

/// Gradient of J_rbst(v) by central differences (assemblies rebuilt at every
/// probe point). The optional temperature smooths worst-case parts.
pub fn robustness_gradient(
    problem: &ControlProblem,
    v: &ControlVector,
    objective: &RobustnessObjective,
    temperature: Option<f64>,
) -> Result<Array1<f64>> {
    let base = v.as_array();
    let d = base.len();
    if objective.specs.is_empty() {
        return Ok(Array1::zeros(d));
    }
    let entries: Vec<f64> = (0..d)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let h = 1e-5 * base[k].abs().max(1.0);
            let fp = objective_value(objective, problem, &probe(problem, base, k, h)?, temperature)?;
            let fm =
                objective_value(objective, problem, &probe(problem, base, k, -h)?, temperature)?;
            Ok((fp - fm) / (2.0 * h))
        })
        .collect::<Result<_>>()?;
    Ok(Array1::from_vec(entries))
}

/// Hessian of J_rbst(v): central second differences on the value
/// (four-point stencil off the diagonal), symmetrized by construction.
pub fn robustness_hessian(
    problem: &ControlProblem,
    v: &ControlVector,
    objective: &RobustnessObjective,
    temperature: Option<f64>,
) -> Result<Array2<f64>> {
    let base = v.as_array();
    let d = base.len();
    if objective.specs.is_empty() {
        return Ok(Array2::zeros((d, d)));
    }
    let f0 = objective_value(objective, problem, v, temperature)?;
    let steps: Vec<f64> = (0..d).map(|k| 1e-3 * base[k].abs().max(1.0)).collect();

    let mut jobs: Vec<(usize, usize)> = Vec::with_capacity(d * (d + 1) / 2);
    for k in 0..d {
        for l in k..d {
            jobs.push((k, l));
        }
    }
    let values: Vec<f64> = jobs
        .par_iter()
        .map(|&(k, l)| -> Result<f64> {
            let (hk, hl) = (steps[k], steps[l]);
            if k == l {
                let fp = objective_value(objective, problem, &probe(problem, base, k, hk)?, temperature)?;
                let fm = objective_value(objective, problem, &probe(problem, base, k, -hk)?, temperature)?;
                Ok((fp + fm - 2.0 * f0) / (hk * hk))
            } else {
                let corner = |sk: f64, sl: f64| -> Result<f64> {
                    let mut amps = base.clone();
                    amps[k] += sk * hk;
                    amps[l] += sl * hl;
                    objective_value(
                        objective,
                        problem,
                        &ControlVector::new_unbounded(problem, amps)?,
                        temperature,
                    )
                };
                Ok((corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)?
                    + corner(-1.0, -1.0)?)
                    / (4.0 * hk * hl))
            }
        })
        .collect::<Result<_>>()?;
    let mut hess = Array2::zeros((d, d));
    for (&(k, l), &val) in jobs.iter().zip(values.iter()) {
        hess[[k, l]] = val;
        hess[[l, k]] = val;
    }
    Ok(hess)
}

/// J_rbst with its derivatives at v.
pub fn robustness_quadratic(
    problem: &ControlProblem,
    v: &ControlVector,
    objective: &RobustnessObjective,
    temperature: Option<f64>,
) -> Result<QuadraticModel> {
    QuadraticModel::new(
        objective_value(objective, problem, v, temperature)?,
        robustness_gradient(problem, v, objective, temperature)?,
        robustness_hessian(problem, v, objective, temperature)?,
    )
}
