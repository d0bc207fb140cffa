//! Piecewise-constant propagation on the T/M sample grid, gate fidelity, and
//! the time-averaged conjugated operators that the robustness measures are
//! built from.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{check_unitary, dagger, identity, HermEig};
use crate::problem::{ControlProblem, ControlVector};

/// Tolerance on ‖Ū†Ū − I‖_F for stored propagators.
pub const UNITARY_TOL: f64 = 1e-10;

/// Propagators Ū_0 = I, Ū_1, …, Ū_M on the T/M grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    unitaries: Vec<Array2<C64>>,
}

impl Trajectory {
    /// Wrap M+1 propagators, checking Ū_0 = I exactly and unitarity of the rest.
    pub fn new(unitaries: Vec<Array2<C64>>) -> Result<Self> {
        let first = unitaries
            .first()
            .ok_or_else(|| Error::Invalid("empty trajectory".into()))?;
        let n = first.nrows();
        if *first != identity(n) {
            return Err(Error::Invalid("trajectory must start at the identity".into()));
        }
        for u in &unitaries {
            if u.dim() != (n, n) {
                return Err(Error::DimMismatch(format!(
                    "trajectory mixes {}×{} and {}×{} matrices",
                    n,
                    n,
                    u.nrows(),
                    u.ncols()
                )));
            }
            check_unitary(&u.view(), UNITARY_TOL)?;
        }
        Ok(Trajectory { unitaries })
    }

    pub fn dim(&self) -> usize {
        self.unitaries[0].nrows()
    }

    /// Sample count M (the trajectory stores M+1 matrices).
    pub fn samples(&self) -> usize {
        self.unitaries.len() - 1
    }

    /// Ū_t for t in 0..=M.
    pub fn unitary(&self, t: usize) -> &Array2<C64> {
        &self.unitaries[t]
    }

    /// Ū_M, the realized gate.
    pub fn final_unitary(&self) -> &Array2<C64> {
        self.unitaries.last().unwrap()
    }

    pub fn unitaries(&self) -> &[Array2<C64>] {
        &self.unitaries
    }
}

/// Evolve under the nominal Hamiltonian H0 + Σ_j v_{tj} H_j, one exact
/// exponential per T/M sample (pulse amplitudes held constant over M/N
/// sub-steps, so repeated step matrices are reused).
pub fn propagate_nominal(problem: &ControlProblem, v: &ControlVector) -> Result<Trajectory> {
    let amps = problem.sample_amplitudes(v);
    propagate_on_grid(problem, &amps, None)
}

/// Evolve under H0 + Σ_j v_{tj} H_j + H̃_t with one Hermitian perturbation
/// sample per grid step.
pub fn propagate_perturbed(
    problem: &ControlProblem,
    v: &ControlVector,
    perturbation: &[Array2<C64>],
) -> Result<Trajectory> {
    if perturbation.len() != problem.samples() {
        return Err(Error::GridMismatch {
            m: perturbation.len(),
            n: problem.samples(),
        });
    }
    let n = problem.dim();
    for h in perturbation {
        if h.dim() != (n, n) {
            return Err(Error::DimMismatch(format!(
                "perturbation sample is {}×{}, expected {}×{}",
                h.nrows(),
                h.ncols(),
                n,
                n
            )));
        }
        crate::linalg::check_hermitian(&h.view(), crate::problem::MATRIX_TOL)?;
    }
    let amps = problem.sample_amplitudes(v);
    propagate_on_grid(problem, &amps, Some(perturbation))
}

fn propagate_on_grid(
    problem: &ControlProblem,
    amps: &Array2<f64>,
    perturbation: Option<&[Array2<C64>]>,
) -> Result<Trajectory> {
    let n = problem.dim();
    let m = problem.num_controls();
    let tau = problem.dt();
    let mut unitaries = Vec::with_capacity(problem.samples() + 1);
    unitaries.push(identity(n));

    let mut last_row: Option<Array1<f64>> = None;
    let mut step = identity(n);
    for s in 0..problem.samples() {
        let row = amps.row(s).to_owned();
        let reusable =
            perturbation.is_none() && last_row.as_ref().map_or(false, |prev| *prev == row);
        if !reusable {
            let mut h = problem.drift().clone();
            for j in 0..m {
                let a = row[j];
                if a != 0.0 {
                    h.scaled_add(C64::new(a, 0.0), &problem.controls()[j]);
                }
            }
            if let Some(pert) = perturbation {
                h += &pert[s];
            }
            step = HermEig::new(&h.view())?.expi(tau);
            last_row = Some(row);
        }
        let next = step.dot(unitaries.last().unwrap());
        unitaries.push(next);
    }
    Trajectory::new(unitaries)
}

/// Gate fidelity |Tr(W†Ū_M)/n|², invariant under a global phase of Ū_M.
pub fn nominal_fidelity(traj: &Trajectory, target: &Array2<C64>) -> Result<f64> {
    let n = traj.dim();
    if target.dim() != (n, n) {
        return Err(Error::DimMismatch(format!(
            "target is {}×{}, trajectory dimension is {}",
            target.nrows(),
            target.ncols(),
            n
        )));
    }
    let overlap: C64 = dagger(&target.view())
        .dot(traj.final_unitary())
        .diag()
        .iter()
        .sum();
    Ok((overlap / C64::new(n as f64, 0.0)).norm_sqr())
}

/// Fidelity of one perturbed evolution against the problem's target.
pub fn perturbed_fidelity(
    problem: &ControlProblem,
    v: &ControlVector,
    perturbation: &[Array2<C64>],
) -> Result<f64> {
    let traj = propagate_perturbed(problem, v, perturbation)?;
    nominal_fidelity(&traj, problem.target())
}

/// G_avg = (1/M) Σ_{t=1..M} Ū_t† B_t Ū_t.
pub fn time_averaged_hamiltonian(traj: &Trajectory, b: &[Array2<C64>]) -> Result<Array2<C64>> {
    if b.len() != traj.samples() {
        return Err(Error::GridMismatch {
            m: b.len(),
            n: traj.samples(),
        });
    }
    let n = traj.dim();
    let mut acc = Array2::<C64>::zeros((n, n));
    for (t, op) in b.iter().enumerate() {
        if op.dim() != (n, n) {
            return Err(Error::DimMismatch(format!(
                "operator {} is {}×{}, expected {}×{}",
                t,
                op.nrows(),
                op.ncols(),
                n,
                n
            )));
        }
        let u = traj.unitary(t + 1);
        acc += &dagger(&u.view()).dot(op).dot(u);
    }
    Ok(acc.mapv(|z| z / C64::new(b.len() as f64, 0.0)))
}

/// Operator-norm distance surrogate 2n(1−√F) between unitaries with gate
/// fidelity F in dimension n.
pub fn infidelity_distance(fidelity: f64, n: usize) -> Result<f64> {
    if !(-1e-12..=1.0 + 1e-12).contains(&fidelity) {
        return Err(Error::Invalid(format!(
            "fidelity {fidelity} outside [0, 1]"
        )));
    }
    let f = fidelity.clamp(0.0, 1.0);
    Ok(2.0 * n as f64 * (1.0 - f.sqrt()))
}
