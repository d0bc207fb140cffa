//! Two-stage pulse synthesis: gradient ascent on the nominal fidelity until
//! it clears a threshold f0, then descent on the robustness measure along
//! the high-fidelity level set. Each Stage-2 step solves the dual of the
//! quadratic subprogram
//!
//!   minimize ṽᵀṽ + α(J_quad(ṽ) − J_rbst)   s.t.   F_quad(ṽ) ≥ f0
//!
//! in the single dual variable λ ≥ 0 by one-dimensional search, which is
//! exact because the dual function is concave on its feasible interval.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::differentiation::{fidelity_quadratic, robustness_quadratic};
use crate::error::{Error, Result};
use crate::linalg::{c, HermEig};
use crate::problem::{ControlProblem, ControlVector};
use crate::propagation::{nominal_fidelity, propagate_nominal};
use crate::uncertainty::RobustnessObjective;

/// Knobs for the two-stage run.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Fidelity threshold separating the stages.
    pub f0: f64,
    /// Robustness weight α in the Stage-2 subproblem.
    pub alpha: f64,
    /// Stage-1 step-norm cap β.
    pub beta: f64,
    /// Iteration budget across both stages.
    pub max_iters: usize,
    /// Stop when J moves less than this over a 10-iteration window.
    pub tol: f64,
    /// Ridge ε: M(λ) must satisfy λ_min(M) ≥ ε to count as feasible.
    pub ridge: f64,
    /// Geometric growth factor for the λ bracket.
    pub bracket_growth: f64,
    /// Optional log-sum-exp temperature for worst-case measures.
    pub temperature: Option<f64>,
    /// Raise f0 mid-run: (iteration, new f0) pairs, ascending.
    pub f0_schedule: Vec<(usize, f64)>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            f0: 1.0 - 1e-6,
            alpha: 5.0,
            beta: 0.5,
            max_iters: 200,
            tol: 1e-10,
            ridge: 1e-10,
            bracket_growth: 10.0,
            temperature: None,
            f0_schedule: Vec::new(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0 < 1.0) {
            return Err(Error::Invalid(format!("threshold must lie in (0,1), got {}", self.f0)));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Invalid(format!("weight must be positive, got {}", self.alpha)));
        }
        if !(self.beta > 0.0) {
            return Err(Error::Invalid(format!("step cap must be positive, got {}", self.beta)));
        }
        if !(self.bracket_growth > 1.0) {
            return Err(Error::Invalid(format!(
                "bracket growth must exceed 1, got {}",
                self.bracket_growth
            )));
        }
        for &(_, f0) in &self.f0_schedule {
            if !(f0 > 0.0 && f0 < 1.0) {
                return Err(Error::Invalid(format!("scheduled threshold {f0} outside (0,1)")));
            }
        }
        Ok(())
    }

    fn f0_at(&self, iter: usize) -> f64 {
        let mut f0 = self.f0;
        for &(start, value) in &self.f0_schedule {
            if iter >= start {
                f0 = value;
            }
        }
        f0
    }
}

/// One synthesis iteration as recorded in the trace.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iter: usize,
    pub stage: u8,
    pub f_nom: f64,
    pub j_rbst: f64,
    pub step_norm: f64,
    /// Dual variable (Stage 2 only).
    pub lambda: Option<f64>,
    /// Dual value (Stage 2 only).
    pub gamma: Option<f64>,
}

/// Full per-iteration history of a run.
#[derive(Debug, Clone, Default)]
pub struct OptimizationTrace {
    pub rows: Vec<TraceRow>,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// |ΔJ| below tolerance over the stall window.
    Converged,
    /// Iteration budget exhausted.
    MaxIters,
    /// A step could not make progress (line search or dual retry exhausted).
    Stalled,
}

/// Result of [`run_two_stage`].
#[derive(Debug, Clone)]
pub struct SynthesisOutcome {
    pub v: ControlVector,
    pub f_nom: f64,
    pub j_rbst: f64,
    pub trace: OptimizationTrace,
    pub stop: StopReason,
    /// First Stage-2 iteration and the control entering it — the
    /// threshold-only baseline that robustness improvements are judged
    /// against. `None` if the threshold was never reached.
    pub switch: Option<(usize, ControlVector)>,
}

/// Solution of the Stage-2 dual subproblem.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub lambda: f64,
    pub gamma: f64,
    pub step: Array1<f64>,
}

/// λ-dependent pieces of the dual: M(λ) = I − λ∇²F + α∇²J and
/// q(λ) = α∇J − λ∇F.
struct DualPieces<'a> {
    hess_f: &'a Array2<f64>,
    hess_j: &'a Array2<f64>,
    grad_f: &'a Array1<f64>,
    grad_j: &'a Array1<f64>,
    alpha: f64,
    slack: f64, // F_nom − f0 ≥ 0
    ridge: f64,
}

impl DualPieces<'_> {
    fn m_of(&self, lambda: f64) -> Array2<f64> {
        let d = self.grad_f.len();
        let mut m = Array2::eye(d);
        m.scaled_add(-lambda, self.hess_f);
        m.scaled_add(self.alpha, self.hess_j);
        m
    }

    fn q_of(&self, lambda: f64) -> Array1<f64> {
        let mut q = self.grad_j.mapv(|x| x * self.alpha);
        q.scaled_add(-lambda, self.grad_f);
        q
    }

    /// (γ(λ), ṽ(λ)) if M(λ) ⪰ ridge·I, else None.
    fn evaluate(&self, lambda: f64) -> Result<Option<(f64, Array1<f64>)>> {
        let m = self.m_of(lambda);
        let herm = m.mapv(|x| c(x, 0.0));
        let eig = HermEig::new(&herm.view())?;
        if eig.vals.iter().any(|&w| w < self.ridge) {
            return Ok(None);
        }
        let q = self.q_of(lambda);
        // ṽ = −M⁻¹q through the eigendecomposition (M is symmetric PD here)
        let qv: Array1<C64> = q.mapv(|x| c(x, 0.0));
        let proj = crate::linalg::dagger(&eig.vecs.view()).dot(&qv);
        let scaled = Array1::from_shape_fn(proj.len(), |i| proj[i] / c(eig.vals[i], 0.0));
        let step_c = eig.vecs.dot(&scaled);
        let step = step_c.mapv(|z| -z.re);
        let quad: f64 = q.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
        // γ = −2λ(F−f0) − qᵀM⁻¹q, and qᵀM⁻¹q = −qᵀṽ
        let gamma = -2.0 * lambda * self.slack + quad;
        Ok(Some((gamma, step)))
    }
}

/// Maximize the dual function γ(λ) over {λ ≥ 0 : M(λ) ⪰ εI}.
///
/// γ is concave on that interval, so a bracket (grown geometrically, with a
/// bisection onto the feasibility boundary when curvature cuts it short)
/// plus golden-section search finds the maximizer to high accuracy.
pub fn solve_dual(
    grad_f: &Array1<f64>,
    hess_f: &Array2<f64>,
    grad_j: &Array1<f64>,
    hess_j: &Array2<f64>,
    f_nom: f64,
    f0: f64,
    alpha: f64,
    ridge: f64,
    bracket_growth: f64,
) -> Result<DualSolution> {
    let d = grad_f.len();
    for x in grad_f.iter().chain(grad_j.iter()) {
        if !x.is_finite() {
            return Err(Error::Invalid("non-finite gradient entry".into()));
        }
    }
    if hess_f.dim() != (d, d) || hess_j.dim() != (d, d) {
        return Err(Error::DimMismatch(format!(
            "hessian shapes {:?}, {:?} for dimension {}",
            hess_f.dim(),
            hess_j.dim(),
            d
        )));
    }
    let pieces = DualPieces {
        hess_f,
        hess_j,
        grad_f,
        grad_j,
        alpha,
        slack: f_nom - f0,
        ridge,
    };

    let at_zero = pieces.evaluate(0.0)?.ok_or_else(|| {
        Error::DualInfeasible(format!(
            "I + α∇²J is not positive definite at the ridge {ridge:.1e}"
        ))
    })?;
    let mut best = (0.0f64, at_zero.clone());

    // three-point bracket by geometric growth: stop once γ decreases (the
    // maximizer then lies within the last two growth steps) or the
    // feasibility boundary cuts the interval (the feasible set is an
    // interval, so bisection pins its right edge).
    let mut prev2 = 0.0f64;
    let mut prev = 0.0f64;
    let mut prev_gamma = at_zero.0;
    let mut hi = 1.0f64;
    let mut right = prev;
    for _ in 0..200 {
        match pieces.evaluate(hi)? {
            Some((gamma, pack_step)) => {
                if gamma > best.1 .0 {
                    best = (hi, (gamma, pack_step));
                }
                if gamma < prev_gamma {
                    right = hi;
                    break;
                }
                prev2 = prev;
                prev = hi;
                prev_gamma = gamma;
                if hi > 1e12 {
                    right = hi; // γ keeps climbing: settle for a huge multiplier
                    break;
                }
                hi *= bracket_growth;
            }
            None => {
                let mut bad = hi;
                let mut good = prev;
                for _ in 0..200 {
                    let mid = 0.5 * (good + bad);
                    if pieces.evaluate(mid)?.is_some() {
                        good = mid;
                    } else {
                        bad = mid;
                    }
                    if (bad - good) <= 1e-12 * bad.max(1.0) {
                        break;
                    }
                }
                right = good;
                break;
            }
        }
    }

    // golden-section maximization on [prev2, right]; γ is concave, hence
    // unimodal, on the (convex) feasible interval
    let (mut a, mut b) = (prev2.min(right), right);
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = pieces.evaluate(x1)?.map(|p| p.0).unwrap_or(f64::NEG_INFINITY);
    let mut f2 = pieces.evaluate(x2)?.map(|p| p.0).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..200 {
        if (b - a) <= 1e-10 * b.abs().max(1.0) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = pieces.evaluate(x2)?.map(|p| p.0).unwrap_or(f64::NEG_INFINITY);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = pieces.evaluate(x1)?.map(|p| p.0).unwrap_or(f64::NEG_INFINITY);
        }
    }
    for lam in [0.5 * (a + b), right] {
        if let Some(pack) = pieces.evaluate(lam)? {
            if pack.0 > best.1 .0 {
                best = (lam, pack);
            }
        }
    }

    let (lambda, (gamma, step)) = best;
    Ok(DualSolution {
        lambda,
        gamma,
        step,
    })
}

/// Project a raw amplitude update into the problem's box and rebuild the
/// control vector.
fn clipped(problem: &ControlProblem, mut amps: Array1<f64>) -> Result<ControlVector> {
    problem.clip_amplitudes(&mut amps);
    ControlVector::new(problem, amps)
}

/// Clamp the eigenvalues of a symmetric matrix from below (modified-Newton
/// safeguard: finite-difference Hessians of nonsmooth measures can carry
/// negative curvature that would make the λ = 0 dual matrix indefinite).
fn eigen_floor(h: &Array2<f64>, floor: f64) -> Result<Array2<f64>> {
    use ndarray_linalg::{Eigh, UPLO};
    let (vals, vecs) = h.clone().eigh(UPLO::Lower)?;
    if vals.iter().all(|&w| w >= floor) {
        return Ok(h.clone());
    }
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.axis_iter_mut(ndarray::Axis(1)).enumerate() {
        let w = vals[j].max(floor);
        col.mapv_inplace(|x| x * w);
    }
    Ok(scaled.dot(&vecs.t()))
}

fn fidelity_of(problem: &ControlProblem, v: &ControlVector) -> Result<f64> {
    nominal_fidelity(&propagate_nominal(problem, v)?, problem.target())
}

/// One Stage-1 ascent step: projected gradient with backtracking on 1−F,
/// step capped at ‖ṽ‖₂ ≤ β. Returns the new point and the step norm taken
/// (zero means the line search stalled or the gradient vanished).
pub fn stage1_step(
    problem: &ControlProblem,
    v: &ControlVector,
    config: &OptimizerConfig,
) -> Result<(ControlVector, f64)> {
    let f_here = fidelity_of(problem, v)?;
    let grad = crate::differentiation::fidelity_gradient(problem, v)?;
    let gnorm = grad.dot(&grad).sqrt();
    if gnorm <= 1e-14 {
        // below machine noise: stationary for all practical purposes
        return Ok((v.clone(), 0.0));
    }
    let try_at = |scale: f64| -> Result<(ControlVector, f64)> {
        let trial = clipped(problem, v.as_array() + &grad.mapv(|g| g * scale))?;
        let f = fidelity_of(problem, &trial)?;
        Ok((trial, f))
    };
    // backtrack from the plain gradient step (capped at β) to the first
    // improving step, then keep halving while that still helps (cheap 1-D
    // refinement: F along the ray is smooth and the accepted point only has
    // to beat its neighbors). Starting from s=1 rather than the cap keeps
    // the ascent inside the basin it started in; a normalized-direction
    // start of length β wanders to far-away optima once the gradient gets
    // small, which defeats the point of a threshold stage.
    let mut scale = (config.beta / gnorm).min(1.0);
    let mut accepted: Option<(ControlVector, f64)> = None;
    for _ in 0..60 {
        let (trial, f_trial) = try_at(scale)?;
        match &accepted {
            None if f_trial > f_here => accepted = Some((trial, f_trial)),
            None => {}
            Some((_, f_best)) if f_trial > *f_best => accepted = Some((trial, f_trial)),
            Some(_) => break,
        }
        scale *= 0.5;
        if scale * gnorm < 1e-14 {
            break;
        }
    }
    match accepted {
        Some((trial, _)) => {
            let step = trial.as_array() - v.as_array();
            Ok((trial, step.dot(&step).sqrt()))
        }
        None => Ok((v.clone(), 0.0)),
    }
}

/// One Stage-2 descent step: quadratic models → dual solve → damped update.
/// If the true fidelity at v+ṽ falls below f0 − slack (slack = 10·(1−f0)),
/// the step is halved, up to ten times.
pub fn stage2_step(
    problem: &ControlProblem,
    v: &ControlVector,
    objective: &RobustnessObjective,
    config: &OptimizerConfig,
    f0: f64,
) -> Result<(ControlVector, DualSolution)> {
    let fq = fidelity_quadratic(problem, v)?;
    let jq = robustness_quadratic(problem, v, objective, config.temperature)?;
    // keep I + α∇²J comfortably positive definite so λ = 0 is always
    // dual-feasible; the post-step fidelity check still guards the iterate
    let hess_j = eigen_floor(&jq.hessian, -0.5 / config.alpha)?;
    let dual = solve_dual(
        &fq.gradient,
        &fq.hessian,
        &jq.gradient,
        &hess_j,
        fq.value,
        f0,
        config.alpha,
        config.ridge,
        config.bracket_growth,
    )?;
    let slack = 10.0 * (1.0 - f0);
    let mut shrink = 1.0;
    for _ in 0..10 {
        let trial_amps = v.as_array() + &dual.step.mapv(|s| s * shrink);
        let trial = clipped(problem, trial_amps)?;
        if fidelity_of(problem, &trial)? >= f0 - slack {
            let taken = DualSolution {
                lambda: dual.lambda,
                gamma: dual.gamma,
                step: dual.step.mapv(|s| s * shrink),
            };
            return Ok((trial, taken));
        }
        shrink *= 0.5;
    }
    // retries exhausted: stay put, report a zero step
    Ok((
        v.clone(),
        DualSolution {
            lambda: dual.lambda,
            gamma: dual.gamma,
            step: Array1::zeros(v.len()),
        },
    ))
}

/// Run the full two-stage synthesis from `v_init`.
pub fn run_two_stage(
    problem: &ControlProblem,
    objective: &RobustnessObjective,
    config: &OptimizerConfig,
    v_init: &ControlVector,
) -> Result<SynthesisOutcome> {
    run_two_stage_observed(problem, objective, config, v_init, &mut |_| {})
}

/// [`run_two_stage`] with a progress hook: `observer` sees each trace row the
/// moment it is recorded, so a caller can stream the history to disk instead
/// of waiting for the run to finish.
pub fn run_two_stage_observed(
    problem: &ControlProblem,
    objective: &RobustnessObjective,
    config: &OptimizerConfig,
    v_init: &ControlVector,
    observer: &mut dyn FnMut(&TraceRow),
) -> Result<SynthesisOutcome> {
    config.validate()?;
    objective.validate(problem)?;
    let mut v = v_init.clone();
    let mut trace = OptimizationTrace::default();
    let mut recent_j: Vec<f64> = Vec::new();
    let mut stop = StopReason::MaxIters;
    let mut switch: Option<(usize, ControlVector)> = None;

    for iter in 0..config.max_iters {
        let f0 = config.f0_at(iter);
        let f_nom = fidelity_of(problem, &v)?;
        let in_stage1 = f_nom < f0;
        if !in_stage1 && switch.is_none() {
            switch = Some((iter, v.clone()));
        }
        let (next, step_norm, lambda, gamma) = if in_stage1 {
            let (next, step_norm) = stage1_step(problem, &v, config)?;
            (next, step_norm, None, None)
        } else {
            let (next, dual) = stage2_step(problem, &v, objective, config, f0)?;
            let norm = dual.step.dot(&dual.step).sqrt();
            (next, norm, Some(dual.lambda), Some(dual.gamma))
        };
        let j_rbst = objective.value(problem, &next)?;
        trace.rows.push(TraceRow {
            iter,
            stage: if in_stage1 { 1 } else { 2 },
            f_nom,
            j_rbst,
            step_norm,
            lambda,
            gamma,
        });
        observer(trace.rows.last().unwrap());
        let stalled = step_norm == 0.0;
        v = next;

        if in_stage1 {
            recent_j.clear();
            if stalled {
                stop = StopReason::Stalled;
                break;
            }
            continue;
        }
        if stalled {
            stop = StopReason::Stalled;
            break;
        }
        recent_j.push(j_rbst);
        if recent_j.len() > 10 {
            recent_j.remove(0);
            let spread = recent_j.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - recent_j.iter().cloned().fold(f64::INFINITY, f64::min);
            if spread < config.tol {
                stop = StopReason::Converged;
                break;
            }
        }
    }

    let f_nom = fidelity_of(problem, &v)?;
    let j_rbst = objective.value(problem, &v)?;
    Ok(SynthesisOutcome {
        v,
        f_nom,
        j_rbst,
        trace,
        stop,
        switch,
    })
}
