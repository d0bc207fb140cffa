//! Uncertainty-set descriptions and the robustness measures built from them.
//!
//! Every supported uncertainty class reduces, given a nominal trajectory, to
//! an assembly (𝒜, S, μ, δ) with measure J = δ‖𝒜S‖_μ, where the columns of 𝒜
//! are vectorized time-averaged conjugated operators and S shapes how the
//! uncertain parameters enter. The same descriptions double as seeded
//! samplers producing concrete perturbation realizations for evaluation.

use ndarray::{s, Array1, Array2, Axis};
use num_complex::Complex64 as C64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    c, check_hermitian, dagger, fro_norm, kron, max_abs_diff, max_row_sum, psd_sqrt,
    spectral_norm, vec_col,
};
use crate::problem::{ControlProblem, ControlVector, MATRIX_TOL};
use crate::propagation::{propagate_nominal, Trajectory};

/// Matrix norm applied to 𝒜S.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Max absolute row sum (complex modulus entries): worst-case peak.
    Inf,
    /// Largest singular value: worst case over Euclidean-bounded parameters.
    Two,
    /// Frobenius norm: root-mean-square over stochastic parameters.
    Fro,
    /// Squared Frobenius norm: expected squared magnitude under a covariance.
    FroSq,
}

/// How the measures of several assemblies merge into one objective value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Combine {
    /// J = Σ_i J_i.
    Sum,
    /// J = max_i J_i (worst uncertainty channel dominates).
    Max,
    /// Stack the parts into one matrix: 𝒜 = [𝒜_1 … 𝒜_k],
    /// S = blkdiag(δ_1 S_1, …, δ_k S_k), one norm over the whole thing.
    /// All parts must share the same norm kind.
    Concat,
}

/// The linear-sensitivity summary of one uncertainty class at a given
/// trajectory: J = delta·‖A·S‖_mu.
#[derive(Debug, Clone)]
pub struct RobustnessAssembly {
    a: Array2<C64>,
    s: Array2<C64>,
    mu: NormKind,
    delta: f64,
}

impl RobustnessAssembly {
    pub fn new(a: Array2<C64>, s: Array2<C64>, mu: NormKind, delta: f64) -> Result<Self> {
        if a.ncols() != s.nrows() {
            return Err(Error::DimMismatch(format!(
                "assembly has {} columns but shaping matrix has {} rows",
                a.ncols(),
                s.nrows()
            )));
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::Invalid(format!("bound must be nonnegative, got {delta}")));
        }
        Ok(RobustnessAssembly { a, s, mu, delta })
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.a
    }

    pub fn shaping(&self) -> &Array2<C64> {
        &self.s
    }

    pub fn norm_kind(&self) -> NormKind {
        self.mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::Invalid(format!("bound must be nonnegative, got {delta}")));
        }
        self.delta = delta;
        Ok(self)
    }

    /// Swap the norm tag (e.g. fro ↔ fro_sq, which differ only in squaring).
    pub fn with_norm(mut self, mu: NormKind) -> Self {
        self.mu = mu;
        self
    }

    /// J = delta·‖A·S‖_mu.
    pub fn measure(&self) -> Result<f64> {
        let shaped = self.a.dot(&self.s);
        let norm = match self.mu {
            NormKind::Inf => max_row_sum(&shaped.view()),
            NormKind::Two => spectral_norm(&shaped.view())?,
            NormKind::Fro => fro_norm(&shaped.view()),
            NormKind::FroSq => {
                let f = fro_norm(&shaped.view());
                f * f
            }
        };
        Ok(self.delta * norm)
    }

    /// Differentiable surrogate for the `Inf` measure: the max over row sums
    /// is replaced by a log-sum-exp with the given temperature (an upper
    /// bound that tightens as the temperature shrinks). Other norms are
    /// returned unchanged.
    pub fn measure_smoothed(&self, temperature: f64) -> Result<f64> {
        if self.mu != NormKind::Inf {
            return self.measure();
        }
        if temperature <= 0.0 {
            return Err(Error::Invalid(format!(
                "smoothing temperature must be positive, got {temperature}"
            )));
        }
        let shaped = self.a.dot(&self.s);
        let rows: Vec<f64> = shaped
            .axis_iter(Axis(0))
            .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
            .collect();
        let top = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !top.is_finite() {
            return Ok(0.0); // empty assembly
        }
        let lse = top
            + temperature
                * rows
                    .iter()
                    .map(|r| ((r - top) / temperature).exp())
                    .sum::<f64>()
                    .ln();
        Ok(self.delta * lse)
    }
}

/// Merge assemblies per [`Combine::Concat`]: per-part deltas fold into the
/// block-diagonal shaping matrix and the merged delta is 1.
pub fn concat_assemblies(parts: &[RobustnessAssembly]) -> Result<RobustnessAssembly> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Invalid("nothing to concatenate".into()))?;
    let mu = first.mu;
    let rows = first.a.nrows();
    let k_total: usize = parts.iter().map(|p| p.a.ncols()).sum();
    let p_total: usize = parts.iter().map(|p| p.s.ncols()).sum();
    let mut a = Array2::zeros((rows, k_total));
    let mut s_mat = Array2::zeros((k_total, p_total));
    let (mut col_a, mut row_s, mut col_s) = (0, 0, 0);
    for part in parts {
        if part.mu != mu {
            return Err(Error::Invalid(
                "cannot concatenate assemblies with different norms".into(),
            ));
        }
        if part.a.nrows() != rows {
            return Err(Error::DimMismatch(format!(
                "assembly row counts differ: {} vs {}",
                part.a.nrows(),
                rows
            )));
        }
        a.slice_mut(s![.., col_a..col_a + part.a.ncols()]).assign(&part.a);
        s_mat
            .slice_mut(s![
                row_s..row_s + part.s.nrows(),
                col_s..col_s + part.s.ncols()
            ])
            .assign(&part.s.mapv(|z| z * part.delta));
        col_a += part.a.ncols();
        row_s += part.s.nrows();
        col_s += part.s.ncols();
    }
    RobustnessAssembly::new(a, s_mat, mu, 1.0)
}

/// Fold several assembly measures into one scalar.
pub fn combined_measure(assemblies: &[RobustnessAssembly], combine: Combine) -> Result<f64> {
    combined_measure_smoothed(assemblies, combine, None)
}

/// As [`combined_measure`], optionally smoothing every `Inf` part.
pub fn combined_measure_smoothed(
    assemblies: &[RobustnessAssembly],
    combine: Combine,
    temperature: Option<f64>,
) -> Result<f64> {
    let one = |a: &RobustnessAssembly| match temperature {
        Some(tau) => a.measure_smoothed(tau),
        None => a.measure(),
    };
    match combine {
        Combine::Sum => assemblies.iter().map(one).sum(),
        Combine::Max => {
            let mut best = 0.0f64;
            for a in assemblies {
                best = best.max(one(a)?);
            }
            Ok(best)
        }
        Combine::Concat => {
            if assemblies.is_empty() {
                return Ok(0.0);
            }
            one(&concat_assemblies(assemblies)?)
        }
    }
}

/// Causal noise-shaping matrix: θ = 𝒦w with 𝒦 lower-triangular M×M
/// (Toeplitz exactly when the underlying filter is LTI).
#[derive(Debug, Clone)]
pub struct NoiseFilter {
    k: Array2<f64>,
    toeplitz: bool,
}

impl NoiseFilter {
    pub fn new(k: Array2<f64>) -> Result<Self> {
        let m = k.nrows();
        if k.ncols() != m {
            return Err(Error::DimMismatch(format!(
                "filter must be square, got {}×{}",
                m,
                k.ncols()
            )));
        }
        for i in 0..m {
            for j in (i + 1)..m {
                if k[[i, j]] != 0.0 {
                    return Err(Error::Invalid(format!(
                        "filter is not causal: entry ({i}, {j}) above the diagonal is {}",
                        k[[i, j]]
                    )));
                }
            }
        }
        if k.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite filter entry".into()));
        }
        let toeplitz = (1..m).all(|i| {
            (0..m - i).all(|j| (k[[i + j, j]] - k[[i, 0]]).abs() == 0.0)
        }) && (0..m).all(|j| k[[j, j]] == k[[0, 0]]);
        Ok(NoiseFilter { k, toeplitz })
    }

    pub fn size(&self) -> usize {
        self.k.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn is_toeplitz(&self) -> bool {
        self.toeplitz
    }

    /// θ = 𝒦w.
    pub fn apply(&self, w: &Array1<f64>) -> Array1<f64> {
        self.k.dot(w)
    }
}

/// Lower-triangular Toeplitz matrix whose first column is the impulse
/// response `h`.
pub fn toeplitz_from_impulse(h: &Array1<f64>) -> Result<NoiseFilter> {
    let m = h.len();
    let mut k = Array2::zeros((m, m));
    for j in 0..m {
        for i in j..m {
            k[[i, j]] = h[i - j];
        }
    }
    NoiseFilter::new(k)
}

/// Zero-order-hold discretization of the first-order low-pass 1/(βs+1) at
/// sample time T/M: lower-triangular Toeplitz with first column
/// (1−a)·[1, a, a², …], a = exp(−(T/M)/β).
pub fn first_order_filter(beta: f64, t_total: f64, samples: usize) -> Result<NoiseFilter> {
    if !(beta > 0.0) {
        return Err(Error::Invalid(format!("time constant must be positive, got {beta}")));
    }
    let a = (-(t_total / samples as f64) / beta).exp();
    let h = Array1::from_shape_fn(samples, |i| (1.0 - a) * a.powi(i as i32));
    toeplitz_from_impulse(&h)
}

/// Spectral-magnitude profile of the first-order filter's output at angular
/// frequency ω: (1−a)/√(2(1−cos(ωT/M)) + a²).
pub fn first_order_spectral_bound(beta: f64, t_total: f64, samples: usize, omega: f64) -> f64 {
    let tau = t_total / samples as f64;
    let a = (-tau / beta).exp();
    (1.0 - a) / (2.0 * (1.0 - (omega * tau).cos()) + a * a).sqrt()
}

/// A time-indexed operator sequence B_t on the sample grid.
#[derive(Debug, Clone)]
pub enum OpSequence {
    /// Same operator at every sample.
    Constant(Array2<C64>),
    /// One operator per sample (length M).
    PerSample(Vec<Array2<C64>>),
}

impl OpSequence {
    /// Operator at sample t (0-based).
    pub fn op(&self, t: usize) -> &Array2<C64> {
        match self {
            OpSequence::Constant(b) => b,
            OpSequence::PerSample(seq) => &seq[t],
        }
    }

    fn validate(&self, n: usize, samples: usize) -> Result<()> {
        let check = |b: &Array2<C64>| -> Result<()> {
            if b.dim() != (n, n) {
                return Err(Error::DimMismatch(format!(
                    "uncertainty operator is {}×{}, expected {}×{}",
                    b.nrows(),
                    b.ncols(),
                    n,
                    n
                )));
            }
            check_hermitian(&b.view(), MATRIX_TOL)
        };
        match self {
            OpSequence::Constant(b) => check(b),
            OpSequence::PerSample(seq) => {
                if seq.len() != samples {
                    return Err(Error::GridMismatch {
                        m: seq.len(),
                        n: samples,
                    });
                }
                seq.iter().try_for_each(|b| check(b))
            }
        }
    }

    fn max_spectral_norm(&self, samples: usize) -> Result<f64> {
        let mut top = 0.0f64;
        match self {
            OpSequence::Constant(b) => top = spectral_norm(&b.view())?,
            OpSequence::PerSample(seq) => {
                for b in seq.iter().take(samples) {
                    top = top.max(spectral_norm(&b.view())?);
                }
            }
        }
        Ok(top)
    }
}

/// Bound style for constant uncertain parameters.
#[derive(Debug, Clone)]
pub enum ParamBound {
    /// ‖θ‖∞ ≤ δ: every parameter independently bounded.
    Peak(f64),
    /// ‖θ‖₂ ≤ δ: joint Euclidean budget.
    Energy(f64),
    /// cov θ = C: zero-mean stochastic parameters.
    Covariance(Array2<f64>),
}

impl ParamBound {
    fn design_bound(&self) -> f64 {
        match self {
            ParamBound::Peak(d) | ParamBound::Energy(d) => *d,
            ParamBound::Covariance(_) => 1.0,
        }
    }
}

/// Interval-constant noise flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PwcKind {
    /// Each interval's level bounded by δ in magnitude (worst case).
    DeterministicInf,
    /// Each interval's level zero-mean with std δ (mean square).
    Probabilistic,
}

/// Temporal structure of a scalar noise process on the sample grid.
#[derive(Debug, Clone)]
pub enum NoiseDynamics {
    /// Constant over L uniform blocks.
    Intervals { count: usize, kind: PwcKind },
    /// Filtered white noise θ = 𝒦w, w iid with per-sample std δ.
    Filter(NoiseFilter),
}

/// One tensor factor of a cross-coupled pair, expressed relative to the
/// joint problem: which joint controls drive it and what the local operators
/// are.
#[derive(Debug, Clone)]
pub struct Subsystem {
    pub drift: Array2<C64>,
    /// (joint control index, local control Hamiltonian).
    pub controls: Vec<(usize, Array2<C64>)>,
    /// Local constant uncertainty operators.
    pub ops: Vec<Array2<C64>>,
    pub delta: f64,
}

/// Declarative description of one uncertainty class attached to a problem.
#[derive(Debug, Clone)]
pub enum UncertaintySpec {
    /// H̃_t = Σ_ℓ θ_ℓ B_{ℓt} with constant θ.
    ConstantParam { ops: Vec<OpSequence>, bound: ParamBound },
    /// Constant H̃ with ‖H̃‖_F ≤ δ, expanded in an orthonormal basis.
    EnergyBounded { basis: Vec<Array2<C64>>, delta: f64 },
    /// Per-run linear ramp θ_{ℓt} from a_ℓ to b_ℓ, |a_ℓ|,|b_ℓ| ≤ δ_ℓ.
    BiasDrift { ops: Vec<OpSequence>, deltas: Vec<f64> },
    /// H̃_t = θ_t B_t with θ = 𝒦w, w white with per-sample std δ.
    TimeVarying {
        ops: OpSequence,
        filter: NoiseFilter,
        delta: f64,
    },
    /// H̃_t = θ_t B_t with θ constant on each of L uniform intervals.
    PwcNoise {
        ops: OpSequence,
        intervals: usize,
        delta: f64,
        kind: PwcKind,
    },
    /// Additive noise on one control channel: H̃_t = θ_t H_j.
    AdditiveCtrl {
        control: usize,
        dynamics: NoiseDynamics,
        delta: f64,
    },
    /// Multiplicative control noise H̃_t = θ_t Σ_k v̄_{t,j_k} P_k: one scalar
    /// process scaling a control-weighted operator combination. A single
    /// channel (j, H_j) is plain per-control multiplicative noise.
    MultiplicativeCtrl {
        channels: Vec<(usize, Array2<C64>)>,
        dynamics: NoiseDynamics,
        delta: f64,
    },
    /// LTI actuator with relative model error: commanded pulses pass through
    /// D(z) = (1 + Δ(z)Q(z))·D̄(z), ‖Δ‖_H∞ ≤ δ, ‖Q‖_H∞ = 1.
    Actuator { weight_impulse: Array1<f64>, delta: f64 },
    /// Two tensor-factor channels with local constant parameters plus a
    /// constant interaction term on the joint space.
    CrossCoupling {
        sub1: Subsystem,
        sub2: Subsystem,
        interaction: Vec<Array2<C64>>,
        interaction_delta: f64,
        combine: Combine,
    },
}

impl UncertaintySpec {
    /// The δ the measure is built with; samplers scale realization bounds
    /// proportionally to `magnitude / design_bound()`.
    pub fn design_bound(&self) -> f64 {
        match self {
            UncertaintySpec::ConstantParam { bound, .. } => bound.design_bound(),
            UncertaintySpec::EnergyBounded { delta, .. }
            | UncertaintySpec::TimeVarying { delta, .. }
            | UncertaintySpec::PwcNoise { delta, .. }
            | UncertaintySpec::AdditiveCtrl { delta, .. }
            | UncertaintySpec::MultiplicativeCtrl { delta, .. }
            | UncertaintySpec::Actuator { delta, .. } => *delta,
            UncertaintySpec::BiasDrift { deltas, .. } => {
                deltas.iter().cloned().fold(0.0, f64::max)
            }
            UncertaintySpec::CrossCoupling {
                sub1,
                sub2,
                interaction_delta,
                ..
            } => sub1.delta.max(sub2.delta).max(*interaction_delta),
        }
    }

    /// Validate against the problem. Hard violations error; soft ones (like
    /// operators above unit norm, which only skew the measure's scale) come
    /// back as warnings for the caller to surface or escalate.
    pub fn validate(&self, problem: &ControlProblem) -> Result<Vec<String>> {
        let n = problem.dim();
        let m_samples = problem.samples();
        let mut warnings = Vec::new();
        let mut warn_unnormalized = |seq: &OpSequence, what: &str| -> Result<()> {
            let top = seq.max_spectral_norm(m_samples)?;
            if top > 1.0 + 1e-9 {
                warnings.push(format!(
                    "{what} has spectral norm {top:.3e} > 1; bounds assume unit-normalized operators"
                ));
            }
            Ok(())
        };
        match self {
            UncertaintySpec::ConstantParam { ops, bound } => {
                if ops.is_empty() {
                    return Err(Error::Invalid("constant-parameter set has no operators".into()));
                }
                for (l, seq) in ops.iter().enumerate() {
                    seq.validate(n, m_samples)?;
                    warn_unnormalized(seq, &format!("parameter {l} operator"))?;
                }
                match bound {
                    ParamBound::Peak(d) | ParamBound::Energy(d) => {
                        if !d.is_finite() || *d < 0.0 {
                            return Err(Error::Invalid(format!("bad parameter bound {d}")));
                        }
                    }
                    ParamBound::Covariance(c_mat) => {
                        if c_mat.dim() != (ops.len(), ops.len()) {
                            return Err(Error::DimMismatch(format!(
                                "covariance is {}×{} for {} parameters",
                                c_mat.nrows(),
                                c_mat.ncols(),
                                ops.len()
                            )));
                        }
                        psd_sqrt(c_mat, 1e-12)?;
                    }
                }
            }
            UncertaintySpec::EnergyBounded { basis, delta } => {
                if basis.len() != n * n {
                    return Err(Error::DimMismatch(format!(
                        "energy-bounded basis has {} elements, need n² = {}",
                        basis.len(),
                        n * n
                    )));
                }
                for b in basis {
                    OpSequence::Constant(b.clone()).validate(n, m_samples)?;
                }
                // the stacked vec'd basis must be unitary
                let mut stack = Array2::zeros((n * n, n * n));
                for (j, b) in basis.iter().enumerate() {
                    stack.index_axis_mut(Axis(1), j).assign(&vec_col(&b.view()));
                }
                crate::linalg::check_unitary(&stack.view(), 1e-10)?;
                if !delta.is_finite() || *delta < 0.0 {
                    return Err(Error::Invalid(format!("bad energy bound {delta}")));
                }
            }
            UncertaintySpec::BiasDrift { ops, deltas } => {
                if ops.is_empty() || ops.len() != deltas.len() {
                    return Err(Error::Invalid(format!(
                        "bias/drift needs matching operators and bounds, got {} and {}",
                        ops.len(),
                        deltas.len()
                    )));
                }
                if m_samples < 2 {
                    return Err(Error::Invalid(
                        "bias/drift needs at least two samples to define a ramp".into(),
                    ));
                }
                for (l, seq) in ops.iter().enumerate() {
                    seq.validate(n, m_samples)?;
                    warn_unnormalized(seq, &format!("parameter {l} operator"))?;
                    if !deltas[l].is_finite() || deltas[l] < 0.0 {
                        return Err(Error::Invalid(format!("bad drift bound {}", deltas[l])));
                    }
                }
            }
            UncertaintySpec::TimeVarying { ops, filter, delta } => {
                ops.validate(n, m_samples)?;
                warn_unnormalized(ops, "noise operator")?;
                if filter.size() != m_samples {
                    return Err(Error::GridMismatch {
                        m: filter.size(),
                        n: m_samples,
                    });
                }
                if !delta.is_finite() || *delta < 0.0 {
                    return Err(Error::Invalid(format!("bad noise power {delta}")));
                }
            }
            UncertaintySpec::PwcNoise {
                ops,
                intervals,
                delta,
                ..
            } => {
                ops.validate(n, m_samples)?;
                warn_unnormalized(ops, "noise operator")?;
                if *intervals == 0 || m_samples % intervals != 0 {
                    return Err(Error::GridMismatch {
                        m: m_samples,
                        n: *intervals,
                    });
                }
                if !delta.is_finite() || *delta < 0.0 {
                    return Err(Error::Invalid(format!("bad noise bound {delta}")));
                }
            }
            UncertaintySpec::AdditiveCtrl {
                control,
                dynamics,
                delta,
            } => {
                if *control >= problem.num_controls() {
                    return Err(Error::Invalid(format!(
                        "control index {control} out of range ({} controls)",
                        problem.num_controls()
                    )));
                }
                validate_dynamics(dynamics, m_samples)?;
                if !delta.is_finite() || *delta < 0.0 {
                    return Err(Error::Invalid(format!("bad noise bound {delta}")));
                }
            }
            UncertaintySpec::MultiplicativeCtrl {
                channels,
                dynamics,
                delta,
            } => {
                if channels.is_empty() {
                    return Err(Error::Invalid("multiplicative noise has no channels".into()));
                }
                for (j, op) in channels {
                    if *j >= problem.num_controls() {
                        return Err(Error::Invalid(format!(
                            "control index {j} out of range ({} controls)",
                            problem.num_controls()
                        )));
                    }
                    OpSequence::Constant(op.clone()).validate(n, m_samples)?;
                }
                validate_dynamics(dynamics, m_samples)?;
                if !delta.is_finite() || *delta < 0.0 {
                    return Err(Error::Invalid(format!("bad noise bound {delta}")));
                }
            }
            UncertaintySpec::Actuator {
                weight_impulse,
                delta,
            } => {
                if weight_impulse.len() != m_samples {
                    return Err(Error::GridMismatch {
                        m: weight_impulse.len(),
                        n: m_samples,
                    });
                }
                if weight_impulse.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Invalid("non-finite weight impulse".into()));
                }
                if !delta.is_finite() || *delta < 0.0 {
                    return Err(Error::Invalid(format!("bad model-error bound {delta}")));
                }
            }
            UncertaintySpec::CrossCoupling {
                sub1,
                sub2,
                interaction,
                interaction_delta,
                combine,
            } => {
                if *combine == Combine::Concat {
                    return Err(Error::Invalid(
                        "cross-coupling combines by sum or max, not concat".into(),
                    ));
                }
                let n1 = sub1.drift.nrows();
                let n2 = sub2.drift.nrows();
                if n1 * n2 != n {
                    return Err(Error::DimMismatch(format!(
                        "subsystem dimensions {n1}×{n2} do not factor the joint dimension {n}"
                    )));
                }
                check_hermitian(&sub1.drift.view(), MATRIX_TOL)?;
                check_hermitian(&sub2.drift.view(), MATRIX_TOL)?;
                // the joint problem must really be the tensor pair
                let expect =
                    kron(&sub1.drift, &crate::linalg::identity(n2))
                        + kron(&crate::linalg::identity(n1), &sub2.drift);
                if max_abs_diff(&problem.drift().view(), &expect.view()) > 1e-10 {
                    return Err(Error::Invalid(
                        "joint drift is not drift₁⊗I + I⊗drift₂".into(),
                    ));
                }
                for (side, sub, other_dim) in [(1, sub1, n2), (2, sub2, n1)] {
                    for (idx, h) in &sub.controls {
                        if *idx >= problem.num_controls() {
                            return Err(Error::Invalid(format!(
                                "control index {idx} out of range"
                            )));
                        }
                        check_hermitian(&h.view(), MATRIX_TOL)?;
                        let lifted = if side == 1 {
                            kron(h, &crate::linalg::identity(other_dim))
                        } else {
                            kron(&crate::linalg::identity(other_dim), h)
                        };
                        if max_abs_diff(&problem.controls()[*idx].view(), &lifted.view()) > 1e-10
                        {
                            return Err(Error::Invalid(format!(
                                "joint control {idx} is not the lift of the subsystem-{side} Hamiltonian"
                            )));
                        }
                    }
                    for b in &sub.ops {
                        if b.nrows() != sub.drift.nrows() {
                            return Err(Error::DimMismatch(format!(
                                "local operator dimension {} does not match subsystem {}",
                                b.nrows(),
                                sub.drift.nrows()
                            )));
                        }
                        check_hermitian(&b.view(), MATRIX_TOL)?;
                    }
                    if !sub.delta.is_finite() || sub.delta < 0.0 {
                        return Err(Error::Invalid(format!("bad local bound {}", sub.delta)));
                    }
                }
                for b in interaction {
                    OpSequence::Constant(b.clone()).validate(n, m_samples)?;
                }
                if !interaction_delta.is_finite() || *interaction_delta < 0.0 {
                    return Err(Error::Invalid(format!(
                        "bad interaction bound {interaction_delta}"
                    )));
                }
            }
        }
        Ok(warnings)
    }
}

fn validate_dynamics(dynamics: &NoiseDynamics, samples: usize) -> Result<()> {
    match dynamics {
        NoiseDynamics::Intervals { count, .. } => {
            if *count == 0 || samples % count != 0 {
                return Err(Error::GridMismatch {
                    m: samples,
                    n: *count,
                });
            }
            Ok(())
        }
        NoiseDynamics::Filter(f) => {
            if f.size() != samples {
                return Err(Error::GridMismatch {
                    m: f.size(),
                    n: samples,
                });
            }
            Ok(())
        }
    }
}

/// One column per sample: w_t·vec(Ū_t†B_tŪ_t)/M for t = 1..M.
fn per_sample_columns(
    traj: &Trajectory,
    seq: &OpSequence,
    weight: Option<&[f64]>,
) -> Array2<C64> {
    let n = traj.dim();
    let m = traj.samples();
    let mut a = Array2::zeros((n * n, m));
    for t in 0..m {
        let u = traj.unitary(t + 1);
        let conj = dagger(&u.view()).dot(seq.op(t)).dot(u);
        let w = weight.map_or(1.0, |w| w[t]) / m as f64;
        a.index_axis_mut(Axis(1), t)
            .assign(&vec_col(&conj.view()).mapv(|z| z * w));
    }
    a
}

/// Single averaged column (1/M)Σ_t vec(Ū_t†B_tŪ_t).
fn averaged_column(traj: &Trajectory, seq: &OpSequence) -> Array1<C64> {
    let n = traj.dim();
    let m = traj.samples();
    let mut acc = Array1::zeros(n * n);
    for t in 0..m {
        let u = traj.unitary(t + 1);
        let conj = dagger(&u.view()).dot(seq.op(t)).dot(u);
        acc += &vec_col(&conj.view());
    }
    acc.mapv(|z| z / c(m as f64, 0.0))
}

/// Block-diagonal of L ones-vectors of length M/L (the interval-summing map).
fn interval_shaping(samples: usize, intervals: usize) -> Array2<C64> {
    let block = samples / intervals;
    let mut s_mat = Array2::zeros((samples, intervals));
    for l in 0..intervals {
        for i in 0..block {
            s_mat[[l * block + i, l]] = c(1.0, 0.0);
        }
    }
    s_mat
}

/// Constant uncertain parameters: 𝒜 columns are the per-parameter averaged
/// operators; the bound style picks the norm and shaping.
pub fn assemble_constant_param(
    traj: &Trajectory,
    ops: &[OpSequence],
    bound: &ParamBound,
) -> Result<RobustnessAssembly> {
    let n = traj.dim();
    let l_params = ops.len();
    let mut a = Array2::zeros((n * n, l_params));
    for (l, seq) in ops.iter().enumerate() {
        a.index_axis_mut(Axis(1), l).assign(&averaged_column(traj, seq));
    }
    match bound {
        ParamBound::Peak(delta) => {
            RobustnessAssembly::new(a, Array2::eye(l_params), NormKind::Inf, *delta)
        }
        ParamBound::Energy(delta) => {
            RobustnessAssembly::new(a, Array2::eye(l_params), NormKind::Two, *delta)
        }
        ParamBound::Covariance(c_mat) => {
            let root = psd_sqrt(c_mat, 1e-12)?;
            RobustnessAssembly::new(a, root.mapv(|x| c(x, 0.0)), NormKind::FroSq, 1.0)
        }
    }
}

/// Energy-bounded constant Hamiltonian expanded in an orthonormal basis:
/// 𝒜 is n²×n², S = I, μ = 2.
pub fn assemble_energy_bounded(
    traj: &Trajectory,
    basis: &[Array2<C64>],
    delta: f64,
) -> Result<RobustnessAssembly> {
    let n = traj.dim();
    if basis.len() != n * n {
        return Err(Error::DimMismatch(format!(
            "basis has {} elements, need n² = {}",
            basis.len(),
            n * n
        )));
    }
    let mut a = Array2::zeros((n * n, n * n));
    for (i, b) in basis.iter().enumerate() {
        a.index_axis_mut(Axis(1), i)
            .assign(&averaged_column(traj, &OpSequence::Constant(b.clone())));
    }
    RobustnessAssembly::new(a, Array2::eye(n * n), NormKind::Two, delta)
}

/// Per-run bias plus linear drift: each parameter contributes an n²×2
/// assembly pairing the ramp weights h_t = [M−t, t−1]/(M−1).
pub fn assemble_bias_drift(
    traj: &Trajectory,
    ops: &[OpSequence],
    deltas: &[f64],
) -> Result<Vec<RobustnessAssembly>> {
    let n = traj.dim();
    let m = traj.samples();
    if m < 2 {
        return Err(Error::Invalid(
            "bias/drift needs at least two samples to define a ramp".into(),
        ));
    }
    if ops.len() != deltas.len() {
        return Err(Error::DimMismatch(format!(
            "{} operator sequences but {} bounds",
            ops.len(),
            deltas.len()
        )));
    }
    let denom = (m - 1) as f64;
    let mut out = Vec::with_capacity(ops.len());
    for (seq, &delta) in ops.iter().zip(deltas) {
        let mut a = Array2::<C64>::zeros((n * n, 2));
        for t in 0..m {
            let u = traj.unitary(t + 1);
            let conj = dagger(&u.view()).dot(seq.op(t)).dot(u);
            let col = vec_col(&conj.view()).mapv(|z| z / c(m as f64, 0.0));
            let h = [(m - 1 - t) as f64 / denom, t as f64 / denom];
            for (k, &hk) in h.iter().enumerate() {
                if hk != 0.0 {
                    let mut dst = a.index_axis_mut(Axis(1), k);
                    dst += &col.mapv(|z| z * hk);
                }
            }
        }
        out.push(RobustnessAssembly::new(
            a,
            Array2::eye(2),
            NormKind::Inf,
            delta,
        )?);
    }
    Ok(out)
}

/// Filtered time-varying parameter: 𝒜 has one column per sample (optionally
/// weighted, e.g. by nominal control amplitudes for multiplicative noise),
/// S = 𝒦, μ = fro. The noise power belongs in `with_delta`.
pub fn assemble_time_varying(
    traj: &Trajectory,
    ops: &OpSequence,
    filter: &NoiseFilter,
    weight: Option<&[f64]>,
) -> Result<RobustnessAssembly> {
    if filter.size() != traj.samples() {
        return Err(Error::GridMismatch {
            m: filter.size(),
            n: traj.samples(),
        });
    }
    if let Some(w) = weight {
        if w.len() != traj.samples() {
            return Err(Error::GridMismatch {
                m: w.len(),
                n: traj.samples(),
            });
        }
    }
    let a = per_sample_columns(traj, ops, weight);
    let s_mat = filter.matrix().mapv(|x| c(x, 0.0));
    RobustnessAssembly::new(a, s_mat, NormKind::Fro, 1.0)
}

/// Interval-constant noise: per-sample columns, S sums each of the L blocks,
/// norm per the deterministic/probabilistic kind.
pub fn assemble_pwc_noise(
    traj: &Trajectory,
    ops: &OpSequence,
    intervals: usize,
    delta: f64,
    kind: PwcKind,
) -> Result<RobustnessAssembly> {
    let m = traj.samples();
    if intervals == 0 || m % intervals != 0 {
        return Err(Error::GridMismatch {
            m,
            n: intervals,
        });
    }
    let a = per_sample_columns(traj, ops, None);
    let s_mat = interval_shaping(m, intervals);
    let mu = match kind {
        PwcKind::DeterministicInf => NormKind::Inf,
        PwcKind::Probabilistic => NormKind::Fro,
    };
    RobustnessAssembly::new(a, s_mat, mu, delta)
}

/// Uncertain actuator dynamics: per control j a spectral-norm assembly on
/// the conjugated control Hamiltonian, scaled by S_j = ‖𝒯(Q·D̄)·v̄_j‖₂
/// (folded into the bound).
pub fn assemble_actuator(
    traj: &Trajectory,
    control_hams: &[Array2<C64>],
    held: &Array2<f64>,
    nominal_impulse: &Array1<f64>,
    weight_impulse: &Array1<f64>,
    delta: f64,
) -> Result<Vec<RobustnessAssembly>> {
    let m = traj.samples();
    if held.nrows() != m || held.ncols() != control_hams.len() {
        return Err(Error::DimMismatch(format!(
            "held commands are {}×{}, expected {}×{}",
            held.nrows(),
            held.ncols(),
            m,
            control_hams.len()
        )));
    }
    if nominal_impulse.len() != m || weight_impulse.len() != m {
        return Err(Error::GridMismatch {
            m: nominal_impulse.len().min(weight_impulse.len()),
            n: m,
        });
    }
    // impulse response of Q(z)·D̄(z): convolution truncated to the window
    let mut qd = Array1::zeros(m);
    for i in 0..m {
        for j in 0..=i {
            qd[i] += weight_impulse[j] * nominal_impulse[i - j];
        }
    }
    let filt = toeplitz_from_impulse(&qd)?;
    let mut out = Vec::with_capacity(control_hams.len());
    for (j, h) in control_hams.iter().enumerate() {
        let a = per_sample_columns(traj, &OpSequence::Constant(h.clone()), None);
        let s_j = filt.apply(&held.column(j).to_owned()).mapv(|x| x * x).sum().sqrt();
        out.push(RobustnessAssembly::new(
            a,
            Array2::eye(m),
            NormKind::Two,
            delta * s_j,
        )?);
    }
    Ok(out)
}

/// Cross-coupled pair: one local assembly per subsystem plus an interaction
/// assembly conjugated by Ū⁽¹⁾⊗Ū⁽²⁾, combined by max (worst channel) or sum.
pub fn assemble_cross_coupling(
    traj1: &Trajectory,
    traj2: &Trajectory,
    local1: (&[Array2<C64>], f64),
    local2: (&[Array2<C64>], f64),
    interaction: (&[Array2<C64>], f64),
    combine: Combine,
) -> Result<(Vec<RobustnessAssembly>, Combine)> {
    if traj1.samples() != traj2.samples() {
        return Err(Error::GridMismatch {
            m: traj1.samples(),
            n: traj2.samples(),
        });
    }
    let mut parts = Vec::new();
    for (traj, (ops, delta)) in [(traj1, local1), (traj2, local2)] {
        let seqs: Vec<OpSequence> = ops.iter().cloned().map(OpSequence::Constant).collect();
        if !seqs.is_empty() {
            parts.push(assemble_constant_param(traj, &seqs, &ParamBound::Peak(delta))?);
        }
    }
    let (int_ops, int_delta) = interaction;
    if !int_ops.is_empty() {
        let joint: Vec<Array2<C64>> = (0..=traj1.samples())
            .map(|t| kron(traj1.unitary(t), traj2.unitary(t)))
            .collect();
        let joint_traj = Trajectory::new(joint)?;
        let seqs: Vec<OpSequence> = int_ops.iter().cloned().map(OpSequence::Constant).collect();
        parts.push(assemble_constant_param(
            &joint_traj,
            &seqs,
            &ParamBound::Peak(int_delta),
        )?);
    }
    Ok((parts, combine))
}

/// Extract one tensor factor's problem and controls from the joint problem.
fn subsystem_problem(
    problem: &ControlProblem,
    v: &ControlVector,
    sub: &Subsystem,
) -> Result<(ControlProblem, ControlVector)> {
    let hams: Vec<Array2<C64>> = sub.controls.iter().map(|(_, h)| h.clone()).collect();
    let p = ControlProblem::new(
        sub.drift.clone(),
        hams,
        crate::linalg::identity(sub.drift.nrows()),
        problem.t_total(),
        problem.pulses(),
        problem.samples(),
    )?;
    let mut amps = Array1::zeros(sub.controls.len() * problem.pulses());
    for t in 0..problem.pulses() {
        for (k, (idx, _)) in sub.controls.iter().enumerate() {
            amps[t * sub.controls.len() + k] = v.amplitude(t, *idx);
        }
    }
    let sv = ControlVector::new(&p, amps)?;
    Ok((p, sv))
}

/// Assemblies for one spec at the given trajectory, with the combine rule
/// that applies *within* the spec (sum unless the spec says otherwise).
pub fn spec_assemblies(
    problem: &ControlProblem,
    v: &ControlVector,
    traj: &Trajectory,
    spec: &UncertaintySpec,
) -> Result<(Vec<RobustnessAssembly>, Combine)> {
    match spec {
        UncertaintySpec::ConstantParam { ops, bound } => Ok((
            vec![assemble_constant_param(traj, ops, bound)?],
            Combine::Sum,
        )),
        UncertaintySpec::EnergyBounded { basis, delta } => Ok((
            vec![assemble_energy_bounded(traj, basis, *delta)?],
            Combine::Sum,
        )),
        UncertaintySpec::BiasDrift { ops, deltas } => {
            Ok((assemble_bias_drift(traj, ops, deltas)?, Combine::Sum))
        }
        UncertaintySpec::TimeVarying { ops, filter, delta } => Ok((
            vec![assemble_time_varying(traj, ops, filter, None)?.with_delta(*delta)?],
            Combine::Sum,
        )),
        UncertaintySpec::PwcNoise {
            ops,
            intervals,
            delta,
            kind,
        } => Ok((
            vec![assemble_pwc_noise(traj, ops, *intervals, *delta, *kind)?],
            Combine::Sum,
        )),
        UncertaintySpec::AdditiveCtrl {
            control,
            dynamics,
            delta,
        } => {
            let seq = OpSequence::Constant(problem.controls()[*control].clone());
            Ok((
                vec![assemble_for_dynamics(traj, &seq, dynamics, *delta)?],
                Combine::Sum,
            ))
        }
        UncertaintySpec::MultiplicativeCtrl {
            channels,
            dynamics,
            delta,
        } => {
            let amps = problem.sample_amplitudes(v);
            let seq = control_weighted_sequence(problem, &amps, channels);
            Ok((
                vec![assemble_for_dynamics(traj, &seq, dynamics, *delta)?],
                Combine::Sum,
            ))
        }
        UncertaintySpec::Actuator {
            weight_impulse,
            delta,
        } => {
            let held = problem.held_amplitudes(v);
            let unit = Array1::from_shape_fn(problem.samples(), |i| (i == 0) as u8 as f64);
            let nominal = problem.actuator().cloned().unwrap_or(unit);
            Ok((
                assemble_actuator(
                    traj,
                    problem.controls(),
                    &held,
                    &nominal,
                    weight_impulse,
                    *delta,
                )?,
                Combine::Sum,
            ))
        }
        UncertaintySpec::CrossCoupling {
            sub1,
            sub2,
            interaction,
            interaction_delta,
            combine,
        } => {
            let (p1, v1) = subsystem_problem(problem, v, sub1)?;
            let (p2, v2) = subsystem_problem(problem, v, sub2)?;
            let t1 = propagate_nominal(&p1, &v1)?;
            let t2 = propagate_nominal(&p2, &v2)?;
            assemble_cross_coupling(
                &t1,
                &t2,
                (&sub1.ops, sub1.delta),
                (&sub2.ops, sub2.delta),
                (interaction, *interaction_delta),
                *combine,
            )
        }
    }
}

/// H̃_t = θ_t·Σ_k v̄_{t,j_k}·P_k as a per-sample operator sequence.
fn control_weighted_sequence(
    _problem: &ControlProblem,
    amps: &Array2<f64>,
    channels: &[(usize, Array2<C64>)],
) -> OpSequence {
    let m = amps.nrows();
    let n = channels[0].1.nrows();
    let mut seq = Vec::with_capacity(m);
    for t in 0..m {
        let mut b = Array2::<C64>::zeros((n, n));
        for (j, op) in channels {
            b.scaled_add(c(amps[[t, *j]], 0.0), op);
        }
        seq.push(b);
    }
    OpSequence::PerSample(seq)
}

fn assemble_for_dynamics(
    traj: &Trajectory,
    seq: &OpSequence,
    dynamics: &NoiseDynamics,
    delta: f64,
) -> Result<RobustnessAssembly> {
    match dynamics {
        NoiseDynamics::Intervals { count, kind } => {
            assemble_pwc_noise(traj, seq, *count, delta, *kind)
        }
        NoiseDynamics::Filter(filter) => {
            assemble_time_varying(traj, seq, filter, None)?.with_delta(delta)
        }
    }
}

/// Flatten every spec's assemblies (inner combining discarded; mainly for
/// inspection and tests).
pub fn build_assemblies(
    problem: &ControlProblem,
    v: &ControlVector,
    traj: &Trajectory,
    specs: &[UncertaintySpec],
) -> Result<Vec<RobustnessAssembly>> {
    let mut out = Vec::new();
    for spec in specs {
        out.extend(spec_assemblies(problem, v, traj, spec)?.0);
    }
    Ok(out)
}

/// The full robustness objective: a list of uncertainty specs and how their
/// measures merge.
#[derive(Debug, Clone)]
pub struct RobustnessObjective {
    pub specs: Vec<UncertaintySpec>,
    pub combine: Combine,
}

impl RobustnessObjective {
    pub fn new(specs: Vec<UncertaintySpec>, combine: Combine) -> Self {
        RobustnessObjective { specs, combine }
    }

    /// J_rbst(v).
    pub fn value(&self, problem: &ControlProblem, v: &ControlVector) -> Result<f64> {
        let traj = propagate_nominal(problem, v)?;
        self.value_with_traj(problem, v, &traj, None)
    }

    /// J_rbst(v) with the `Inf` parts smoothed (derivative surrogate).
    pub fn value_smoothed(
        &self,
        problem: &ControlProblem,
        v: &ControlVector,
        temperature: f64,
    ) -> Result<f64> {
        let traj = propagate_nominal(problem, v)?;
        self.value_with_traj(problem, v, &traj, Some(temperature))
    }

    pub fn value_with_traj(
        &self,
        problem: &ControlProblem,
        v: &ControlVector,
        traj: &Trajectory,
        temperature: Option<f64>,
    ) -> Result<f64> {
        if self.specs.is_empty() {
            return Ok(0.0);
        }
        if self.combine == Combine::Concat {
            let mut all = Vec::new();
            for spec in &self.specs {
                all.extend(spec_assemblies(problem, v, traj, spec)?.0);
            }
            return combined_measure_smoothed(&all, Combine::Concat, temperature);
        }
        let mut parts = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            let (asms, inner) = spec_assemblies(problem, v, traj, spec)?;
            parts.push(combined_measure_smoothed(&asms, inner, temperature)?);
        }
        Ok(match self.combine {
            Combine::Sum => parts.iter().sum(),
            Combine::Max => parts.iter().cloned().fold(0.0, f64::max),
            Combine::Concat => unreachable!(),
        })
    }

    /// Validate every spec, pooling warnings.
    pub fn validate(&self, problem: &ControlProblem) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        for spec in &self.specs {
            warnings.extend(spec.validate(problem)?);
        }
        Ok(warnings)
    }
}

/// Draw one realization of the uncertainty as M Hermitian perturbation
/// samples on the problem grid. Deterministic in the seed. `magnitude`
/// replaces the spec's primary bound (it must not exceed it); secondary
/// bounds scale proportionally.
pub fn sample_perturbation(
    spec: &UncertaintySpec,
    problem: &ControlProblem,
    v: &ControlVector,
    magnitude: f64,
    seed: u64,
) -> Result<Vec<Array2<C64>>> {
    let design = spec.design_bound();
    if magnitude > design * (1.0 + 1e-9) {
        return Err(Error::Invalid(format!(
            "magnitude {magnitude} exceeds the design bound {design}"
        )));
    }
    sample_perturbation_unchecked(spec, problem, v, magnitude, seed)
}

/// Same as [`sample_perturbation`] minus the design-bound gate. Evaluation
/// sweeps deliberately probe beyond the bound (with a warning) to show the
/// degradation curve past the design point.
pub(crate) fn sample_perturbation_unchecked(
    spec: &UncertaintySpec,
    problem: &ControlProblem,
    v: &ControlVector,
    magnitude: f64,
    seed: u64,
) -> Result<Vec<Array2<C64>>> {
    if !magnitude.is_finite() || magnitude < 0.0 {
        return Err(Error::Invalid(format!("bad magnitude {magnitude}")));
    }
    let design = spec.design_bound();
    let scale = if design > 0.0 { magnitude / design } else { 0.0 };
    let n = problem.dim();
    let m = problem.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let zeros = || vec![Array2::<C64>::zeros((n, n)); m];
    let mut samples = zeros();
    let add_scaled = |samples: &mut Vec<Array2<C64>>, t: usize, w: f64, b: &Array2<C64>| {
        if w != 0.0 {
            samples[t].scaled_add(c(w, 0.0), b);
        }
    };

    match spec {
        UncertaintySpec::ConstantParam { ops, bound } => {
            let theta: Vec<f64> = match bound {
                ParamBound::Peak(_) => (0..ops.len())
                    .map(|_| rng.gen_range(-1.0..=1.0) * magnitude)
                    .collect(),
                ParamBound::Energy(_) => ball_point(&mut rng, ops.len(), magnitude),
                ParamBound::Covariance(c_mat) => {
                    let root = psd_sqrt(c_mat, 1e-12)?;
                    let z = Array1::from_shape_fn(ops.len(), |_| {
                        rng.sample::<f64, _>(StandardNormal)
                    });
                    (root.dot(&z) * magnitude).to_vec()
                }
            };
            for t in 0..m {
                for (l, seq) in ops.iter().enumerate() {
                    add_scaled(&mut samples, t, theta[l], seq.op(t));
                }
            }
        }
        UncertaintySpec::EnergyBounded { basis, .. } => {
            let theta = ball_point(&mut rng, basis.len(), magnitude);
            let mut h = Array2::<C64>::zeros((n, n));
            for (i, b) in basis.iter().enumerate() {
                h.scaled_add(c(theta[i], 0.0), b);
            }
            samples = vec![h; m];
        }
        UncertaintySpec::BiasDrift { ops, deltas } => {
            let denom = (m - 1) as f64;
            let endpoints: Vec<(f64, f64)> = deltas
                .iter()
                .map(|d| {
                    let bound = d * scale;
                    (
                        rng.gen_range(-1.0..=1.0) * bound,
                        rng.gen_range(-1.0..=1.0) * bound,
                    )
                })
                .collect();
            for t in 0..m {
                let h = [(m - 1 - t) as f64 / denom, t as f64 / denom];
                for (l, seq) in ops.iter().enumerate() {
                    let (a0, b0) = endpoints[l];
                    add_scaled(&mut samples, t, h[0] * a0 + h[1] * b0, seq.op(t));
                }
            }
        }
        UncertaintySpec::TimeVarying { ops, filter, .. } => {
            let w = Array1::from_shape_fn(m, |_| {
                rng.sample::<f64, _>(StandardNormal) * magnitude
            });
            let theta = filter.apply(&w);
            for t in 0..m {
                add_scaled(&mut samples, t, theta[t], ops.op(t));
            }
        }
        UncertaintySpec::PwcNoise {
            ops,
            intervals,
            kind,
            ..
        } => {
            let theta = interval_levels(&mut rng, *intervals, *kind, magnitude);
            let block = m / intervals;
            for t in 0..m {
                add_scaled(&mut samples, t, theta[t / block], ops.op(t));
            }
        }
        UncertaintySpec::AdditiveCtrl {
            control, dynamics, ..
        } => {
            let theta = dynamics_realization(&mut rng, dynamics, m, magnitude);
            let b = &problem.controls()[*control];
            for t in 0..m {
                add_scaled(&mut samples, t, theta[t], b);
            }
        }
        UncertaintySpec::MultiplicativeCtrl {
            channels, dynamics, ..
        } => {
            let theta = dynamics_realization(&mut rng, dynamics, m, magnitude);
            let amps = problem.sample_amplitudes(v);
            let seq = control_weighted_sequence(problem, &amps, channels);
            for t in 0..m {
                add_scaled(&mut samples, t, theta[t], seq.op(t));
            }
        }
        UncertaintySpec::Actuator { weight_impulse, .. } => {
            // in-set realization: per-control constant gain Δ_j ∈ [−δ, δ]
            let held = problem.held_amplitudes(v);
            let unit = Array1::from_shape_fn(m, |i| (i == 0) as u8 as f64);
            let nominal = problem.actuator().cloned().unwrap_or(unit);
            let mut qd = Array1::zeros(m);
            for i in 0..m {
                for j in 0..=i {
                    qd[i] += weight_impulse[j] * nominal[i - j];
                }
            }
            let filt = toeplitz_from_impulse(&qd)?;
            for (j, h) in problem.controls().iter().enumerate() {
                let gain = rng.gen_range(-1.0..=1.0) * magnitude;
                let theta = filt.apply(&held.column(j).to_owned());
                for t in 0..m {
                    add_scaled(&mut samples, t, gain * theta[t], h);
                }
            }
        }
        UncertaintySpec::CrossCoupling {
            sub1,
            sub2,
            interaction,
            interaction_delta,
            ..
        } => {
            let n2 = sub2.drift.nrows();
            let n1 = sub1.drift.nrows();
            let mut h = Array2::<C64>::zeros((n, n));
            for b in &sub1.ops {
                let theta = rng.gen_range(-1.0..=1.0) * sub1.delta * scale;
                h.scaled_add(c(theta, 0.0), &kron(b, &crate::linalg::identity(n2)));
            }
            for b in &sub2.ops {
                let theta = rng.gen_range(-1.0..=1.0) * sub2.delta * scale;
                h.scaled_add(c(theta, 0.0), &kron(&crate::linalg::identity(n1), b));
            }
            for b in interaction {
                let theta = rng.gen_range(-1.0..=1.0) * interaction_delta * scale;
                h.scaled_add(c(theta, 0.0), b);
            }
            samples = vec![h; m];
        }
    }
    Ok(samples)
}

/// Uniform point in the K-ball of the given radius.
fn ball_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.gen_range(0.0..=1.0f64).powf(1.0 / dim as f64);
    dir.into_iter().map(|x| x / norm * r).collect()
}

fn interval_levels(
    rng: &mut ChaCha8Rng,
    intervals: usize,
    kind: PwcKind,
    magnitude: f64,
) -> Vec<f64> {
    (0..intervals)
        .map(|_| match kind {
            PwcKind::DeterministicInf => rng.gen_range(-1.0..=1.0) * magnitude,
            PwcKind::Probabilistic => rng.sample::<f64, _>(StandardNormal) * magnitude,
        })
        .collect()
}

fn dynamics_realization(
    rng: &mut ChaCha8Rng,
    dynamics: &NoiseDynamics,
    samples: usize,
    magnitude: f64,
) -> Vec<f64> {
    match dynamics {
        NoiseDynamics::Intervals { count, kind } => {
            let levels = interval_levels(rng, *count, *kind, magnitude);
            let block = samples / count;
            (0..samples).map(|t| levels[t / block]).collect()
        }
        NoiseDynamics::Filter(filter) => {
            let w = Array1::from_shape_fn(samples, |_| {
                rng.sample::<f64, _>(StandardNormal) * magnitude
            });
            filter.apply(&w).to_vec()
        }
    }
}
