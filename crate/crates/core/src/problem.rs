//! Problem data shared by every other module: drift and control Hamiltonians,
//! target gate, horizon, the pulse/averaging grids, and the piecewise-constant
//! control layout.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, check_unitary};

/// Relative tolerance for Hermiticity / unitarity of problem matrices;
/// validated once on construction and trusted afterwards.
pub const MATRIX_TOL: f64 = 1e-12;

/// A control synthesis problem: evolve under
/// H(t) = H0 + Σ_j v_{tj} H_j with piecewise-constant amplitudes held over N
/// pulse intervals of length T/N, aiming for the target gate W at time T.
/// All time-resolved quantities (propagators, averaged operators, noise
/// samples) live on a finer grid of M samples of length T/M, with M a
/// multiple of N so pulse boundaries fall on grid points.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    drift: Array2<C64>,
    controls: Vec<Array2<C64>>,
    target: Array2<C64>,
    t_total: f64,
    pulses: usize,
    samples: usize,
    bounds: Option<(f64, f64)>,
    actuator: Option<Array1<f64>>,
}

impl ControlProblem {
    pub fn new(
        drift: Array2<C64>,
        controls: Vec<Array2<C64>>,
        target: Array2<C64>,
        t_total: f64,
        pulses: usize,
        samples: usize,
    ) -> Result<Self> {
        let n = drift.nrows();
        if n == 0 {
            return Err(Error::Invalid("zero-dimensional drift".into()));
        }
        check_hermitian(&drift.view(), MATRIX_TOL)?;
        for (j, h) in controls.iter().enumerate() {
            if h.dim() != (n, n) {
                return Err(Error::DimMismatch(format!(
                    "control {} is {}×{}, drift is {}×{}",
                    j,
                    h.nrows(),
                    h.ncols(),
                    n,
                    n
                )));
            }
            check_hermitian(&h.view(), MATRIX_TOL)?;
        }
        if target.dim() != (n, n) {
            return Err(Error::DimMismatch(format!(
                "target is {}×{}, expected {}×{}",
                target.nrows(),
                target.ncols(),
                n,
                n
            )));
        }
        check_unitary(&target.view(), MATRIX_TOL)?;
        if !t_total.is_finite() || t_total <= 0.0 {
            return Err(Error::Invalid(format!("horizon must be positive, got {t_total}")));
        }
        if pulses == 0 {
            return Err(Error::Invalid("need at least one pulse".into()));
        }
        if samples == 0 || samples % pulses != 0 {
            return Err(Error::GridMismatch {
                m: samples,
                n: pulses,
            });
        }
        Ok(ControlProblem {
            drift,
            controls,
            target,
            t_total,
            pulses,
            samples,
            bounds: None,
            actuator: None,
        })
    }

    /// Restrict every pulse amplitude to [lo, hi].
    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::Invalid(format!("bad amplitude bounds [{lo}, {hi}]")));
        }
        self.bounds = Some((lo, hi));
        Ok(self)
    }

    /// Model an imperfect actuator: commanded amplitudes are convolved with
    /// this impulse response (sampled on the T/M grid, causal) before they
    /// enter the Hamiltonian.
    pub fn with_actuator(mut self, impulse: Array1<f64>) -> Result<Self> {
        if impulse.len() != self.samples {
            return Err(Error::GridMismatch {
                m: impulse.len(),
                n: self.samples,
            });
        }
        if impulse.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite actuator impulse".into()));
        }
        self.actuator = Some(impulse);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    /// Number of control Hamiltonians m.
    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    /// Pulse count N.
    pub fn pulses(&self) -> usize {
        self.pulses
    }

    /// Averaging-grid sample count M.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn t_total(&self) -> f64 {
        self.t_total
    }

    /// Sample duration T/M.
    pub fn dt(&self) -> f64 {
        self.t_total / self.samples as f64
    }

    /// Samples per pulse, M/N.
    pub fn substeps(&self) -> usize {
        self.samples / self.pulses
    }

    pub fn drift(&self) -> &Array2<C64> {
        &self.drift
    }

    pub fn controls(&self) -> &[Array2<C64>] {
        &self.controls
    }

    pub fn target(&self) -> &Array2<C64> {
        &self.target
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }

    pub fn actuator(&self) -> Option<&Array1<f64>> {
        self.actuator.as_ref()
    }

    /// Pulse index holding over sample `s` (both 0-based, s < M).
    pub fn pulse_of_sample(&self, s: usize) -> usize {
        s / self.substeps()
    }

    /// Zero-order hold of the commanded pulse amplitudes onto the sample
    /// grid (M×m), before any actuator dynamics.
    pub fn held_amplitudes(&self, v: &ControlVector) -> Array2<f64> {
        let m = self.num_controls();
        let mut amps = Array2::zeros((self.samples, m));
        for s in 0..self.samples {
            let p = self.pulse_of_sample(s);
            for j in 0..m {
                amps[[s, j]] = v.amplitude(p, j);
            }
        }
        amps
    }

    /// Amplitudes that actually enter the Hamiltonian: the held commands,
    /// convolved with the actuator impulse response when one is modeled.
    pub fn sample_amplitudes(&self, v: &ControlVector) -> Array2<f64> {
        let m = self.num_controls();
        let amps = self.held_amplitudes(v);
        match &self.actuator {
            None => amps,
            Some(d) => {
                let mut filtered = Array2::zeros((self.samples, m));
                for s in 0..self.samples {
                    for tau in 0..=s {
                        let w = d[s - tau];
                        if w != 0.0 {
                            for j in 0..m {
                                filtered[[s, j]] += w * amps[[tau, j]];
                            }
                        }
                    }
                }
                filtered
            }
        }
    }

    /// Adjoint of [`sample_amplitudes`](Self::sample_amplitudes): fold an M×m
    /// per-sample gradient back onto the mN pulse amplitudes (correlate with
    /// the actuator impulse, then sum each pulse's sub-steps).
    pub fn accumulate_to_pulses(&self, grid: &ArrayView2<f64>) -> Array1<f64> {
        let m = self.num_controls();
        let back = match &self.actuator {
            None => grid.to_owned(),
            Some(d) => {
                let mut adj = Array2::zeros((self.samples, m));
                for tau in 0..self.samples {
                    for s in tau..self.samples {
                        let w = d[s - tau];
                        if w != 0.0 {
                            for j in 0..m {
                                adj[[tau, j]] += w * grid[[s, j]];
                            }
                        }
                    }
                }
                adj
            }
        };
        let mut out = Array1::zeros(m * self.pulses);
        for s in 0..self.samples {
            let p = self.pulse_of_sample(s);
            for j in 0..m {
                out[p * m + j] += back[[s, j]];
            }
        }
        out
    }

    /// Clip raw amplitudes into the bounds box (no-op without bounds).
    pub fn clip_amplitudes(&self, raw: &mut Array1<f64>) {
        if let Some((lo, hi)) = self.bounds {
            raw.mapv_inplace(|x| x.clamp(lo, hi));
        }
    }
}

/// Pulse amplitudes v_{tj}, stored pulse-major: entry `t*m + j` is the
/// amplitude of control j during pulse t.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlVector {
    amps: Array1<f64>,
    num_controls: usize,
}

impl ControlVector {
    pub fn new(problem: &ControlProblem, amps: Array1<f64>) -> Result<Self> {
        let expect = problem.num_controls() * problem.pulses();
        if amps.len() != expect {
            return Err(Error::DimMismatch(format!(
                "control vector has {} entries, problem needs {}",
                amps.len(),
                expect
            )));
        }
        if amps.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite pulse amplitude".into()));
        }
        if let Some((lo, hi)) = problem.bounds() {
            // small grace for round-off on clipped steps
            let slack = 1e-9 * (hi - lo).max(1.0);
            if amps.iter().any(|&x| x < lo - slack || x > hi + slack) {
                return Err(Error::Invalid(format!(
                    "pulse amplitude outside bounds [{lo}, {hi}]"
                )));
            }
        }
        Ok(ControlVector {
            amps,
            num_controls: problem.num_controls(),
        })
    }

    /// All pulses of all controls set to one value.
    pub fn constant(problem: &ControlProblem, value: f64) -> Result<Self> {
        let len = problem.num_controls() * problem.pulses();
        ControlVector::new(problem, Array1::from_elem(len, value))
    }

    /// Like [`new`](Self::new) but without the bounds check: derivative
    /// probes step slightly outside the box on purpose.
    pub(crate) fn new_unbounded(problem: &ControlProblem, amps: Array1<f64>) -> Result<Self> {
        let expect = problem.num_controls() * problem.pulses();
        if amps.len() != expect {
            return Err(Error::DimMismatch(format!(
                "control vector has {} entries, problem needs {}",
                amps.len(),
                expect
            )));
        }
        if amps.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite pulse amplitude".into()));
        }
        Ok(ControlVector {
            amps,
            num_controls: problem.num_controls(),
        })
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    /// Amplitude of control `j` during pulse `t`.
    pub fn amplitude(&self, t: usize, j: usize) -> f64 {
        self.amps[t * self.num_controls + j]
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.amps
    }

    pub fn into_array(self) -> Array1<f64> {
        self.amps
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::pauli;
    use ndarray::array;

    fn two_level(pulses: usize, samples: usize) -> ControlProblem {
        ControlProblem::new(
            pauli::sigma_z(),
            vec![pauli::sigma_x()],
            pauli::identity2(),
            1.0,
            pulses,
            samples,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_inputs() {
        let nonherm = array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]];
        assert!(ControlProblem::new(
            nonherm.clone(),
            vec![],
            pauli::identity2(),
            1.0,
            1,
            1
        )
        .is_err());
        assert!(ControlProblem::new(
            pauli::sigma_z(),
            vec![nonherm],
            pauli::identity2(),
            1.0,
            1,
            1
        )
        .is_err());
        // non-unitary target
        assert!(ControlProblem::new(
            pauli::sigma_z(),
            vec![],
            pauli::sigma_z().mapv(|z| z * 2.0),
            1.0,
            1,
            1
        )
        .is_err());
        // M not a multiple of N
        assert!(
            ControlProblem::new(pauli::sigma_z(), vec![], pauli::identity2(), 1.0, 3, 7).is_err()
        );
        assert!(
            ControlProblem::new(pauli::sigma_z(), vec![], pauli::identity2(), -1.0, 1, 1).is_err()
        );
    }

    #[test]
    fn sample_pulse_mapping() {
        let p = two_level(5, 50);
        assert_eq!(p.substeps(), 10);
        assert_eq!(p.pulse_of_sample(0), 0);
        assert_eq!(p.pulse_of_sample(9), 0);
        assert_eq!(p.pulse_of_sample(10), 1);
        assert_eq!(p.pulse_of_sample(49), 4);
    }

    #[test]
    fn zero_order_hold_and_adjoint_agree() {
        let p = two_level(2, 6);
        let v = ControlVector::new(&p, array![1.0, -2.0]).unwrap();
        let grid = p.sample_amplitudes(&v);
        assert_eq!(grid.shape(), &[6, 1]);
        assert_eq!(grid.column(0).to_vec(), vec![1.0, 1.0, 1.0, -2.0, -2.0, -2.0]);

        // ⟨Z v, g⟩ = ⟨v, Zᵀ g⟩ for a handful of deterministic g
        let g = Array2::from_shape_fn((6, 1), |(s, _)| (s as f64 + 1.0) * 0.5);
        let lhs: f64 = grid.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let folded = p.accumulate_to_pulses(&g.view());
        let rhs: f64 = v.as_array().iter().zip(folded.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn actuator_convolution_and_adjoint() {
        let impulse = array![0.5, 0.25, 0.125, 0.0625];
        let p = two_level(2, 4).with_actuator(impulse.clone()).unwrap();
        let v = ControlVector::new(&p, array![1.0, 3.0]).unwrap();
        let grid = p.sample_amplitudes(&v);
        // direct convolution of the held commands [1,1,3,3]
        let held = [1.0, 1.0, 3.0, 3.0];
        for s in 0..4 {
            let want: f64 = (0..=s).map(|t| impulse[s - t] * held[t]).sum();
            assert!((grid[[s, 0]] - want).abs() < 1e-15);
        }
        let g = Array2::from_shape_fn((4, 1), |(s, _)| 1.0 / (s as f64 + 2.0));
        let lhs: f64 = grid.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let folded = p.accumulate_to_pulses(&g.view());
        let rhs: f64 = v.as_array().iter().zip(folded.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn control_vector_validation() {
        let p = two_level(2, 4).with_bounds(-1.0, 1.0).unwrap();
        assert!(ControlVector::new(&p, array![0.5, -0.5]).is_ok());
        assert!(ControlVector::new(&p, array![0.5]).is_err());
        assert!(ControlVector::new(&p, array![0.5, 1.5]).is_err());
        assert!(ControlVector::new(&p, array![f64::NAN, 0.0]).is_err());

        let mut raw = array![2.0, -3.0];
        p.clip_amplitudes(&mut raw);
        assert_eq!(raw, array![1.0, -1.0]);
    }
}
