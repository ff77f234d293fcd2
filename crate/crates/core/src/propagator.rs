//! Exact per-mode linear flow of `d_t^2 + d_t + m - Laplacian` (and of the
//! undamped operator), plus the order-2 exponential integrator built on it.
//!
//! Every Fourier mode is an independent oscillator `x'' + x' + lambda x = F`
//! with `lambda = m + |n|^2`. Writing `omega^2 = lambda - 1/4`, the damped
//! kernel is `D(t) = e^{-t/2} sin(t omega) / omega`, continued as `sinh` when
//! `omega^2 < 0` and as `t` when `omega = 0`.

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::grid::{ActiveSet, GridSpec, Mode, PairState, SpectralField};

pub type Mat2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Oscillatory,
    Critical,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeFrequency {
    pub mode: Mode,
    pub omega_sq: f64,
    /// Principal square root of `omega_sq`.
    pub omega: Complex64,
}

/// `<<n>> = sqrt(m - 1/4 + |n|^2)`.
pub fn jbb(mode: Mode, m: f64) -> ModeFrequency {
    let mut f = ModeFrequency::from_omega_sq(m - 0.25 + mode.norm_sq() as f64);
    f.mode = mode;
    f
}

impl ModeFrequency {
    pub fn from_omega_sq(omega_sq: f64) -> Self {
        Self {
            mode: Mode::new(0, 0),
            omega_sq,
            omega: Complex64::new(omega_sq, 0.0).sqrt(),
        }
    }

    pub fn branch(&self) -> Branch {
        if self.omega_sq > 0.0 {
            Branch::Oscillatory
        } else if self.omega_sq < 0.0 {
            Branch::Hyperbolic
        } else {
            Branch::Critical
        }
    }

    /// `m + |n|^2 = omega^2 + 1/4`.
    pub fn lambda(&self) -> f64 {
        self.omega_sq + 0.25
    }

    /// `sin(t omega) / omega`, branch-continued.
    pub fn sin_ratio(&self, t: f64) -> f64 {
        match self.branch() {
            Branch::Oscillatory => {
                let w = self.omega_sq.sqrt();
                (t * w).sin() / w
            }
            Branch::Hyperbolic => {
                let k = (-self.omega_sq).sqrt();
                (t * k).sinh() / k
            }
            Branch::Critical => t,
        }
    }

    /// `cos(t omega)`, branch-continued.
    pub fn cos_t(&self, t: f64) -> f64 {
        match self.branch() {
            Branch::Oscillatory => (t * self.omega_sq.sqrt()).cos(),
            Branch::Hyperbolic => (t * (-self.omega_sq).sqrt()).cosh(),
            Branch::Critical => 1.0,
        }
    }

    /// `D(t) = e^{-t/2} sin(t omega) / omega`.
    pub fn damped_kernel(&self, t: f64) -> f64 {
        (-0.5 * t).exp() * self.sin_ratio(t)
    }

    /// `d_t D(t)`.
    pub fn damped_kernel_dt(&self, t: f64) -> f64 {
        (-0.5 * t).exp() * (self.cos_t(t) - 0.5 * self.sin_ratio(t))
    }

    /// Transition matrix of `(x, x')` for `x'' + x' + lambda x = 0`:
    /// `e^{-t/2} [[c + s/2, s], [-lambda s, c - s/2]]`.
    pub fn damped_flow(&self, t: f64) -> Mat2 {
        let e = (-0.5 * t).exp();
        let s = self.sin_ratio(t);
        let c = self.cos_t(t);
        [
            [e * (c + 0.5 * s), e * s],
            [-e * self.lambda() * s, e * (c - 0.5 * s)],
        ]
    }
}

/// Which linear part the integrator treats exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearFlow {
    /// `d_t^2 + d_t + m - Laplacian`
    Damped,
    /// `d_t^2 + m - Laplacian`
    Undamped,
}

/// The per-mode first-order system `y' = A y`, `y = (x, x')`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeOperator {
    pub lambda: f64,
    pub flow: LinearFlow,
}

impl ModeOperator {
    pub fn new(spec: &GridSpec, mode: Mode, flow: LinearFlow) -> Self {
        Self {
            lambda: spec.lambda(mode),
            flow,
        }
    }

    fn damping(&self) -> f64 {
        match self.flow {
            LinearFlow::Damped => 1.0,
            LinearFlow::Undamped => 0.0,
        }
    }

    pub fn matrix(&self) -> Mat2 {
        [[0.0, 1.0], [-self.lambda, -self.damping()]]
    }

    pub fn exp(&self, t: f64) -> Mat2 {
        match self.flow {
            LinearFlow::Damped => ModeFrequency::from_omega_sq(self.lambda - 0.25).damped_flow(t),
            LinearFlow::Undamped => {
                let w = self.lambda.sqrt();
                let (s, c) = (t * w).sin_cos();
                [[c, s / w], [-w * s, c]]
            }
        }
    }

    fn inverse(&self) -> Mat2 {
        let l = self.lambda;
        let g = self.damping();
        // det A = lambda > 0
        [[-g / l, -1.0 / l], [1.0, 0.0]]
    }

    /// Exponential-integrator weights for a step of length `h`.
    pub fn etd_weights(&self, h: f64) -> EtdWeights {
        let a = self.matrix();
        let prop = self.exp(h);
        let norm = a.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
        // phi1 = int_0^h e^{A tau} dtau, phi2 = int_0^h e^{A tau} (h - tau) dtau
        let (phi1, phi2) = if h * norm < 0.5 {
            let mut phi1 = [[0.0; 2]; 2];
            let mut phi2 = [[0.0; 2]; 2];
            let mut power = [[1.0, 0.0], [0.0, 1.0]];
            let mut fact1 = h; // h^{k+1} / (k+1)!
            let mut fact2 = h * h / 2.0; // h^{k+2} / (k+2)!
            for k in 0..40 {
                for i in 0..2 {
                    for j in 0..2 {
                        phi1[i][j] += power[i][j] * fact1;
                        phi2[i][j] += power[i][j] * fact2;
                    }
                }
                power = mat_mul(&power, &a);
                fact1 *= h / (k as f64 + 2.0);
                fact2 *= h / (k as f64 + 3.0);
            }
            (phi1, phi2)
        } else {
            let inv = self.inverse();
            let e_minus_i = [[prop[0][0] - 1.0, prop[0][1]], [prop[1][0], prop[1][1] - 1.0]];
            let phi1 = mat_mul(&inv, &e_minus_i);
            let shifted = [[phi1[0][0] - h, phi1[0][1]], [phi1[1][0], phi1[1][1] - h]];
            (phi1, mat_mul(&inv, &shifted))
        };
        EtdWeights {
            prop,
            w0: [phi1[0][1], phi1[1][1]],
            w1: [phi2[0][1] / h, phi2[1][1] / h],
        }
    }
}

pub(crate) fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Per-mode data of one exponential step: the exact propagator and the
/// Duhamel weights for forcing that is constant (`w0`) or linear (`w1`) in
/// time over the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtdWeights {
    pub prop: Mat2,
    pub w0: [f64; 2],
    pub w1: [f64; 2],
}

fn apply_mat(m: &Mat2, x: Complex64, v: Complex64) -> (Complex64, Complex64) {
    (x * m[0][0] + v * m[0][1], x * m[1][0] + v * m[1][1])
}

/// `D(t) f` mode by mode.
pub fn apply_damped_propagator(f: &SpectralField, t: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be non-negative, got {t}")));
    }
    let m = f.spec().mass();
    Ok(f.apply_multiplier(|mode| jbb(mode, m).damped_kernel(t)))
}

/// `(S(t)(f, g), d_t S(t)(f, g))` with `S(t)(f, g) = D'(t) f + D(t)(f + g)`.
pub fn apply_homogeneous_flow(state: &PairState, t: f64) -> Result<PairState> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be non-negative, got {t}")));
    }
    apply_linear_flow(state, t, LinearFlow::Damped)
}

/// Exact flow of either linear operator.
pub fn apply_linear_flow(state: &PairState, t: f64, flow: LinearFlow) -> Result<PairState> {
    let spec = *state.spec();
    let mut out = PairState::zeros(spec);
    for idx in 0..spec.len() {
        let prop = ModeOperator::new(&spec, spec.mode(idx), flow).exp(t);
        let (x, v) = apply_mat(&prop, state.pos.coeffs()[idx], state.vel.coeffs()[idx]);
        out.pos.coeffs_mut()[idx] = x;
        out.vel.coeffs_mut()[idx] = v;
    }
    Ok(out)
}

/// Second-order exponential time differencing (ETD2RK) on a fixed mode set.
///
/// A step from `y0` with forcing `F`:
/// `y* = E y0 + w0 F(y0)`, then `y1 = y* + w1 (F(y*) - F(y0))`, where `E`
/// is the exact linear propagator and the weights integrate the linear
/// interpolant of the forcing through the Duhamel formula.
#[derive(Debug, Clone)]
pub struct EtdStepper {
    spec: GridSpec,
    dt: f64,
    flow: LinearFlow,
    indices: Vec<usize>,
    weights: Vec<EtdWeights>,
}

impl EtdStepper {
    pub fn new(active: &ActiveSet, dt: f64, flow: LinearFlow) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let spec = *active.spec();
        let indices = active.indices().to_vec();
        let weights = indices
            .iter()
            .map(|&idx| ModeOperator::new(&spec, spec.mode(idx), flow).etd_weights(dt))
            .collect();
        Ok(Self {
            spec,
            dt,
            flow,
            indices,
            weights,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn flow(&self) -> LinearFlow {
        self.flow
    }

    /// Predictor: `E y0 + w0 F0`.
    pub fn predict(&self, state: &PairState, f0: &SpectralField) -> Result<PairState> {
        self.spec.check(state.spec())?;
        self.spec.check(f0.spec())?;
        let mut out = PairState::zeros(self.spec);
        for (&idx, w) in self.indices.iter().zip(&self.weights) {
            let (x, v) = apply_mat(&w.prop, state.pos.coeffs()[idx], state.vel.coeffs()[idx]);
            let f = f0.coeffs()[idx];
            out.pos.coeffs_mut()[idx] = x + f * w.w0[0];
            out.vel.coeffs_mut()[idx] = v + f * w.w0[1];
        }
        Ok(out)
    }

    /// Corrector: `y* += w1 (F1 - F0)`.
    pub fn correct(
        &self,
        predicted: &mut PairState,
        f0: &SpectralField,
        f1: &SpectralField,
    ) -> Result<()> {
        self.spec.check(f1.spec())?;
        for (&idx, w) in self.indices.iter().zip(&self.weights) {
            let df = f1.coeffs()[idx] - f0.coeffs()[idx];
            predicted.pos.coeffs_mut()[idx] += df * w.w1[0];
            predicted.vel.coeffs_mut()[idx] += df * w.w1[1];
        }
        Ok(())
    }

    /// Approximates `int_0^dt e^{A(dt - s)} (0, F(s)) ds` from the forcing at
    /// the two step endpoints.
    pub fn duhamel_increment(&self, f0: &SpectralField, f1: &SpectralField) -> Result<PairState> {
        let mut out = self.predict(&PairState::zeros(self.spec), f0)?;
        self.correct(&mut out, f0, f1)?;
        Ok(out)
    }

    /// Advances every state by one step; `rhs(stage, states)` returns the
    /// forcing per state, with `stage` 0 at the left endpoint and 1 at the
    /// right endpoint.
    pub fn step<F>(&self, states: &mut [PairState], mut rhs: F) -> Result<()>
    where
        F: FnMut(usize, &[PairState]) -> Result<Vec<SpectralField>>,
    {
        let f0 = rhs(0, states)?;
        let mut pred = states
            .iter()
            .zip(&f0)
            .map(|(s, f)| self.predict(s, f))
            .collect::<Result<Vec<_>>>()?;
        let f1 = rhs(1, &pred)?;
        for ((p, a), b) in pred.iter_mut().zip(&f0).zip(&f1) {
            self.correct(p, a, b)?;
        }
        for (s, p) in states.iter_mut().zip(pred) {
            *s = p;
        }
        Ok(())
    }
}

/// Stand-alone Duhamel increment for forcing sampled at `s = 0` and `s = dt`.
pub fn duhamel_increment(
    forcing_at_nodes: (&SpectralField, &SpectralField),
    dt: f64,
    flow: LinearFlow,
) -> Result<PairState> {
    let spec = *forcing_at_nodes.0.spec();
    let radius = (spec.n_grid() as u32) * 2;
    let active = ActiveSet::new(spec, radius, false);
    EtdStepper::new(&active, dt, flow)?.duhamel_increment(forcing_at_nodes.0, forcing_at_nodes.1)
}
