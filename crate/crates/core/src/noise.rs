//! Keyed white-noise streams, exact sampling of the stochastic convolutions
//! `Psi` (zero data) and `Phi` (stationary data), and the renormalization
//! constants `sigma_M(t)` and `alpha_M`.
//!
//! Each mode of the convolution is a damped oscillator driven by
//! `sqrt(2) dB_n`, so one step of length `h` is an exact Gaussian transition:
//! the homogeneous flow plus a mean-zero Gaussian with covariance
//! `Q_n(h) = int_0^h e^{A s} B B^T e^{A^T s} ds`, `B = (0, sqrt 2)`.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{GridSpec, Mode, PairState, SpectralField};
use crate::propagator::{jbb, Mat2, ModeFrequency};

/// Purpose tag of a random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// Space-time white noise driving a wave component.
    Forcing,
    /// Initial data drawn from `mu_1 x mu_0`.
    InitialData,
    /// Proposals and accept/reject draws of a Gibbs sampler.
    Gibbs,
    /// Velocities attached to Gibbs samples.
    Velocity,
    /// Random test fields of a diagnostic experiment.
    Trial,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Forcing => 0x5f0a,
            StreamKind::InitialData => 0x1d47,
            StreamKind::Gibbs => 0x6b85,
            StreamKind::Velocity => 0x7e10,
            StreamKind::Trial => 0x3c29,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Counter-based random stream: the draws for a given `counter` are a pure
/// function of `(root_seed, component, kind, counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseStream {
    pub root_seed: u64,
    pub component: u64,
    pub kind: StreamKind,
}

impl NoiseStream {
    pub fn new(root_seed: u64, component: u64, kind: StreamKind) -> Self {
        Self {
            root_seed,
            component,
            kind,
        }
    }

    pub fn with_kind(&self, kind: StreamKind) -> Self {
        Self { kind, ..*self }
    }

    pub fn with_component(&self, component: u64) -> Self {
        Self { component, ..*self }
    }

    pub fn rng(&self, counter: u64) -> ChaCha8Rng {
        let mut h = splitmix64(self.root_seed);
        for word in [self.component, self.kind.tag(), counter] {
            h = splitmix64(h ^ word);
        }
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_mut(8) {
            h = splitmix64(h);
            chunk.copy_from_slice(&h.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn lattice_ball(radius: u32) -> impl Iterator<Item = Mode> {
    let r = radius as i64;
    (-r..=r)
        .flat_map(move |a| (-r..=r).map(move |b| Mode::new(a, b)))
        .filter(move |m| m.within(radius))
}

/// `alpha_M = sum_{|n| <= M} 1 / (m + |n|^2)`.
pub fn alpha_m(m: f64, radius: u32) -> f64 {
    lattice_ball(radius).map(|n| 1.0 / (m + n.norm_sq() as f64)).sum()
}

const CRITICAL_EPS: f64 = 1e-10;

/// `int_0^h s^k e^{-s} ds` for k = 0, 1, 2.
fn gamma_moments(h: f64) -> [f64; 3] {
    let e = (-h).exp();
    [
        1.0 - e,
        1.0 - e * (1.0 + h),
        2.0 * (1.0 - e * (1.0 + h + 0.5 * h * h)),
    ]
}

/// Per-mode summand of `sigma_M(t)`:
/// `(1 - e^{-t}) / w^2 - 2 e^{-t} sin(2tw) / (w (1 + 4w^2))
///   - (1 - e^{-t} cos(2tw)) / (w^2 (1 + 4w^2))`.
pub fn sigma_mode(t: f64, freq: &ModeFrequency) -> f64 {
    let w2 = freq.omega_sq;
    if w2.abs() < CRITICAL_EPS {
        return 2.0 * gamma_moments(t)[2];
    }
    let e = (-t).exp();
    let d = 1.0 + 4.0 * w2;
    (1.0 - e) / w2 - 2.0 * e * freq.sin_ratio(2.0 * t) / d - (1.0 - e * freq.cos_t(2.0 * t)) / (w2 * d)
}

/// `sigma_M(t) = E[Psi_M(t, x)^2]`.
pub fn sigma_m(t: f64, m: f64, radius: u32) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("must be non-negative, got {t}")));
    }
    if !(m > 0.0) {
        return Err(invalid("m", format!("mass must be positive, got {m}")));
    }
    Ok(lattice_ball(radius).map(|n| sigma_mode(t, &jbb(n, m))).sum())
}

/// Covariance `Q(h)` of the noise increment of `(x, x')` over one step.
pub fn transition_covariance(freq: &ModeFrequency, h: f64) -> Mat2 {
    let w2 = freq.omega_sq;
    if w2.abs() < CRITICAL_EPS {
        // D = s e^{-s/2}, D' = (1 - s/2) e^{-s/2}
        let [g0, g1, g2] = gamma_moments(h);
        let q11 = 2.0 * g2;
        let q12 = 2.0 * (g1 - 0.5 * g2);
        let q22 = 2.0 * (g0 - g1 + 0.25 * g2);
        return [[q11, q12], [q12, q22]];
    }
    let w = freq.omega;
    let i = Complex64::new(0.0, 1.0);
    let g = |z: Complex64| ((z * h).exp() - 1.0) / z;
    let gp = g(Complex64::new(-1.0, 0.0) + 2.0 * i * w);
    let gm = g(Complex64::new(-1.0, 0.0) - 2.0 * i * w);
    let i0 = 1.0 - (-h).exp();
    // int e^{-s} cos(2ws) ds and int e^{-s} sin(2ws) ds / w
    let ic = (0.5 * (gp + gm)).re;
    let is_w = ((gp - gm) / (2.0 * i * w)).re;
    let one_minus_cos = (i0 - ic) / w2;
    let q11 = one_minus_cos;
    let q12 = is_w - 0.5 * one_minus_cos;
    let q22 = (i0 + ic) - is_w + 0.25 * one_minus_cos;
    [[q11, q12], [q12, q22]]
}

fn cholesky(q: &Mat2) -> Mat2 {
    let l11 = q[0][0].max(0.0).sqrt();
    let l21 = if l11 > 0.0 { q[1][0] / l11 } else { 0.0 };
    let l22 = (q[1][1] - l21 * l21).max(0.0).sqrt();
    [[l11, 0.0], [l21, l22]]
}

/// `sigma_M` on a time grid together with `alpha_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenormConstants {
    pub m: f64,
    pub radius: u32,
    pub dt: f64,
    pub schedule: Vec<f64>,
    pub alpha: f64,
}

impl RenormConstants {
    /// Tabulates `sigma_M(k dt)` for `k = 0..=steps`.
    pub fn new(m: f64, radius: u32, dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        let schedule = (0..=steps)
            .map(|k| sigma_m(k as f64 * dt, m, radius))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            m,
            radius,
            dt,
            schedule,
            alpha: alpha_m(m, radius),
        })
    }

    pub fn sigma_at_step(&self, k: usize) -> Option<f64> {
        self.schedule.get(k).copied()
    }

    /// CSV table with columns `t,sigma_M,alpha_M`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,sigma_M,alpha_M")?;
        for (k, s) in self.schedule.iter().enumerate() {
            writeln!(out, "{},{},{}", k as f64 * self.dt, s, self.alpha)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct KernelEntry {
    idx: usize,
    conj: usize,
    prop: Mat2,
    chol: Mat2,
}

/// Precomputed exact transition for all modes `|n| <= M` and a fixed step.
#[derive(Debug, Clone)]
pub struct ConvolutionKernel {
    spec: GridSpec,
    radius: u32,
    dt: f64,
    noise: bool,
    entries: Vec<KernelEntry>,
}

impl ConvolutionKernel {
    pub fn new(spec: GridSpec, radius: u32, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if radius as usize >= spec.nyquist() {
            return Err(invalid(
                "M",
                format!("truncation {radius} must stay below the Nyquist index {}", spec.nyquist()),
            ));
        }
        let entries = spec
            .half_lattice()
            .filter(|&idx| spec.mode(idx).within(radius))
            .map(|idx| {
                let freq = jbb(spec.mode(idx), spec.mass());
                KernelEntry {
                    idx,
                    conj: spec.conj_index(idx),
                    prop: freq.damped_flow(dt),
                    chol: cholesky(&transition_covariance(&freq, dt)),
                }
            })
            .collect();
        Ok(Self {
            spec,
            radius,
            dt,
            noise: true,
            entries,
        })
    }

    /// Same flow with the noise switched off: the homogeneous damped flow.
    pub fn noiseless(spec: GridSpec, radius: u32, dt: f64) -> Result<Self> {
        Ok(Self {
            noise: false,
            ..Self::new(spec, radius, dt)?
        })
    }

    pub fn has_noise(&self) -> bool {
        self.noise
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    /// Advances the convolution by one exact step.
    pub fn step(&self, state: &mut ConvolutionState) -> Result<()> {
        self.spec.check(state.pair.spec())?;
        if state.radius != self.radius {
            return Err(invalid(
                "M",
                format!("kernel truncation {} vs state {}", self.radius, state.radius),
            ));
        }
        let mut rng = state.stream.rng(state.steps);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for e in &self.entries {
            let x = state.pair.pos.coeffs()[e.idx];
            let v = state.pair.vel.coeffs()[e.idx];
            let (z1, z2) = if !self.noise {
                (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
            } else if e.idx == e.conj {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (Complex64::new(a, 0.0), Complex64::new(b, 0.0))
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let c: f64 = rng.sample(StandardNormal);
                let d: f64 = rng.sample(StandardNormal);
                (
                    Complex64::new(a, b) * inv_sqrt2,
                    Complex64::new(c, d) * inv_sqrt2,
                )
            };
            let nx = x * e.prop[0][0] + v * e.prop[0][1] + z1 * e.chol[0][0];
            let nv = x * e.prop[1][0] + v * e.prop[1][1] + z1 * e.chol[1][0] + z2 * e.chol[1][1];
            state.pair.pos.coeffs_mut()[e.idx] = nx;
            state.pair.vel.coeffs_mut()[e.idx] = nv;
            if e.conj != e.idx {
                state.pair.pos.coeffs_mut()[e.conj] = nx.conj();
                state.pair.vel.coeffs_mut()[e.conj] = nv.conj();
            }
        }
        state.time += self.dt;
        state.steps += 1;
        Ok(())
    }
}

/// `(Psi, d_t Psi)` or `(Phi, d_t Phi)` restricted to `|n| <= M`, with the
/// stream that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionState {
    pub pair: PairState,
    pub time: f64,
    pub radius: u32,
    stream: NoiseStream,
    steps: u64,
}

impl ConvolutionState {
    /// `Psi`: zero data at `t = 0`.
    pub fn zero(spec: GridSpec, radius: u32, stream: NoiseStream) -> Self {
        Self {
            pair: PairState::zeros(spec),
            time: 0.0,
            radius,
            stream,
            steps: 0,
        }
    }

    /// `Phi`: data drawn from `mu_1 x mu_0` (projected to `|n| <= M`) using
    /// the initial-data stream of the same component.
    pub fn stationary(spec: GridSpec, radius: u32, stream: NoiseStream) -> Self {
        let pair = sample_mu1_mu0_pair(spec, radius, &stream.with_kind(StreamKind::InitialData));
        Self::from_data(pair, radius, stream)
    }

    /// Convolution started from given data.
    pub fn from_data(pair: PairState, radius: u32, stream: NoiseStream) -> Self {
        Self {
            pair,
            time: 0.0,
            radius,
            stream,
            steps: 0,
        }
    }

    pub fn stream(&self) -> &NoiseStream {
        &self.stream
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }
}

/// One exact step of `Psi` (builds a kernel; use [`ConvolutionKernel`] in loops).
pub fn step_stochastic_convolution(state: &ConvolutionState, dt: f64) -> Result<ConvolutionState> {
    let kernel = ConvolutionKernel::new(*state.pair.spec(), state.radius, dt)?;
    let mut out = state.clone();
    kernel.step(&mut out)?;
    Ok(out)
}

/// One exact step of `Phi`; the transition is the same as for `Psi`.
pub fn step_stationary_convolution(state: &ConvolutionState, dt: f64) -> Result<ConvolutionState> {
    step_stochastic_convolution(state, dt)
}

/// Draw from `mu_1 x mu_0` on `|n| <= M`: position modes with
/// `E|u_n|^2 = 1 / (m + |n|^2)`, velocity modes with `E|v_n|^2 = 1`.
pub fn sample_mu1_mu0_pair(spec: GridSpec, radius: u32, stream: &NoiseStream) -> PairState {
    let mut rng = stream.rng(0);
    let pos = SpectralField::random_gaussian(spec, &mut rng, |n| {
        if n.within(radius) {
            1.0 / spec.lambda(n)
        } else {
            0.0
        }
    });
    let vel = SpectralField::random_gaussian(spec, &mut rng, |n| if n.within(radius) { 1.0 } else { 0.0 });
    PairState { pos, vel }
}
