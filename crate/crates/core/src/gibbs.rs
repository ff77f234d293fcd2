//! Sampling the frequency-truncated renormalized Gibbs measure
//! `rho_N x mu_0^N` and checking its invariance under the truncated
//! renormalized dynamics.
//!
//! Positions are sampled with a preconditioned Crank-Nicolson Langevin
//! proposal (MALA with the Gaussian part `mu_1` treated exactly) in real
//! coordinates: `u_n = (x_a + i x_b) / sqrt 2` on the half lattice and
//! `u_0 = x_0`, each coordinate having prior variance `1 / (m + |n|^2)`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{integrated_autocorrelation, ks_two_sample, mean_se, KsResult};
use crate::dynamics::{Coupling, IntegratorSettings, StochasticSystem, WickVariance};
use crate::error::{invalid, Result, SigmaError};
use crate::grid::{ComponentEnsemble, GridSpec, Mode, PairState, SpectralField};
use crate::noise::{ConvolutionState, NoiseStream, StreamKind};

fn check_fields(u: &[SpectralField]) -> Result<GridSpec> {
    let spec = *u
        .first()
        .ok_or_else(|| invalid("N", "at least one component is required"))?
        .spec();
    for f in u {
        spec.check(f.spec())?;
    }
    Ok(spec)
}

/// `V(u) = (1/4N) int [(S - N alpha)^2 - 4 alpha S + 2 N alpha^2] dx` with
/// `S = sum_j u_j^2`, which expands the Wick rule
/// `(1/4N) int [sum_{k != j} :u_k^2::u_j^2: + sum_j :u_j^4:] dx`.
pub fn gibbs_potential(u: &[SpectralField], alpha: f64) -> Result<f64> {
    let spec = check_fields(u)?;
    let n = u.len() as f64;
    let grids: Vec<Vec<f64>> = u.par_iter().map(|f| f.to_grid()).collect();
    let total: f64 = (0..spec.len())
        .map(|x| {
            let s: f64 = grids.iter().map(|g| g[x] * g[x]).sum();
            s * s - 2.0 * (n + 2.0) * alpha * s + n * (n + 2.0) * alpha * alpha
        })
        .sum();
    Ok(total / spec.len() as f64 / (4.0 * n))
}

/// `-dV/du_j = -(1/N) [(sum_k u_k^2) u_j - (N + 2) alpha u_j]`, unprojected.
pub fn gibbs_drift(u: &[SpectralField], alpha: f64) -> Result<Vec<SpectralField>> {
    let spec = check_fields(u)?;
    let n = u.len() as f64;
    let grids: Vec<Vec<f64>> = u.par_iter().map(|f| f.to_grid()).collect();
    let coef: Vec<f64> = (0..spec.len())
        .map(|x| {
            let s: f64 = grids.iter().map(|g| g[x] * g[x]).sum();
            -(s - (n + 2.0) * alpha) / n
        })
        .collect();
    grids
        .par_iter()
        .map(|g| {
            let vals: Vec<f64> = g.iter().zip(&coef).map(|(u, c)| c * u).collect();
            SpectralField::from_grid(spec, &vals)
        })
        .collect()
}

/// A target `exp(-V(x) - 1/2 sum_i x_i^2 / C_i)` on `R^d`.
pub trait Target {
    fn prior_variance(&self) -> &[f64];
    /// `V(x)` and its gradient.
    fn potential_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn dim(&self) -> usize {
        self.prior_variance().len()
    }
}

/// Preconditioned Crank-Nicolson Langevin proposal
/// `y = a x - b C grad V(x) + s xi`, `xi ~ N(0, C)`, with
/// `a = (2 - h)/(2 + h)`, `b = 2h/(2 + h)`, `s = sqrt(8h)/(2 + h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pcnl {
    pub h: f64,
    a: f64,
    b: f64,
    s: f64,
}

impl Pcnl {
    pub fn new(h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid("h", format!("step size must be positive, got {h}")));
        }
        Ok(Self {
            h,
            a: (2.0 - h) / (2.0 + h),
            b: 2.0 * h / (2.0 + h),
            s: (8.0 * h).sqrt() / (2.0 + h),
        })
    }

    /// Autoregression coefficient of the Gaussian part.
    pub fn a(&self) -> f64 {
        self.a
    }

    fn mean(&self, x: &[f64], grad: &[f64], prior: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(grad)
            .zip(prior)
            .map(|((x, g), c)| self.a * x - self.b * c * g)
            .collect()
    }

    /// `y = mean(x) + s sqrt(C) z` for standard normal `z`.
    pub fn propose(&self, x: &[f64], grad: &[f64], prior: &[f64], z: &[f64]) -> Vec<f64> {
        self.mean(x, grad, prior)
            .into_iter()
            .zip(z.iter().zip(prior))
            .map(|(m, (z, c))| m + self.s * c.sqrt() * z)
            .collect()
    }

    /// `log q(x -> y)` up to a constant.
    pub fn log_q(&self, x: &[f64], grad_x: &[f64], y: &[f64], prior: &[f64]) -> f64 {
        let m = self.mean(x, grad_x, prior);
        -y.iter()
            .zip(&m)
            .zip(prior)
            .map(|((y, m), c)| (y - m).powi(2) / c)
            .sum::<f64>()
            / (2.0 * self.s * self.s)
    }

    /// Metropolis-Hastings log acceptance ratio for `x -> y`.
    pub fn log_acceptance(
        &self,
        prior: &[f64],
        (x, vx, gx): (&[f64], f64, &[f64]),
        (y, vy, gy): (&[f64], f64, &[f64]),
    ) -> f64 {
        let log_pi = |z: &[f64], v: f64| -v - 0.5 * z.iter().zip(prior).map(|(z, c)| z * z / c).sum::<f64>();
        log_pi(y, vy) + self.log_q(y, gy, x, prior) - log_pi(x, vx) - self.log_q(x, gx, y, prior)
    }
}

#[derive(Debug, Clone, Copy)]
struct Coord {
    component: usize,
    idx: usize,
    conj: usize,
}

/// The truncated Gibbs target over `N` components and modes `|n| <= M`.
#[derive(Debug, Clone)]
pub struct GibbsTarget {
    spec: GridSpec,
    n: usize,
    radius: u32,
    alpha: f64,
    interaction: bool,
    coords: Vec<Coord>,
    prior: Vec<f64>,
}

impl GibbsTarget {
    pub fn new(spec: GridSpec, n: usize, radius: u32, alpha: f64, interaction: bool) -> Result<Self> {
        if n == 0 {
            return Err(invalid("N", "at least one component is required"));
        }
        if radius as usize >= spec.nyquist() {
            return Err(invalid("M", format!("truncation {radius} must stay below the Nyquist index {}", spec.nyquist())));
        }
        let mut coords = Vec::new();
        let mut prior = Vec::new();
        for component in 0..n {
            for idx in spec.half_lattice() {
                let mode = spec.mode(idx);
                if !mode.within(radius) {
                    continue;
                }
                let conj = spec.conj_index(idx);
                let var = 1.0 / spec.lambda(mode);
                coords.push(Coord { component, idx, conj });
                prior.push(var);
                if conj != idx {
                    prior.push(var);
                }
            }
        }
        Ok(Self { spec, n, radius, alpha, interaction, coords, prior })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn fields(&self, x: &[f64]) -> Vec<SpectralField> {
        let mut out = vec![SpectralField::zeros(self.spec); self.n];
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut i = 0;
        for c in &self.coords {
            let f = out[c.component].coeffs_mut();
            if c.conj == c.idx {
                f[c.idx] = Complex64::new(x[i], 0.0);
                i += 1;
            } else {
                let z = Complex64::new(x[i], x[i + 1]) * r;
                f[c.idx] = z;
                f[c.conj] = z.conj();
                i += 2;
            }
        }
        out
    }

    pub fn coords_of(&self, fields: &[SpectralField]) -> Vec<f64> {
        let s = std::f64::consts::SQRT_2;
        let mut x = Vec::with_capacity(self.prior.len());
        for c in &self.coords {
            let z = fields[c.component].coeffs()[c.idx];
            if c.conj == c.idx {
                x.push(z.re);
            } else {
                x.push(s * z.re);
                x.push(s * z.im);
            }
        }
        x
    }

    /// `int :u_1^2: dx = sum_n |u_n|^2 - alpha` for component 0.
    pub fn wick_square_mass(&self, x: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut i = 0;
        for c in &self.coords {
            let w = if c.conj == c.idx { 1 } else { 2 };
            if c.component == 0 {
                sum += x[i..i + w].iter().map(|v| v * v).sum::<f64>();
            }
            i += w;
        }
        sum - self.alpha
    }
}

impl Target for GibbsTarget {
    fn prior_variance(&self) -> &[f64] {
        &self.prior
    }

    fn potential_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if !self.interaction {
            return Ok((0.0, vec![0.0; x.len()]));
        }
        let u = self.fields(x);
        let v = gibbs_potential(&u, self.alpha)?;
        let drift = gibbs_drift(&u, self.alpha)?;
        let s = std::f64::consts::SQRT_2;
        let mut g = Vec::with_capacity(x.len());
        for c in &self.coords {
            let z = -drift[c.component].coeffs()[c.idx];
            if c.conj == c.idx {
                g.push(z.re);
            } else {
                g.push(s * z.re);
                g.push(s * z.im);
            }
        }
        Ok((v, g))
    }
}

/// Metropolis-adjusted pCNL chain on a generic target with keyed randomness.
#[derive(Debug, Clone)]
pub struct McmcChain<T: Target> {
    target: T,
    kernel: Pcnl,
    x: Vec<f64>,
    v: f64,
    grad: Vec<f64>,
    stream: NoiseStream,
    iteration: u64,
    metropolis: bool,
}

impl<T: Target> McmcChain<T> {
    pub fn new(target: T, h: f64, x0: Vec<f64>, stream: NoiseStream) -> Result<Self> {
        if x0.len() != target.dim() {
            return Err(invalid("x0", format!("dimension {} vs target {}", x0.len(), target.dim())));
        }
        let (v, grad) = target.potential_and_gradient(&x0)?;
        Ok(Self { target, kernel: Pcnl::new(h)?, x: x0, v, grad, stream, iteration: 0, metropolis: true })
    }

    /// Without the accept/reject step the chain is the unadjusted
    /// discretized Langevin flow, kept as a cross-check of the sampler.
    pub fn with_metropolis(mut self, on: bool) -> Self {
        self.metropolis = on;
        self
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn target(&self) -> &T {
        &self.target
    }

    pub fn potential(&self) -> f64 {
        self.v
    }

    /// One proposal and accept/reject; returns whether it was accepted.
    pub fn step(&mut self) -> Result<bool> {
        let mut rng = self.stream.rng(self.iteration);
        self.iteration += 1;
        let z: Vec<f64> = (0..self.x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let u: f64 = rng.random();
        let prior = self.target.prior_variance();
        let y = self.kernel.propose(&self.x, &self.grad, prior, &z);
        let (vy, gy) = self.target.potential_and_gradient(&y)?;
        if !self.metropolis && (y.iter().any(|v| !v.is_finite()) || !vy.is_finite()) {
            return Err(SigmaError::BlowUp { time: self.iteration as f64, quantity: "unadjusted chain".into() });
        }
        let log_a = self.kernel.log_acceptance(prior, (&self.x, self.v, &self.grad), (&y, vy, &gy));
        if !self.metropolis || (log_a.is_finite() && u.ln() < log_a) {
            self.x = y;
            self.v = vy;
            self.grad = gy;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsSamplerConfig {
    pub n: usize,
    pub radius: u32,
    /// pCNL step size `h`.
    pub step: f64,
    /// Total iterations, burn-in included.
    pub chain: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub interaction: bool,
    /// Metropolis correction; off gives the unadjusted Langevin chain.
    pub metropolis: bool,
    pub accept_low: f64,
    pub accept_high: f64,
}

impl GibbsSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("N", "at least one component is required"));
        }
        if !(self.step > 0.0) {
            return Err(invalid("h", format!("step size must be positive, got {}", self.step)));
        }
        if self.burn_in >= self.chain {
            return Err(invalid("burnin", "must be smaller than the chain length"));
        }
        if self.thin == 0 {
            return Err(invalid("thin", "must be at least 1"));
        }
        if !(self.accept_low < self.accept_high) {
            return Err(invalid("accept_band", "lower bound must be below upper bound"));
        }
        Ok(())
    }
}

/// Output of a Gibbs chain.
#[derive(Debug, Clone)]
pub struct GibbsRun {
    /// Positions with independent `mu_0` velocities.
    pub samples: Vec<ComponentEnsemble>,
    pub acceptance: f64,
    /// Integrated autocorrelation time of `int :u_1^2: dx` after burn-in.
    pub iact: f64,
    pub warning: Option<String>,
}

/// Velocity field from truncated `mu_0`, keyed by sample index.
pub fn sample_velocity(spec: GridSpec, radius: u32, stream: &NoiseStream, counter: u64) -> SpectralField {
    let mut rng = stream.rng(counter);
    SpectralField::random_gaussian(spec, &mut rng, |n| if n.within(radius) { 1.0 } else { 0.0 })
}

/// Runs one MALA chain for `rho_N` and attaches `mu_0` velocities.
pub fn sample_gibbs(spec: GridSpec, alpha: f64, cfg: &GibbsSamplerConfig, seed: u64, chain_id: u64) -> Result<GibbsRun> {
    cfg.validate()?;
    let target = GibbsTarget::new(spec, cfg.n, cfg.radius, alpha, cfg.interaction)?;
    let stream = NoiseStream::new(seed, chain_id, StreamKind::Gibbs);
    let vel_stream = NoiseStream::new(seed, chain_id, StreamKind::Velocity);
    let x0 = prior_draw(&target, &stream.with_kind(StreamKind::InitialData));
    let mut chain = McmcChain::new(target, cfg.step, x0, stream)?.with_metropolis(cfg.metropolis);
    let mut accepted = 0usize;
    let mut trace = Vec::with_capacity(cfg.chain - cfg.burn_in);
    let mut samples = Vec::new();
    for it in 0..cfg.chain {
        let acc = chain.step()?;
        if it < cfg.burn_in {
            continue;
        }
        accepted += acc as usize;
        trace.push(chain.target().wick_square_mass(chain.state()));
        if (it - cfg.burn_in).is_multiple_of(cfg.thin) {
            let k = samples.len();
            let pos = chain.target().fields(chain.state());
            let comps = pos
                .into_iter()
                .enumerate()
                .map(|(j, p)| {
                    let vel = sample_velocity(spec, cfg.radius, &vel_stream.with_component(chain_id << 32 | j as u64), k as u64);
                    PairState { pos: p, vel }
                })
                .collect();
            samples.push(ComponentEnsemble::new(comps)?);
        }
    }
    let acceptance = accepted as f64 / (cfg.chain - cfg.burn_in) as f64;
    let warning = if acceptance < cfg.accept_low {
        Some(format!("acceptance {acceptance:.3} below {}; try h = {}", cfg.accept_low, cfg.step / 2.0))
    } else if acceptance > cfg.accept_high {
        Some(format!("acceptance {acceptance:.3} above {}; try h = {}", cfg.accept_high, (cfg.step * 2.0).min(2.0)))
    } else {
        None
    };
    Ok(GibbsRun { samples, acceptance, iact: integrated_autocorrelation(&trace), warning })
}

/// Exact draw from the Gaussian prior `N(0, C)`.
pub fn prior_draw<T: Target>(target: &T, stream: &NoiseStream) -> Vec<f64> {
    let mut rng = stream.rng(0);
    target
        .prior_variance()
        .iter()
        .map(|c| c.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Coupled initial data: an unadjusted pCNL chain for `rho_N` and the exact
/// `mu_1` autoregression `y' = a y + s xi`, both started from one `mu_1`
/// draw and driven by the same `xi`. Returns `(psi, phi)` with velocities
/// shared from `mu_0`.
pub fn coupled_gibbs_gaussian(
    target: &GibbsTarget,
    h: f64,
    steps: usize,
    stream: &NoiseStream,
) -> Result<(Vec<PairState>, Vec<PairState>)> {
    let kernel = Pcnl::new(h)?;
    let prior = target.prior_variance().to_vec();
    let mut y = prior_draw(target, &stream.with_kind(StreamKind::InitialData));
    let mut x = y.clone();
    let zero = vec![0.0; prior.len()];
    for k in 0..steps {
        let mut rng = stream.rng(k as u64);
        let z: Vec<f64> = (0..prior.len()).map(|_| rng.sample(StandardNormal)).collect();
        let (_, g) = target.potential_and_gradient(&x)?;
        x = kernel.propose(&x, &g, &prior, &z);
        y = kernel.propose(&y, &zero, &prior, &z);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SigmaError::BlowUp { time: k as f64, quantity: "coupled chain".into() });
        }
    }
    let spec = *target.spec();
    let vel_stream = stream.with_kind(StreamKind::Velocity);
    let vels: Vec<SpectralField> = (0..target.n())
        .map(|j| sample_velocity(spec, target.radius(), &vel_stream.with_component(stream.component | j as u64), 0))
        .collect();
    let pack = |pos: Vec<SpectralField>| -> Vec<PairState> {
        pos.into_iter().zip(&vels).map(|(p, v)| PairState { pos: p, vel: v.clone() }).collect()
    };
    Ok((pack(target.fields(&x)), pack(target.fields(&y))))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvarianceConfig {
    pub horizon: f64,
    pub settings: IntegratorSettings,
    pub alpha: f64,
    pub interaction: bool,
    pub seed: u64,
}

/// Comparison of one observable at `t = 0` and `t = T`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableComparison {
    pub name: String,
    pub ks: KsResult,
    pub mean0: f64,
    pub se0: f64,
    pub mean1: f64,
    pub se1: f64,
    /// `|mean1 - mean0|` in units of the combined standard error.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub samples: usize,
    pub horizon: f64,
    pub observables: Vec<ObservableComparison>,
}

impl InvarianceReport {
    pub fn observable(&self, name: &str) -> Option<&ObservableComparison> {
        self.observables.iter().find(|o| o.name == name)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "observable,ks_statistic,p_value,mean0,se0,mean1,se1,z")?;
        for o in &self.observables {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                o.name, o.ks.statistic, o.ks.p_value, o.mean0, o.se0, o.mean1, o.se1, o.z
            )?;
        }
        Ok(())
    }
}

const OBSERVABLES: [&str; 3] = ["wick_square_u1", "low_mode_mass_u1", "potential"];

fn observe(u: &[PairState], alpha: f64) -> Result<[f64; 3]> {
    let u1 = &u[0].pos;
    let mass: f64 = u1.coeffs().iter().map(|c| c.norm_sqr()).sum();
    let low: f64 = u1.project(1).coeffs().iter().map(|c| c.norm_sqr()).sum();
    let pos: Vec<SpectralField> = u.iter().map(|p| p.pos.clone()).collect();
    Ok([mass - alpha, low, gibbs_potential(&pos, alpha)?])
}

/// Evolves each sample to `T` under the truncated renormalized dynamics
/// (Wick constant `alpha`) and compares observables at `0` and `T`.
pub fn invariance_check(samples: &[ComponentEnsemble], cfg: &InvarianceConfig) -> Result<InvarianceReport> {
    if samples.len() < 2 {
        return Err(SigmaError::InsufficientData("invariance check needs at least 2 samples".into()));
    }
    let steps = (cfg.horizon / cfg.settings.dt).round() as usize;
    let coupling = if cfg.interaction { Coupling::Hlsm } else { Coupling::Free };
    let rows = samples
        .par_iter()
        .enumerate()
        .map(|(k, ens)| {
            let n = ens.len();
            let before = observe(ens.components(), cfg.alpha)?;
            let base = ens
                .components()
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let stream = NoiseStream::new(cfg.seed, (k as u64) << 32 | j as u64, StreamKind::Forcing);
                    ConvolutionState::from_data(p.clone(), cfg.settings.radius, stream)
                })
                .collect();
            let spec = *ens.spec();
            let mut sys = StochasticSystem::new(coupling, vec![PairState::zeros(spec); n], base, WickVariance::Fixed(cfg.alpha), cfg.settings)?;
            for _ in 0..steps {
                sys.step()?;
            }
            let after = observe(&sys.solution()?, cfg.alpha)?;
            Ok((before, after))
        })
        .collect::<Result<Vec<_>>>()?;
    let observables = OBSERVABLES
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let a: Vec<f64> = rows.iter().map(|r| r.0[i]).collect();
            let b: Vec<f64> = rows.iter().map(|r| r.1[i]).collect();
            let (mean0, se0) = mean_se(&a);
            let (mean1, se1) = mean_se(&b);
            let combined = (se0 * se0 + se1 * se1).sqrt();
            let z = if combined > 0.0 { (mean1 - mean0).abs() / combined } else { 0.0 };
            Ok(ObservableComparison { name: name.to_string(), ks: ks_two_sample(&a, &b)?, mean0, se0, mean1, se1, z })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvarianceReport { samples: samples.len(), horizon: cfg.horizon, observables })
}

/// Marginal second moment of one Fourier mode against the Gaussian value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceReport {
    pub component: usize,
    pub k1: i64,
    pub k2: i64,
    /// Sample mean of `|u_n|^2`.
    pub variance: f64,
    pub se: f64,
    /// `1 / (m + |n|^2)`, or 0 beyond the truncation.
    pub gaussian: f64,
}

impl CovarianceReport {
    pub fn relative_deviation(&self) -> f64 {
        if self.gaussian == 0.0 {
            self.variance
        } else {
            (self.variance - self.gaussian) / self.gaussian
        }
    }
}

pub fn gibbs_vs_gaussian_covariance(samples: &[ComponentEnsemble], j: usize, mode: Mode, radius: u32) -> Result<CovarianceReport> {
    let first = samples
        .first()
        .ok_or_else(|| SigmaError::InsufficientData("no samples".into()))?;
    if j >= first.len() {
        return Err(invalid("j", format!("component {j} out of range for N = {}", first.len())));
    }
    let spec = *first.spec();
    let values: Vec<f64> = samples.iter().map(|s| s.components()[j].pos.coeff(mode).norm_sqr()).collect();
    let (variance, se) = mean_se(&values);
    let gaussian = if mode.within(radius) { 1.0 / spec.lambda(mode) } else { 0.0 };
    Ok(CovarianceReport { component: j, k1: mode.k1, k2: mode.k2, variance, se, gaussian })
}

/// Coupled Gibbs-data experiment for one `N`: `psi` from the coupled sampler,
/// `u = Phi + v` with `Phi` started from the Gaussian partner and `v(0) = psi - phi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldGapConfig {
    pub n: usize,
    pub horizon: f64,
    pub settings: IntegratorSettings,
    pub s: f64,
    /// Component whose distance to `Phi_j` is reported (0-based).
    pub component: usize,
    /// Step size and length of the coupled sampler.
    pub h: f64,
    pub mixing_steps: usize,
}

/// `sup_t ||(u_j, d_t u_j) - (Phi_j, d_t Phi_j)||_{H^s x H^{s-1}}` over the
/// time nodes of realization `rep`.
pub fn meanfield_gap(spec: GridSpec, cfg: &MeanFieldGapConfig, seed: u64, rep: u64) -> Result<f64> {
    if cfg.component >= cfg.n {
        return Err(invalid("j", format!("component {} out of range for N = {}", cfg.component, cfg.n)));
    }
    let radius = cfg.settings.radius;
    let alpha = crate::noise::alpha_m(spec.mass(), radius);
    let target = GibbsTarget::new(spec, cfg.n, radius, alpha, true)?;
    let (psi, phi) = coupled_gibbs_gaussian(&target, cfg.h, cfg.mixing_steps, &NoiseStream::new(seed, rep << 32, StreamKind::Gibbs))?;
    let residual = psi.iter().zip(&phi).map(|(a, b)| a.sub(b)).collect::<Result<Vec<_>>>()?;
    let base = phi
        .into_iter()
        .enumerate()
        .map(|(j, p)| ConvolutionState::from_data(p, radius, NoiseStream::new(seed, rep << 32 | j as u64, StreamKind::Forcing)))
        .collect();
    let mut sys = StochasticSystem::new(Coupling::Hlsm, residual, base, WickVariance::Fixed(alpha), cfg.settings)?;
    let steps = (cfg.horizon / cfg.settings.dt).round() as usize;
    let mut gap = sys.residual()[cfg.component].energy_norm(cfg.s);
    for _ in 0..steps {
        sys.step()?;
        gap = gap.max(sys.residual()[cfg.component].energy_norm(cfg.s));
    }
    Ok(gap)
}
