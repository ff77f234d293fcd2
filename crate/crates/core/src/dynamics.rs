//! Time integration of the renormalized HLSM residual system, the mean-field
//! residual system on replica ensembles, and the two deterministic
//! conservative systems.
//!
//! Stochastic systems are written as `u_j = base_j + v_j`, where the base is
//! a stochastic convolution advanced by its exact transition (`Psi` from zero
//! data with Wick constant `sigma_M(t)`, or `Phi` from given data with the
//! constant `alpha_M`) and the residual `v_j` is advanced by the second-order
//! exponential integrator. All nonlinear terms are products on the physical
//! grid, projected back onto the active mode set.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SigmaError};
use crate::grid::{ActiveSet, ComponentEnsemble, GridSpec, PairState, SpectralField};
use crate::noise::{sigma_m, ConvolutionKernel, ConvolutionState, NoiseStream, StreamKind};
use crate::propagator::{EtdStepper, LinearFlow};

/// How the nonlinearity couples the components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `N` components coupled through `(1/N) sum_k`.
    Hlsm,
    /// `R` i.i.d. replicas coupled through replica averages.
    MeanField,
    /// No interaction: the residual obeys the linear damped flow.
    Free,
}

/// Variance parameter of the Wick products of the base field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WickVariance {
    /// `sigma_M(t)`, for `Psi` started from zero data.
    Evolving,
    /// A fixed constant, `alpha_M` for `Phi`.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSettings {
    pub dt: f64,
    /// Truncation `M` of the noise, the Wick constants and the dynamics.
    pub radius: u32,
    pub dealias: bool,
}

impl IntegratorSettings {
    pub fn new(dt: f64, radius: u32, dealias: bool) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        Ok(Self { dt, radius, dealias })
    }
}

fn grids(fields: &[&SpectralField]) -> Vec<Vec<f64>> {
    fields.par_iter().map(|f| f.to_grid()).collect()
}

/// `out_j = P(a(x) * (v_j + b_j))` for every component.
fn scale_sum(
    spec: GridSpec,
    a: &[f64],
    vg: &[Vec<f64>],
    bg: &[Vec<f64>],
    active: &ActiveSet,
) -> Result<Vec<SpectralField>> {
    vg.par_iter()
        .zip(bg.par_iter())
        .map(|(v, b)| {
            let vals: Vec<f64> = a.iter().zip(v.iter().zip(b)).map(|(a, (v, b))| a * (v + b)).collect();
            let mut f = SpectralField::from_grid(spec, &vals)?;
            active.project_in_place(&mut f);
            Ok(f)
        })
        .collect()
}

fn check_pair(v: &[PairState], base: &[SpectralField], active: &ActiveSet) -> Result<GridSpec> {
    if v.is_empty() {
        return Err(invalid("N", "at least one component is required"));
    }
    if v.len() != base.len() {
        return Err(SigmaError::ComponentMismatch {
            expected: v.len(),
            got: base.len(),
        });
    }
    let spec = *active.spec();
    for (a, b) in v.iter().zip(base) {
        spec.check(a.spec())?;
        spec.check(b.spec())?;
    }
    Ok(spec)
}

/// Forcing of the HLSM residual system:
/// `-(1/N) sum_k (v_k^2 v_j + 2 Psi_k v_k v_j + v_k^2 Psi_j + :Psi_k^2: v_j
///  + 2 v_k :Psi_k Psi_j: + :Psi_k^2 Psi_j:)`,
/// assembled as `-(1/N) (S_vv + 2 S_pv + sum_k :Psi_k^2: - 2c) (v_j + Psi_j)`.
pub fn hlsm_rhs(v: &[PairState], psi: &[SpectralField], c: f64, active: &ActiveSet) -> Result<Vec<SpectralField>> {
    let spec = check_pair(v, psi, active)?;
    let n = v.len() as f64;
    let vg = grids(&v.iter().map(|s| &s.pos).collect::<Vec<_>>());
    let pg = grids(&psi.iter().collect::<Vec<_>>());
    let a: Vec<f64> = (0..spec.len())
        .map(|x| {
            let mut acc = -2.0 * c;
            for (vk, pk) in vg.iter().zip(&pg) {
                acc += vk[x] * vk[x] + 2.0 * pk[x] * vk[x] + pk[x] * pk[x] - c;
            }
            -acc / n
        })
        .collect();
    scale_sum(spec, &a, &vg, &pg, active)
}

/// Forcing of the mean-field residual system with replica averages `E`:
/// `-E[v^2] v_r - 2 E[Psi v] v_r - E[v^2] Psi_r - 2 E[v Psi] Psi_r`.
pub fn meanfield_rhs(v: &[PairState], psi: &[SpectralField], active: &ActiveSet) -> Result<Vec<SpectralField>> {
    let spec = check_pair(v, psi, active)?;
    let r = v.len() as f64;
    let vg = grids(&v.iter().map(|s| &s.pos).collect::<Vec<_>>());
    let pg = grids(&psi.iter().collect::<Vec<_>>());
    let a: Vec<f64> = (0..spec.len())
        .map(|x| {
            let mut acc = 0.0;
            for (vk, pk) in vg.iter().zip(&pg) {
                acc += vk[x] * vk[x] + 2.0 * pk[x] * vk[x];
            }
            -acc / r
        })
        .collect();
    scale_sum(spec, &a, &vg, &pg, active)
}

/// Forcing `-(1/N) sum_k u_k^2 u_j` of the deterministic systems; with
/// replicas this is `-E[u^2] u_r`.
pub fn cubic_rhs(u: &[PairState], active: &ActiveSet) -> Result<Vec<SpectralField>> {
    let spec = *active.spec();
    if u.is_empty() {
        return Err(invalid("N", "at least one component is required"));
    }
    for s in u {
        spec.check(s.spec())?;
    }
    let n = u.len() as f64;
    let ug = grids(&u.iter().map(|s| &s.pos).collect::<Vec<_>>());
    let a: Vec<f64> = (0..spec.len())
        .map(|x| -ug.iter().map(|g| g[x] * g[x]).sum::<f64>() / n)
        .collect();
    let zero = vec![vec![0.0; spec.len()]; u.len()];
    scale_sum(spec, &a, &ug, &zero, active)
}

/// A renormalized stochastic system `u_j = base_j + v_j`.
#[derive(Debug, Clone)]
pub struct StochasticSystem {
    coupling: Coupling,
    variance: WickVariance,
    settings: IntegratorSettings,
    residual: Vec<PairState>,
    base: Vec<ConvolutionState>,
    kernel: ConvolutionKernel,
    stepper: EtdStepper,
    active: ActiveSet,
    time: f64,
}

/// State of the HLSM_N residual system.
pub type HlsmState = StochasticSystem;
/// State of the replica mean-field residual system.
pub type MeanFieldState = StochasticSystem;

impl StochasticSystem {
    pub fn new(
        coupling: Coupling,
        residual: Vec<PairState>,
        base: Vec<ConvolutionState>,
        variance: WickVariance,
        settings: IntegratorSettings,
    ) -> Result<Self> {
        let first = base
            .first()
            .ok_or_else(|| invalid("N", "at least one component is required"))?;
        let spec = *first.pair.spec();
        if residual.len() != base.len() {
            return Err(SigmaError::ComponentMismatch {
                expected: base.len(),
                got: residual.len(),
            });
        }
        for b in &base {
            spec.check(b.pair.spec())?;
            if b.radius != settings.radius {
                return Err(invalid(
                    "M",
                    format!("convolution truncation {} vs dynamics {}", b.radius, settings.radius),
                ));
            }
        }
        if let WickVariance::Fixed(c) = variance {
            if !(c >= 0.0) {
                return Err(invalid("c", format!("Wick variance must be >= 0, got {c}")));
            }
        }
        let active = ActiveSet::new(spec, settings.radius, settings.dealias);
        let residual = residual
            .into_iter()
            .map(|r| {
                spec.check(r.spec())?;
                Ok(PairState {
                    pos: active.project(&r.pos),
                    vel: active.project(&r.vel),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let time = first.time;
        Ok(Self {
            coupling,
            variance,
            settings,
            residual,
            kernel: ConvolutionKernel::new(spec, settings.radius, settings.dt)?,
            stepper: EtdStepper::new(&active, settings.dt, LinearFlow::Damped)?,
            active,
            base,
            time,
        })
    }

    /// HLSM_N driven by `Psi_j` (zero data, stream `(seed, j, Forcing)`)
    /// with the given initial residuals.
    pub fn hlsm_from_psi(residual: ComponentEnsemble, settings: IntegratorSettings, seed: u64) -> Result<Self> {
        let spec = *residual.spec();
        let base = (0..residual.len())
            .map(|j| ConvolutionState::zero(spec, settings.radius, NoiseStream::new(seed, j as u64, StreamKind::Forcing)))
            .collect();
        Self::new(Coupling::Hlsm, residual.into_components(), base, WickVariance::Evolving, settings)
    }

    /// Replica mean-field system driven by independent `Psi_r`.
    pub fn meanfield_from_psi(residual: Vec<PairState>, settings: IntegratorSettings, seed: u64) -> Result<Self> {
        let spec = *residual
            .first()
            .ok_or_else(|| invalid("R", "at least one replica is required"))?
            .spec();
        let base = (0..residual.len())
            .map(|r| ConvolutionState::zero(spec, settings.radius, NoiseStream::new(seed, r as u64, StreamKind::Forcing)))
            .collect();
        Self::new(Coupling::MeanField, residual, base, WickVariance::Evolving, settings)
    }

    /// Replaces the noise by the homogeneous damped flow of the base.
    pub fn without_noise(mut self) -> Result<Self> {
        let spec = *self.active.spec();
        self.kernel = ConvolutionKernel::noiseless(spec, self.settings.radius, self.settings.dt)?;
        Ok(self)
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    pub fn settings(&self) -> &IntegratorSettings {
        &self.settings
    }

    pub fn active_set(&self) -> &ActiveSet {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn residual(&self) -> &[PairState] {
        &self.residual
    }

    pub fn base(&self) -> &[ConvolutionState] {
        &self.base
    }

    pub fn wick_constant(&self, t: f64) -> Result<f64> {
        match self.variance {
            WickVariance::Evolving => sigma_m(t, self.active.spec().mass(), self.settings.radius),
            WickVariance::Fixed(c) => Ok(c),
        }
    }

    fn forcing(&self, v: &[PairState], base: &[SpectralField], c: f64) -> Result<Vec<SpectralField>> {
        match self.coupling {
            Coupling::Hlsm => hlsm_rhs(v, base, c, &self.active),
            Coupling::MeanField => meanfield_rhs(v, base, &self.active),
            Coupling::Free => Ok(vec![SpectralField::zeros(*self.active.spec()); v.len()]),
        }
    }

    /// Forcing at the current state.
    pub fn rhs(&self) -> Result<Vec<SpectralField>> {
        let base: Vec<SpectralField> = self.base.iter().map(|b| b.pair.pos.clone()).collect();
        self.forcing(&self.residual, &base, self.wick_constant(self.time)?)
    }

    /// Full solution `u_j = base_j + v_j`.
    pub fn solution(&self) -> Result<Vec<PairState>> {
        self.residual.iter().zip(&self.base).map(|(v, b)| b.pair.add(v)).collect()
    }

    /// One step: the base by its exact transition, then the residual by the
    /// exponential integrator with the forcing evaluated at both endpoints,
    /// each with its own base field and Wick constant.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.settings.dt;
        let c0 = self.wick_constant(self.time)?;
        let b0: Vec<SpectralField> = self.base.iter().map(|b| b.pair.pos.clone()).collect();
        let kernel = &self.kernel;
        self.base.par_iter_mut().try_for_each(|b| kernel.step(b))?;
        let c1 = self.wick_constant(self.time + dt)?;
        let b1: Vec<SpectralField> = self.base.iter().map(|b| b.pair.pos.clone()).collect();
        let mut residual = std::mem::take(&mut self.residual);
        let res = self.stepper.step(&mut residual, |stage, states| {
            if stage == 0 {
                self.forcing(states, &b0, c0)
            } else {
                self.forcing(states, &b1, c1)
            }
        });
        self.residual = residual;
        res?;
        self.time += dt;
        if !self.residual.iter().all(PairState::is_finite) {
            return Err(SigmaError::BlowUp {
                time: self.time,
                quantity: "residual".into(),
            });
        }
        Ok(())
    }
}

/// One step of an HLSM system.
pub fn step_hlsm(state: &mut HlsmState) -> Result<()> {
    state.step()
}

/// One step of a mean-field system.
pub fn step_meanfield(state: &mut MeanFieldState) -> Result<()> {
    state.step()
}

/// Undamped, noiseless system `(d_t^2 + m - Delta) u_j = -(1/N) sum_k u_k^2 u_j`
/// on the full (optionally dealiased) grid. With replicas the same equation
/// reads `-E[u^2] u_r`.
#[derive(Debug, Clone)]
pub struct DeterministicSystem {
    states: Vec<PairState>,
    stepper: EtdStepper,
    active: ActiveSet,
    time: f64,
}

impl DeterministicSystem {
    pub fn new(states: Vec<PairState>, dt: f64, dealias: bool) -> Result<Self> {
        let spec = *states
            .first()
            .ok_or_else(|| invalid("N", "at least one component is required"))?
            .spec();
        let active = ActiveSet::new(spec, 2 * spec.n_grid() as u32, dealias);
        let states = states
            .into_iter()
            .map(|s| {
                spec.check(s.spec())?;
                Ok(PairState {
                    pos: active.project(&s.pos),
                    vel: active.project(&s.vel),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            states,
            stepper: EtdStepper::new(&active, dt, LinearFlow::Undamped)?,
            active,
            time: 0.0,
        })
    }

    pub fn states(&self) -> &[PairState] {
        &self.states
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn active_set(&self) -> &ActiveSet {
        &self.active
    }

    pub fn step(&mut self) -> Result<()> {
        let active = &self.active;
        self.stepper.step(&mut self.states, |_, s| cubic_rhs(s, active))?;
        self.time += self.stepper.dt();
        if !self.states.iter().all(PairState::is_finite) {
            return Err(SigmaError::BlowUp {
                time: self.time,
                quantity: "state".into(),
            });
        }
        Ok(())
    }
}

/// One step of the deterministic NLW system for an ensemble (dealiased).
pub fn step_deterministic_nlw(ens: &ComponentEnsemble, dt: f64) -> Result<ComponentEnsemble> {
    let mut sys = DeterministicSystem::new(ens.components().to_vec(), dt, true)?;
    sys.step()?;
    ComponentEnsemble::new(sys.states)
}

/// One step of the deterministic mean-field system for replicas (dealiased).
pub fn step_deterministic_meanfield(replicas: &[PairState], dt: f64) -> Result<Vec<PairState>> {
    let mut sys = DeterministicSystem::new(replicas.to_vec(), dt, true)?;
    sys.step()?;
    Ok(sys.states)
}

/// Anything that advances in fixed steps and exposes its full solution.
pub trait Evolve {
    fn time(&self) -> f64;
    fn dt(&self) -> f64;
    fn advance(&mut self) -> Result<()>;
    fn solution(&self) -> Result<Vec<PairState>>;
}

impl Evolve for StochasticSystem {
    fn time(&self) -> f64 {
        self.time
    }
    fn dt(&self) -> f64 {
        self.settings.dt
    }
    fn advance(&mut self) -> Result<()> {
        self.step()
    }
    fn solution(&self) -> Result<Vec<PairState>> {
        StochasticSystem::solution(self)
    }
}

impl Evolve for DeterministicSystem {
    fn time(&self) -> f64 {
        self.time
    }
    fn dt(&self) -> f64 {
        self.stepper.dt()
    }
    fn advance(&mut self) -> Result<()> {
        self.step()
    }
    fn solution(&self) -> Result<Vec<PairState>> {
        Ok(self.states.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryConfig {
    pub horizon: f64,
    /// Record every `stride` steps.
    pub stride: usize,
    /// Keep the position of component 0 at every recorded node.
    pub snapshots: bool,
}

/// Time series of diagnostics with running maxima and optional snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub snapshots: Vec<(f64, SpectralField)>,
}

impl TrajectoryRecord {
    /// Maximum of a column over the saved nodes.
    pub fn running_max(&self, column: &str) -> Option<f64> {
        let i = self.columns.iter().position(|c| c == column)?;
        self.rows.iter().map(|r| r[i]).reduce(f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.columns.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Integrates to `horizon`, recording `t` followed by `observe(solution)`
/// at every `stride`-th step and at the final step.
pub fn run_trajectory<S: Evolve>(
    system: &mut S,
    config: &TrajectoryConfig,
    columns: &[&str],
    observe: impl Fn(&[PairState]) -> Vec<f64>,
) -> Result<TrajectoryRecord> {
    if config.stride == 0 {
        return Err(invalid("stride", "must be at least 1"));
    }
    if !(config.horizon >= 0.0) {
        return Err(invalid("T", format!("must be non-negative, got {}", config.horizon)));
    }
    let steps = (config.horizon / system.dt()).round() as usize;
    let mut record = TrajectoryRecord {
        columns: std::iter::once("t").chain(columns.iter().copied()).map(String::from).collect(),
        rows: Vec::new(),
        snapshots: Vec::new(),
    };
    let save = |sys: &S, record: &mut TrajectoryRecord| -> Result<()> {
        let sol = sys.solution()?;
        let values = observe(&sol);
        if values.len() != columns.len() {
            return Err(invalid("observe", "returned a row of the wrong length"));
        }
        if let Some((name, _)) = columns.iter().zip(&values).find(|(_, v)| !v.is_finite()) {
            return Err(SigmaError::BlowUp {
                time: sys.time(),
                quantity: (*name).to_string(),
            });
        }
        record.rows.push(std::iter::once(sys.time()).chain(values).collect());
        if config.snapshots {
            record.snapshots.push((sys.time(), sol[0].pos.clone()));
        }
        Ok(())
    };
    save(system, &mut record)?;
    for k in 1..=steps {
        system.advance()?;
        if k % config.stride == 0 || k == steps {
            save(system, &mut record)?;
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mode;
    use crate::noise::sample_mu1_mu0_pair;
    use crate::wick::{wick_pair, wick_triple, WickContext};
    use num_complex::Complex64;

    fn random_pairs(spec: GridSpec, n: usize, radius: u32, scale: f64, seed: u64) -> Vec<PairState> {
        (0..n)
            .map(|j| {
                let p = sample_mu1_mu0_pair(spec, radius, &NoiseStream::new(seed, j as u64, StreamKind::Trial));
                PairState {
                    pos: p.pos.scaled(scale),
                    vel: p.vel.scaled(scale),
                }
            })
            .collect()
    }

    /// Six-term double loop with the Wick products of the wick module.
    fn hlsm_rhs_unfactored(v: &[PairState], psi: &[SpectralField], c: f64, active: &ActiveSet) -> Vec<SpectralField> {
        let spec = *active.spec();
        let n = v.len();
        let ctx = WickContext::new(c, u32::MAX).unwrap();
        (0..n)
            .map(|j| {
                let mut acc = vec![0.0; spec.len()];
                let vj = v[j].pos.to_grid();
                let pj = psi[j].to_grid();
                for k in 0..n {
                    let vk = v[k].pos.to_grid();
                    let pk = psi[k].to_grid();
                    let same = k == j;
                    let sq = wick_pair(&psi[k], &psi[k], &ctx, true).unwrap().to_grid();
                    let pair = wick_pair(&psi[k], &psi[j], &ctx, same).unwrap().to_grid();
                    let triple = wick_triple(&psi[k], &psi[j], &ctx, same).unwrap().to_grid();
                    for x in 0..spec.len() {
                        acc[x] += vk[x] * vk[x] * vj[x]
                            + 2.0 * pk[x] * vk[x] * vj[x]
                            + vk[x] * vk[x] * pj[x]
                            + sq[x] * vj[x]
                            + 2.0 * vk[x] * pair[x]
                            + triple[x];
                    }
                }
                let vals: Vec<f64> = acc.iter().map(|a| -a / n as f64).collect();
                active.project(&SpectralField::from_grid(spec, &vals).unwrap())
            })
            .collect()
    }

    #[test]
    fn hlsm_rhs_matches_double_loop() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let active = ActiveSet::new(spec, 5, true);
        for n in [1, 3] {
            let v = random_pairs(spec, n, 4, 0.5, 1);
            let psi: Vec<SpectralField> = random_pairs(spec, n, 5, 1.0, 2).into_iter().map(|p| p.pos).collect();
            let fast = hlsm_rhs(&v, &psi, 0.7, &active).unwrap();
            let slow = hlsm_rhs_unfactored(&v, &psi, 0.7, &active);
            for (a, b) in fast.iter().zip(&slow) {
                let scale = b.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max);
                for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
                    assert!((x - y).norm() <= 1e-12 * scale.max(1.0));
                }
            }
        }
    }

    #[test]
    fn hlsm_rhs_without_noise_is_cubic() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let active = ActiveSet::new(spec, 5, true);
        let v = random_pairs(spec, 3, 3, 0.5, 4);
        let zero = vec![SpectralField::zeros(spec); 3];
        let a = hlsm_rhs(&v, &zero, 0.0, &active).unwrap();
        let b = cubic_rhs(&v, &active).unwrap();
        assert_eq!(a, b);
        assert!(hlsm_rhs(&v, &zero[..2], 0.0, &active).is_err());
    }

    #[test]
    fn meanfield_rhs_cases() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let active = ActiveSet::new(spec, 5, true);
        let psi: Vec<SpectralField> = random_pairs(spec, 2, 5, 1.0, 5).into_iter().map(|p| p.pos).collect();
        let zero = vec![PairState::zeros(spec); 2];
        assert!(meanfield_rhs(&zero, &psi, &active).unwrap().iter().all(SpectralField::is_zero));
        // v_2 = -v_1, Psi_2 = -Psi_1: E[v^2] = v_1^2, E[Psi v] = Psi_1 v_1
        let v1 = random_pairs(spec, 1, 3, 0.5, 6).remove(0);
        let v = vec![v1.clone(), PairState { pos: v1.pos.scaled(-1.0), vel: v1.vel.scaled(-1.0) }];
        let p = vec![psi[0].clone(), psi[0].scaled(-1.0)];
        let out = meanfield_rhs(&v, &p, &active).unwrap();
        let vg = v1.pos.to_grid();
        let pg = psi[0].to_grid();
        let hand: Vec<f64> = vg
            .iter()
            .zip(&pg)
            .map(|(&v, &p)| -(v * v * v + 2.0 * p * v * v + v * v * p + 2.0 * v * p * p))
            .collect();
        let hand = active.project(&SpectralField::from_grid(spec, &hand).unwrap());
        for (x, y) in out[0].coeffs().iter().zip(hand.coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
        for (x, y) in out[0].coeffs().iter().zip(out[1].coeffs()) {
            assert!((x + y).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_residual_with_zero_base_stays_zero() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let settings = IntegratorSettings::new(0.05, 4, true).unwrap();
        let base = vec![ConvolutionState::zero(spec, 4, NoiseStream::new(0, 0, StreamKind::Forcing))];
        let mut sys = StochasticSystem::new(Coupling::Hlsm, vec![PairState::zeros(spec)], base, WickVariance::Fixed(0.0), settings)
            .unwrap()
            .without_noise()
            .unwrap();
        for _ in 0..10 {
            sys.step().unwrap();
        }
        assert!(sys.residual()[0].pos.is_zero());
        assert!((sys.time() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn meanfield_from_zero_stays_exactly_zero() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let settings = IntegratorSettings::new(0.05, 4, true).unwrap();
        let mut sys = StochasticSystem::meanfield_from_psi(vec![PairState::zeros(spec); 3], settings, 9).unwrap();
        for _ in 0..20 {
            sys.step().unwrap();
        }
        assert!(sys.residual().iter().all(|r| r.pos.is_zero() && r.vel.is_zero()));
        assert!(!sys.base()[0].pair.pos.is_zero());
    }

    #[test]
    fn hlsm_noiseless_converges_at_order_two() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let data = random_pairs(spec, 2, 4, 1.0, 11);
        let v0 = random_pairs(spec, 2, 3, 0.5, 12);
        let run = |steps: usize| {
            let settings = IntegratorSettings::new(1.0 / steps as f64, 4, true).unwrap();
            let base = data
                .iter()
                .enumerate()
                .map(|(j, d)| ConvolutionState::from_data(d.clone(), 4, NoiseStream::new(0, j as u64, StreamKind::Forcing)))
                .collect();
            let mut sys = StochasticSystem::new(Coupling::Hlsm, v0.clone(), base, WickVariance::Evolving, settings)
                .unwrap()
                .without_noise()
                .unwrap();
            for _ in 0..steps {
                sys.step().unwrap();
            }
            sys.residual()[0].clone()
        };
        let y: Vec<PairState> = [80, 160, 320, 640].iter().map(|&s| run(s)).collect();
        let d: Vec<f64> = y.windows(2).map(|w| w[0].sub(&w[1]).unwrap().energy_norm(1.0)).collect();
        let r1 = (d[0] / d[1]).log2();
        let r2 = (d[1] / d[2]).log2();
        assert!((r2 - 2.0).abs() < 0.1, "{r1} {r2}");
    }

    #[test]
    fn hlsm_permutation_equivariance() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let settings = IntegratorSettings::new(0.05, 4, true).unwrap();
        let v0 = random_pairs(spec, 3, 3, 0.5, 13);
        let streams: Vec<NoiseStream> = (0..3).map(|j| NoiseStream::new(77, j, StreamKind::Forcing)).collect();
        let build = |order: &[usize]| {
            let base = order.iter().map(|&j| ConvolutionState::zero(spec, 4, streams[j])).collect();
            let v = order.iter().map(|&j| v0[j].clone()).collect();
            let mut sys = StochasticSystem::new(Coupling::Hlsm, v, base, WickVariance::Evolving, settings).unwrap();
            for _ in 0..5 {
                sys.step().unwrap();
            }
            sys.solution().unwrap()
        };
        let a = build(&[0, 1, 2]);
        let b = build(&[2, 0, 1]);
        for (pos, &j) in [2usize, 0, 1].iter().enumerate() {
            let diff = a[j].sub(&b[pos]).unwrap().energy_norm(1.0);
            assert!(diff < 1e-12 * a[j].energy_norm(1.0).max(1.0), "{diff}");
        }
    }

    #[test]
    fn deterministic_zero_and_dealias() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let ens = ComponentEnsemble::zeros(spec, 2).unwrap();
        assert_eq!(step_deterministic_nlw(&ens, 0.01).unwrap(), ens);
        let data = random_pairs(spec, 2, 7, 1.0, 14);
        let out = step_deterministic_meanfield(&data, 0.01).unwrap();
        for s in &out {
            for (idx, c) in s.pos.coeffs().iter().enumerate() {
                let m = spec.mode(idx);
                if 3 * m.k1.abs() >= 16 || 3 * m.k2.abs() >= 16 {
                    assert_eq!(*c, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn deterministic_single_mode_matches_rk4() {
        // N = 1, spatially constant data: x'' = -m x - x^3
        let spec = GridSpec::new(8, 1.0).unwrap();
        let amp = 0.3;
        let mut st = PairState::zeros(spec);
        st.pos.set_mode(Mode::new(0, 0), Complex64::new(amp, 0.0)).unwrap();
        let mut sys = DeterministicSystem::new(vec![st], 1e-3, true).unwrap();
        let period = 2.0 * std::f64::consts::PI;
        let steps = (period / 1e-3).round() as usize;
        for _ in 0..steps {
            sys.step().unwrap();
        }
        let t = steps as f64 * 1e-3;
        let (mut x, mut v) = (amp, 0.0);
        let n = 200_000;
        let h = t / n as f64;
        let f = |x: f64, v: f64| (v, -x - x * x * x);
        for _ in 0..n {
            let k1 = f(x, v);
            let k2 = f(x + 0.5 * h * k1.0, v + 0.5 * h * k1.1);
            let k3 = f(x + 0.5 * h * k2.0, v + 0.5 * h * k2.1);
            let k4 = f(x + h * k3.0, v + h * k3.1);
            x += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        let got = sys.states()[0].pos.coeff(Mode::new(0, 0)).re;
        assert!((got - x).abs() < 1e-6, "{got} {x}");
    }

    #[test]
    fn trajectory_recording() {
        let spec = GridSpec::new(8, 1.0).unwrap();
        let data = random_pairs(spec, 1, 2, 0.5, 15);
        let obs = |s: &[PairState]| vec![s[0].energy_norm(1.0)];
        let mut sys = DeterministicSystem::new(data.clone(), 0.1, true).unwrap();
        let cfg = TrajectoryConfig { horizon: 0.0, stride: 1, snapshots: true };
        let rec = run_trajectory(&mut sys, &cfg, &["h1"], obs).unwrap();
        assert_eq!(rec.rows.len(), 1);
        assert_eq!(rec.snapshots.len(), 1);
        let mut sys = DeterministicSystem::new(data, 0.1, true).unwrap();
        let cfg = TrajectoryConfig { horizon: 1.0, stride: 5, snapshots: false };
        let rec = run_trajectory(&mut sys, &cfg, &["h1"], obs).unwrap();
        assert_eq!(rec.rows.len(), 3);
        assert!((rec.rows[2][0] - 1.0).abs() < 1e-12);
        assert!(rec.running_max("h1").unwrap() >= rec.rows[0][1]);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,h1\n"));
    }

    #[test]
    fn blow_up_is_reported() {
        let spec = GridSpec::new(8, 1.0).unwrap();
        let mut st = PairState::zeros(spec);
        st.pos.set_mode(Mode::new(1, 0), Complex64::new(f64::NAN, 0.0)).unwrap();
        let mut sys = DeterministicSystem::new(vec![st], 0.1, true).unwrap();
        assert!(matches!(sys.step(), Err(SigmaError::BlowUp { .. })));
    }
}
