//! Measured quantities: energies, enhanced-data norms, law-of-large-numbers
//! estimators, commutator defects, trajectory differences, rate fits and a
//! two-sample Kolmogorov-Smirnov test.
//!
//! `W^{s,infinity}` norms are grid-max proxies and `C_T` norms are maxima over
//! saved time nodes.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result, SigmaError};
use crate::grid::{a_n2_norm, a_n_norm, GridSpec, PairState, SpectralField};
use crate::noise::{sigma_m, ConvolutionKernel, ConvolutionState, NoiseStream, StreamKind};

fn check_states(states: &[PairState]) -> Result<GridSpec> {
    let spec = *states
        .first()
        .ok_or_else(|| invalid("N", "at least one component is required"))?
        .spec();
    for s in states {
        spec.check(s.spec())?;
    }
    Ok(spec)
}

/// `E_N = 1/2 int (|grad u|_A^2 + m |u|_A^2 + |d_t u|_A^2) dx + 1/4 int |u|_A^4 dx`
/// with `|.|_A` the l^2-average over components and grid quadrature for the
/// quartic term.
pub fn energy_en(states: &[PairState]) -> Result<f64> {
    let spec = check_states(states)?;
    let n = states.len() as f64;
    let m = spec.mass();
    let quadratic: f64 = states
        .iter()
        .map(|s| {
            let pot: f64 = s
                .pos
                .coeffs()
                .iter()
                .enumerate()
                .map(|(idx, c)| (spec.mode(idx).norm_sq() as f64 + m) * c.norm_sqr())
                .sum();
            let kin: f64 = s.vel.coeffs().iter().map(|c| c.norm_sqr()).sum();
            pot + kin
        })
        .sum::<f64>()
        / n;
    let grids: Vec<Vec<f64>> = states.par_iter().map(|s| s.pos.to_grid()).collect();
    let quartic = (0..spec.len())
        .map(|x| {
            let avg = grids.iter().map(|g| g[x] * g[x]).sum::<f64>() / n;
            avg * avg
        })
        .sum::<f64>()
        / spec.len() as f64;
    Ok(0.5 * quadratic + 0.25 * quartic)
}

/// Mean-field energy `1/2 E[int |grad u|^2 + m u^2 + (d_t u)^2] + 1/4 int E[u^2]^2`
/// with replica averages; algebraically the same functional as [`energy_en`].
pub fn energy_meanfield(replicas: &[PairState]) -> Result<f64> {
    energy_en(replicas)
}

/// `E_N(I u, d_t I u)`.
pub fn modified_energy(states: &[PairState], s: f64, radius: u32) -> Result<f64> {
    let transformed = states
        .iter()
        .map(|p| {
            Ok(PairState {
                pos: p.pos.apply_i_operator(s, radius)?,
                vel: p.vel.apply_i_operator(s, radius)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    energy_en(&transformed)
}

/// Time nodes of `N` base fields together with their Wick constants.
#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedData {
    /// `nodes[t][j]`.
    pub nodes: Vec<Vec<SpectralField>>,
    pub variances: Vec<f64>,
}

impl EnhancedData {
    pub fn new(nodes: Vec<Vec<SpectralField>>, variances: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != variances.len() {
            return Err(invalid("nodes", "need one Wick constant per non-empty node list"));
        }
        let n = nodes[0].len();
        if n == 0 {
            return Err(invalid("N", "at least one component is required"));
        }
        for row in &nodes {
            if row.len() != n {
                return Err(SigmaError::ComponentMismatch { expected: n, got: row.len() });
            }
        }
        Ok(Self { nodes, variances })
    }

    pub fn n(&self) -> usize {
        self.nodes[0].len()
    }
}

/// `Z_N^eps` norm: `|Z^(1)_j|_{A_N} + |Z^(2)_{kk}|_{A_N} + |Z^(2)_{kj}|_{A_N^(2)}
/// + |Z^(3)_{kj}|_{A_N^(2)}`, each inner norm `C_T W^{-eps,inf}`, with
/// `Z^(1) = base`, `Z^(2)_{kj} = :base_k base_j:`, `Z^(3)_{kj} = :base_k^2 base_j:`.
pub fn zn_norm(data: &EnhancedData, eps: f64) -> Result<f64> {
    let n = data.n();
    let spec = *data.nodes[0][0].spec();
    let mut z1 = vec![0.0f64; n];
    let mut z2_diag = vec![0.0f64; n];
    let mut z2 = vec![vec![0.0f64; n]; n];
    let mut z3 = vec![vec![0.0f64; n]; n];
    let sup = |vals: Vec<f64>| -> Result<f64> { Ok(SpectralField::from_grid(spec, &vals)?.sup_sobolev_norm(-eps)) };
    for (row, &c) in data.nodes.iter().zip(&data.variances) {
        let g: Vec<Vec<f64>> = row.iter().map(|f| f.to_grid()).collect();
        for j in 0..n {
            z1[j] = z1[j].max(row[j].sup_sobolev_norm(-eps));
            for k in 0..n {
                let pair: Vec<f64> = if k == j {
                    g[j].iter().map(|x| x * x - c).collect()
                } else {
                    g[k].iter().zip(&g[j]).map(|(a, b)| a * b).collect()
                };
                let triple: Vec<f64> = if k == j {
                    g[j].iter().map(|x| x * x * x - 3.0 * c * x).collect()
                } else {
                    g[k].iter().zip(&g[j]).map(|(a, b)| (a * a - c) * b).collect()
                };
                let p = sup(pair)?;
                if k == j {
                    z2_diag[j] = z2_diag[j].max(p);
                }
                z2[k][j] = z2[k][j].max(p);
                z3[k][j] = z3[k][j].max(sup(triple)?);
            }
        }
    }
    Ok(a_n_norm(&z1) + a_n_norm(&z2_diag) + a_n2_norm(&z2) + a_n2_norm(&z3))
}

/// Law-of-large-numbers estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LlnKind {
    /// `(1/N) sum_k :Psi_k^2:`.
    WickSquareAvg,
    /// `(1/N) sum_k :Psi_k^2 Psi_1:`.
    WickTripleAvg,
    /// `A_N`-average over `j` of `(1/N) sum_k :Psi_k^2 Psi_j:`.
    WickTripleAvgAn,
}

impl LlnKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "wick_square_avg" => Some(Self::WickSquareAvg),
            "wick_triple_avg" => Some(Self::WickTripleAvg),
            "wick_triple_avg_an" => Some(Self::WickTripleAvgAn),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::WickSquareAvg => "wick_square_avg",
            Self::WickTripleAvg => "wick_triple_avg",
            Self::WickTripleAvgAn => "wick_triple_avg_an",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlnSettings {
    pub radius: u32,
    pub horizon: f64,
    pub dt: f64,
    pub reps: usize,
    pub eps: f64,
    pub seed: u64,
}

/// One row `N, mean_norm, se`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub mean_norm: f64,
    pub se: f64,
}

pub fn write_lln_csv<W: Write>(rows: &[LlnRow], mut out: W) -> Result<()> {
    writeln!(out, "N,mean_norm,se")?;
    for r in rows {
        writeln!(out, "{},{},{}", r.n, r.mean_norm, r.se)?;
    }
    Ok(())
}

/// `(sum_i w_i y_i^2)^{1/2}` with trapezoid weights on a uniform grid.
fn l2_time(values: &[f64], dt: f64) -> f64 {
    let last = values.len() - 1;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == last { 0.5 } else { 1.0 };
            w * dt * v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// `L^2_T W^{-eps,inf}` norm of one realization of an LLN estimator with
/// `N` components.
pub fn lln_sample(kind: LlnKind, spec: GridSpec, n: usize, settings: &LlnSettings, rep: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid("N", "at least one component is required"));
    }
    let steps = (settings.horizon / settings.dt).round() as usize;
    if steps == 0 {
        return Err(invalid("T", "horizon must cover at least one step"));
    }
    let kernel = ConvolutionKernel::new(spec, settings.radius, settings.dt)?;
    let mut psi: Vec<ConvolutionState> = (0..n)
        .map(|k| {
            let stream = NoiseStream::new(settings.seed, ((rep as u64) << 32) | k as u64, StreamKind::Forcing);
            ConvolutionState::zero(spec, settings.radius, stream)
        })
        .collect();
    let mut per_node: Vec<f64> = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        if step > 0 {
            psi.par_iter_mut().try_for_each(|s| kernel.step(s))?;
        }
        let c = sigma_m(step as f64 * settings.dt, spec.mass(), settings.radius)?;
        let grids: Vec<Vec<f64>> = psi.par_iter().map(|s| s.pair.pos.to_grid()).collect();
        // (1/N) sum_k :Psi_k^2 Psi_j: = ((W2 - 2c) / N) Psi_j with W2 = sum_k :Psi_k^2:
        let w2: Vec<f64> = (0..spec.len())
            .map(|x| grids.iter().map(|g| g[x] * g[x] - c).sum::<f64>())
            .collect();
        let nf = n as f64;
        let value = match kind {
            LlnKind::WickSquareAvg => {
                let vals: Vec<f64> = w2.iter().map(|w| w / nf).collect();
                SpectralField::from_grid(spec, &vals)?.sup_sobolev_norm(-settings.eps)
            }
            LlnKind::WickTripleAvg => {
                let vals: Vec<f64> = w2.iter().zip(&grids[0]).map(|(w, p)| (w - 2.0 * c) / nf * p).collect();
                SpectralField::from_grid(spec, &vals)?.sup_sobolev_norm(-settings.eps)
            }
            LlnKind::WickTripleAvgAn => {
                let norms = grids
                    .par_iter()
                    .map(|g| {
                        let vals: Vec<f64> = w2.iter().zip(g).map(|(w, p)| (w - 2.0 * c) / nf * p).collect();
                        Ok(SpectralField::from_grid(spec, &vals)?.sup_sobolev_norm(-settings.eps))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                // collected per node; the A_N average is taken over L^2_T norms below
                per_node.extend(norms);
                continue;
            }
        };
        per_node.push(value);
    }
    if kind == LlnKind::WickTripleAvgAn {
        let per_j: Vec<f64> = (0..n)
            .map(|j| {
                let series: Vec<f64> = (0..=steps).map(|t| per_node[t * n + j]).collect();
                l2_time(&series, settings.dt)
            })
            .collect();
        return Ok(a_n_norm(&per_j));
    }
    Ok(l2_time(&per_node, settings.dt))
}

/// Mean and standard error of the LLN norm over `reps` realizations per `N`.
pub fn lln_estimator(kind: LlnKind, spec: GridSpec, n_list: &[usize], settings: &LlnSettings) -> Result<Vec<LlnRow>> {
    if n_list.is_empty() {
        return Err(invalid("N_list", "must not be empty"));
    }
    if settings.reps == 0 {
        return Err(invalid("reps", "must be at least 1"));
    }
    n_list
        .iter()
        .map(|&n| {
            let samples = (0..settings.reps)
                .into_par_iter()
                .map(|rep| lln_sample(kind, spec, n, settings, rep))
                .collect::<Result<Vec<f64>>>()?;
            let (mean, se) = mean_se(&samples);
            Ok(LlnRow { n, mean_norm: mean, se })
        })
        .collect()
}

/// Sample mean and its standard error.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `||I(f^2 g) - (I f)^2 I g||_{L^2}`.
pub fn commutator_defect(f: &SpectralField, g: &SpectralField, s: f64, radius: u32) -> Result<f64> {
    f.spec().check(g.spec())?;
    let spec = *f.spec();
    let fg = f.to_grid();
    let gg = g.to_grid();
    let f2g: Vec<f64> = fg.iter().zip(&gg).map(|(a, b)| a * a * b).collect();
    let left = SpectralField::from_grid(spec, &f2g)?.apply_i_operator(s, radius)?;
    let ifg = f.apply_i_operator(s, radius)?.to_grid();
    let igg = g.apply_i_operator(s, radius)?.to_grid();
    let right: Vec<f64> = ifg.iter().zip(&igg).map(|(a, b)| a * a * b).collect();
    let right = SpectralField::from_grid(spec, &right)?;
    Ok(left.sub(&right)?.sobolev_norm(0.0))
}

/// Random field with coefficient magnitudes `~ <n>^{-2}` on `|n| <= band`.
pub fn commutator_field<R: Rng + ?Sized>(spec: GridSpec, band: u32, rng: &mut R) -> SpectralField {
    SpectralField::random_gaussian(spec, rng, |n| {
        if n.within(band) {
            n.bracket().powi(-4)
        } else {
            0.0
        }
    })
}

/// One row `M, defect_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CommutatorRow {
    pub m: u32,
    pub defect_max: f64,
}

pub fn write_commutator_csv<W: Write>(rows: &[CommutatorRow], mut out: W) -> Result<()> {
    writeln!(out, "M,defect_max")?;
    for r in rows {
        writeln!(out, "{},{}", r.m, r.defect_max)?;
    }
    Ok(())
}

/// Per-`M` maximum defect over `trials` pairs `f, g` with
/// `|I f|_{H^1} = |I g|_{H^1} = 1`. Fields live on `|n| <= band`, where
/// `band` keeps cubic products alias-free on the grid.
pub fn commutator_sweep(spec: GridSpec, s: f64, m_list: &[u32], trials: usize, seed: u64) -> Result<Vec<CommutatorRow>> {
    if m_list.is_empty() {
        return Err(invalid("M_list", "must not be empty"));
    }
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let band = ((spec.n_grid() as u32) / 6).max(1);
    m_list
        .iter()
        .map(|&m| {
            let defects = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let stream = NoiseStream::new(seed, t as u64, StreamKind::Trial);
                    let mut rng = stream.rng(0);
                    let f = commutator_field(spec, band, &mut rng);
                    let g = commutator_field(spec, band, &mut rng);
                    let nf = f.apply_i_operator(s, m)?.sobolev_norm(1.0);
                    let ng = g.apply_i_operator(s, m)?.sobolev_norm(1.0);
                    commutator_defect(&f.scaled(1.0 / nf), &g.scaled(1.0 / ng), s, m)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(CommutatorRow {
                m,
                defect_max: defects.into_iter().fold(0.0, f64::max),
            })
        })
        .collect()
}

/// `C_T H^s x H^{s-1}` norm of the difference of component `j`, and the
/// `A_N` average of those norms over all components. Trajectories are
/// indexed `[node][component]`.
pub fn difference_norms(a: &[Vec<PairState>], b: &[Vec<PairState>], s: f64, j: usize) -> Result<(f64, f64)> {
    if a.is_empty() || a.len() != b.len() {
        return Err(invalid("trajectory", "need equally many non-empty node lists"));
    }
    let n = a[0].len();
    if j >= n {
        return Err(invalid("j", format!("component {j} out of range for N = {n}")));
    }
    let mut maxima = vec![0.0f64; n];
    for (ra, rb) in a.iter().zip(b) {
        if ra.len() != n || rb.len() != n {
            return Err(SigmaError::ComponentMismatch { expected: n, got: ra.len().min(rb.len()) });
        }
        for (k, (x, y)) in ra.iter().zip(rb).enumerate() {
            maxima[k] = maxima[k].max(x.sub(y)?.energy_norm(s));
        }
    }
    Ok((maxima[j], a_n_norm(&maxima)))
}

/// Least-squares line through `(log N, log err)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

impl RateFit {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y")?;
        for (x, y) in self.x.iter().zip(&self.y) {
            writeln!(out, "{x},{y}")?;
        }
        Ok(())
    }
}

pub fn fit_rate(ns: &[f64], errors: &[f64]) -> Result<RateFit> {
    if ns.len() != errors.len() {
        return Err(invalid("table", "x and y lengths differ"));
    }
    if ns.len() < 3 {
        return Err(SigmaError::InsufficientData(format!("rate fit needs >= 3 points, got {}", ns.len())));
    }
    if ns.iter().chain(errors).any(|v| !(*v > 0.0)) {
        return Err(invalid("table", "rate fit needs positive values"));
    }
    let x: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let slope_se = (rss / (k - 2.0) / sxx).sqrt();
    Ok(RateFit { x, y, slope, intercept, slope_se })
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(SigmaError::InsufficientData("KS test needs two non-empty samples".into()));
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    })
}

/// `Q(l) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 l^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Integrated autocorrelation time with Sokal's adaptive window (`c = 5`).
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return 1.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n / 2 {
        let ct = (0..n - t).map(|i| (series[i] - mean) * (series[i + t] - mean)).sum::<f64>() / n as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Standard normal draws, used by tests and experiments for synthetic data.
pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Mode;
    use crate::noise::sample_mu1_mu0_pair;
    use num_complex::Complex64;

    fn random_pairs(spec: GridSpec, n: usize, seed: u64) -> Vec<PairState> {
        (0..n)
            .map(|j| sample_mu1_mu0_pair(spec, 4, &NoiseStream::new(seed, j as u64, StreamKind::Trial)))
            .collect()
    }

    #[test]
    fn energy_examples() {
        let spec = GridSpec::new(8, 1.5).unwrap();
        assert_eq!(energy_en(&[PairState::zeros(spec)]).unwrap(), 0.0);
        let c = 0.7;
        let st = PairState::new(SpectralField::constant(spec, c), SpectralField::zeros(spec)).unwrap();
        let e = energy_en(std::slice::from_ref(&st)).unwrap();
        assert!((e - (1.5 * c * c / 2.0 + c.powi(4) / 4.0)).abs() < 1e-14);
        let p = random_pairs(spec, 1, 3).remove(0);
        let one = energy_en(std::slice::from_ref(&p)).unwrap();
        let many = energy_en(&[p.clone(), p.clone(), p]).unwrap();
        assert!((one - many).abs() < 1e-12 * one);
        assert!(energy_en(&[]).is_err());
    }

    #[test]
    fn meanfield_energy_antisymmetric_pair() {
        // u_2 = -u_1 gives E[u^2] = u_1^2, so the value equals the N = 1 energy
        let spec = GridSpec::new(8, 1.0).unwrap();
        let p = random_pairs(spec, 1, 4).remove(0);
        let q = PairState { pos: p.pos.scaled(-1.0), vel: p.vel.scaled(-1.0) };
        let by_hand = {
            let g = p.pos.to_grid();
            let quartic = g.iter().map(|x| x.powi(4)).sum::<f64>() / g.len() as f64;
            let quad: f64 = p
                .pos
                .coeffs()
                .iter()
                .enumerate()
                .map(|(i, c)| (spec.mode(i).norm_sq() as f64 + 1.0) * c.norm_sqr())
                .sum::<f64>()
                + p.vel.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
            0.5 * quad + 0.25 * quartic
        };
        assert!((energy_meanfield(&[p, q]).unwrap() - by_hand).abs() < 1e-12 * by_hand);
    }

    #[test]
    fn modified_energy_cases() {
        let spec = GridSpec::new(8, 1.0).unwrap();
        let p = random_pairs(spec, 2, 5);
        let full = energy_en(&p).unwrap();
        let same = modified_energy(&p, 0.5, 100).unwrap();
        assert!((full - same).abs() <= 1e-12 * full);
        assert_eq!(modified_energy(&[PairState::zeros(spec)], 0.5, 2).unwrap(), 0.0);
    }

    #[test]
    fn zn_norm_cases() {
        let spec = GridSpec::new(8, 1.0).unwrap();
        let zero = EnhancedData::new(vec![vec![SpectralField::zeros(spec); 2]; 3], vec![0.0; 3]).unwrap();
        assert_eq!(zn_norm(&zero, 0.1).unwrap(), 0.0);
        // only component 0 nonzero, c = 0: every Z reduces to a power of f
        let mut f = SpectralField::zeros(spec);
        f.set_mode(Mode::new(1, 0), Complex64::new(0.5, 0.0)).unwrap();
        let g = f.to_grid();
        let sup_pow = |k: i32| {
            let v: Vec<f64> = g.iter().map(|x| x.powi(k)).collect();
            SpectralField::from_grid(spec, &v).unwrap().sup_sobolev_norm(-0.1)
        };
        let d = EnhancedData::new(vec![vec![f.clone(), SpectralField::zeros(spec)]], vec![0.0]).unwrap();
        let r2 = 2f64.sqrt();
        let expect = sup_pow(1) / r2 + sup_pow(2) / r2 + sup_pow(2) / 2.0 + sup_pow(3) / 2.0;
        assert!((zn_norm(&d, 0.1).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn zn_norm_matches_independent_evaluation() {
        let spec = GridSpec::new(8, 1.0).unwrap();
        let nodes: Vec<Vec<SpectralField>> = (0..2)
            .map(|t| random_pairs(spec, 3, 10 + t).into_iter().map(|p| p.pos).collect())
            .collect();
        let cs = vec![0.4, 0.9];
        let got = zn_norm(&EnhancedData::new(nodes.clone(), cs.clone()).unwrap(), 0.1).unwrap();
        use crate::wick::{wick_pair, wick_triple, WickContext};
        let n = 3;
        let sup_t = |f: &dyn Fn(usize) -> SpectralField| (0..2).map(|t| f(t).sup_sobolev_norm(-0.1)).fold(0.0, f64::max);
        let mut z1 = 0.0;
        let mut z2d = 0.0;
        let mut z2 = 0.0;
        let mut z3 = 0.0;
        for j in 0..n {
            z1 += sup_t(&|t| nodes[t][j].clone()).powi(2);
            for k in 0..n {
                let ctx = |t: usize| WickContext::new(cs[t], u32::MAX).unwrap();
                let p = sup_t(&|t| wick_pair(&nodes[t][k], &nodes[t][j], &ctx(t), k == j).unwrap());
                if k == j {
                    z2d += p * p;
                }
                z2 += p * p;
                z3 += sup_t(&|t| wick_triple(&nodes[t][k], &nodes[t][j], &ctx(t), k == j).unwrap()).powi(2);
            }
        }
        let nf = n as f64;
        let expect = (z1 / nf).sqrt() + (z2d / nf).sqrt() + (z2 / (nf * nf)).sqrt() + (z3 / (nf * nf)).sqrt();
        assert!((got - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn lln_single_component_reduces_to_single_term() {
        let spec = GridSpec::new(16, 1.0).unwrap();
        let st = LlnSettings { radius: 4, horizon: 0.2, dt: 0.05, reps: 1, eps: 0.1, seed: 3 };
        let a = lln_sample(LlnKind::WickTripleAvg, spec, 1, &st, 0).unwrap();
        let b = lln_sample(LlnKind::WickTripleAvgAn, spec, 1, &st, 0).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
        assert!(lln_estimator(LlnKind::WickSquareAvg, spec, &[], &st).is_err());
    }

    #[test]
    fn commutator_cases() {
        let spec = GridSpec::new(64, 1.0).unwrap();
        let zero = SpectralField::zeros(spec);
        let mut rng = NoiseStream::new(1, 0, StreamKind::Trial).rng(0);
        let f = commutator_field(spec, 10, &mut rng);
        assert_eq!(commutator_defect(&zero, &f, 0.8, 4).unwrap(), 0.0);
        assert_eq!(commutator_defect(&f, &zero, 0.8, 4).unwrap(), 0.0);
        // supports in |n| <= M/3 keep every product inside |n| <= M
        let f = commutator_field(spec, 3, &mut rng);
        let g = commutator_field(spec, 3, &mut rng);
        assert!(commutator_defect(&f, &g, 0.8, 9).unwrap() < 1e-14);
        let big = commutator_defect(&commutator_field(spec, 10, &mut rng), &g, 0.8, 4).unwrap();
        assert!(big > 1e-6);
    }

    #[test]
    fn difference_norm_cases() {
        let spec = GridSpec::new(8, 1.0).unwrap();
        let a = vec![random_pairs(spec, 2, 20), random_pairs(spec, 2, 21)];
        assert_eq!(difference_norms(&a, &a, 0.9, 0).unwrap(), (0.0, 0.0));
        let shift = |t: &Vec<Vec<PairState>>, c: f64| -> Vec<Vec<PairState>> {
            t.iter()
                .map(|row| row.iter().map(|p| PairState { pos: p.pos.add(&SpectralField::constant(spec, c)).unwrap(), vel: p.vel.clone() }).collect())
                .collect()
        };
        let b = shift(&a, 0.3);
        let (cj, an) = difference_norms(&a, &b, 0.9, 1).unwrap();
        assert!((cj - 0.3).abs() < 1e-14 && (an - 0.3).abs() < 1e-14);
        let c = vec![random_pairs(spec, 2, 22), random_pairs(spec, 2, 23)];
        let ab = difference_norms(&a, &b, 0.9, 0).unwrap().0;
        let bc = difference_norms(&b, &c, 0.9, 0).unwrap().0;
        let ac = difference_norms(&a, &c, 0.9, 0).unwrap().0;
        assert!(ac <= ab + bc + 1e-12);
        assert!(difference_norms(&a, &b, 0.9, 5).is_err());
    }

    #[test]
    fn fit_rate_cases() {
        let ns = [8.0, 32.0, 128.0, 512.0];
        let exact: Vec<f64> = ns.iter().map(|n: &f64| 3.0 * n.powf(-0.5)).collect();
        let f = fit_rate(&ns, &exact).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        let flat = fit_rate(&ns, &[2.0; 4]).unwrap();
        assert!(flat.slope.abs() < 1e-12);
        assert!(fit_rate(&ns[..2], &exact[..2]).is_err());
        let mut rng = NoiseStream::new(4, 0, StreamKind::Trial).rng(0);
        let xs: Vec<f64> = (0..12).map(|i| 2f64.powi(i + 2)).collect();
        let z = normal_vec(&mut rng, xs.len());
        let noisy: Vec<f64> = xs.iter().zip(&z).map(|(n, z)| n.powf(-0.5) * (1.0 + 0.05 * z)).collect();
        let f = fit_rate(&xs, &noisy).unwrap();
        assert!((f.slope + 0.5).abs() < 4.0 * f.slope_se, "{} {}", f.slope, f.slope_se);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,y\n"));
    }

    #[test]
    fn ks_cases() {
        let a = [0.1, 0.5, 0.9, 1.3];
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b = [2.0, 3.0, 4.0, 5.0];
        assert_eq!(ks_two_sample(&a, &b).unwrap().statistic, 1.0);
        // reference value of Q at lambda = 1
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-6);
        let mut rng = NoiseStream::new(5, 0, StreamKind::Trial).rng(0);
        let x = normal_vec(&mut rng, 2000);
        let y = normal_vec(&mut rng, 2000);
        assert!(ks_two_sample(&x, &y).unwrap().p_value > 1e-3);
        let shifted: Vec<f64> = y.iter().map(|v| v + 0.3).collect();
        assert!(ks_two_sample(&x, &shifted).unwrap().p_value < 1e-6);
    }

    #[test]
    fn iact_of_ar1() {
        let mut rng = NoiseStream::new(6, 0, StreamKind::Trial).rng(0);
        let z = normal_vec(&mut rng, 100_000);
        let rho: f64 = 0.5;
        let mut x = 0.0;
        let series: Vec<f64> = z
            .iter()
            .map(|e| {
                x = rho * x + (1.0 - rho * rho).sqrt() * e;
                x
            })
            .collect();
        let tau = integrated_autocorrelation(&series);
        assert!((tau - 3.0).abs() < 0.3, "{tau}");
    }
}
