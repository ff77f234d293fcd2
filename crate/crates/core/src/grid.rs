//! Fourier representation of real fields on the torus `T^2 = (R / 2 pi Z)^2`.
//!
//! Coefficients are stored in FFT order: index `i` along an axis carries the
//! mode `i` for `i <= n/2` and `i - n` otherwise, so the representable modes
//! are `{-n/2 + 1, ..., n/2}` per axis. The torus carries the normalized
//! Lebesgue measure, hence `f(x) = sum_n f_n e^{i n.x}` and the L2 norm is the
//! plain root-mean-square of grid values.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result, SigmaError};
use crate::fft;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n_grid: usize,
    mass: f64,
}

impl GridSpec {
    pub fn new(n_grid: usize, mass: f64) -> Result<Self> {
        if n_grid < 4 || !n_grid.is_multiple_of(2) {
            return Err(invalid("n_grid", format!("must be even and >= 4, got {n_grid}")));
        }
        if n_grid > u16::MAX as usize {
            return Err(invalid("n_grid", "must fit the snapshot header (u16)"));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(invalid("m", format!("mass must be positive, got {mass}")));
        }
        Ok(Self { n_grid, mass })
    }

    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn nyquist(&self) -> usize {
        self.n_grid / 2
    }

    /// Number of coefficients (`n_grid^2`).
    pub fn len(&self) -> usize {
        self.n_grid * self.n_grid
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis_mode(&self, i: usize) -> i64 {
        if i <= self.nyquist() {
            i as i64
        } else {
            i as i64 - self.n_grid as i64
        }
    }

    pub fn axis_index(&self, k: i64) -> Option<usize> {
        let nyq = self.nyquist() as i64;
        if k <= -nyq || k > nyq {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.n_grid as i64) as usize)
        }
    }

    pub fn mode(&self, idx: usize) -> Mode {
        Mode::new(
            self.axis_mode(idx / self.n_grid),
            self.axis_mode(idx % self.n_grid),
        )
    }

    pub fn index_of(&self, mode: Mode) -> Option<usize> {
        Some(self.axis_index(mode.k1)? * self.n_grid + self.axis_index(mode.k2)?)
    }

    /// Index of the coefficient paired with `idx` by `n -> -n` (mod the grid).
    pub fn conj_index(&self, idx: usize) -> usize {
        let n = self.n_grid;
        let (i, j) = (idx / n, idx % n);
        ((n - i) % n) * n + (n - j) % n
    }

    pub fn is_nyquist(&self, mode: Mode) -> bool {
        let nyq = self.nyquist() as i64;
        mode.k1 == nyq || mode.k2 == nyq
    }

    /// `m + |n|^2`, the symbol of `m - Laplacian`.
    pub fn lambda(&self, mode: Mode) -> f64 {
        self.mass + mode.norm_sq() as f64
    }

    pub(crate) fn check(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(SigmaError::GridMismatch(format!(
                "(n_grid {}, m {}) vs (n_grid {}, m {})",
                self.n_grid, self.mass, other.n_grid, other.mass
            )));
        }
        Ok(())
    }

    /// Representatives of the independent half lattice (excluding Nyquist
    /// modes): the zero mode and every `n` with `k1 > 0` or `k1 = 0, k2 > 0`.
    pub fn half_lattice(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&idx| {
            let m = self.mode(idx);
            !self.is_nyquist(m) && (m.k1 > 0 || (m.k1 == 0 && m.k2 >= 0))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Mode {
    pub k1: i64,
    pub k2: i64,
}

impl Mode {
    pub fn new(k1: i64, k2: i64) -> Self {
        Self { k1, k2 }
    }

    pub fn norm_sq(&self) -> i64 {
        self.k1 * self.k1 + self.k2 * self.k2
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// Japanese bracket `<n> = (1 + |n|^2)^{1/2}`.
    pub fn bracket(&self) -> f64 {
        (1.0 + self.norm_sq() as f64).sqrt()
    }

    pub fn within(&self, radius: u32) -> bool {
        self.norm_sq() as i128 <= (radius as i128) * (radius as i128)
    }
}

/// Complex Fourier coefficients of a real field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    spec: GridSpec,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            coeffs: vec![Complex64::new(0.0, 0.0); spec.len()],
        }
    }

    pub fn from_coeffs(spec: GridSpec, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != spec.len() {
            return Err(SigmaError::GridMismatch(format!(
                "{} coefficients for a {}^2 grid",
                coeffs.len(),
                spec.n_grid()
            )));
        }
        Ok(Self { spec, coeffs })
    }

    /// Forward transform of real grid values `values[a * n + b] = f(2 pi a / n, 2 pi b / n)`.
    pub fn from_grid(spec: GridSpec, values: &[f64]) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(SigmaError::GridMismatch(format!(
                "{} grid values for a {}^2 grid",
                values.len(),
                spec.n_grid()
            )));
        }
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft::plan(spec.n_grid()).forward(&mut data);
        let norm = 1.0 / spec.len() as f64;
        for c in &mut data {
            *c *= norm;
        }
        Ok(Self { spec, coeffs: data })
    }

    /// Constant field `c`.
    pub fn constant(spec: GridSpec, c: f64) -> Self {
        let mut f = Self::zeros(spec);
        f.coeffs[0] = Complex64::new(c, 0.0);
        f
    }

    /// Real grid values of the field.
    pub fn to_grid(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        fft::plan(self.spec.n_grid()).inverse(&mut data);
        data.into_iter().map(|c| c.re).collect()
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn coeff(&self, mode: Mode) -> Complex64 {
        self.spec
            .index_of(mode)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    /// Sets the coefficient of `mode` and its conjugate partner. The zero
    /// mode keeps only the real part.
    pub fn set_mode(&mut self, mode: Mode, value: Complex64) -> Result<()> {
        let idx = self
            .spec
            .index_of(mode)
            .ok_or_else(|| invalid("mode", format!("{mode:?} is not representable")))?;
        let cidx = self.spec.conj_index(idx);
        if cidx == idx {
            self.coeffs[idx] = Complex64::new(value.re, 0.0);
        } else {
            self.coeffs[idx] = value;
            self.coeffs[cidx] = value.conj();
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Checks `f(-n) = conj(f(n))` up to `tol` times the largest coefficient.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let scale = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let bound = tol * scale.max(f64::MIN_POSITIVE);
        (0..self.spec.len()).all(|idx| {
            let cidx = self.spec.conj_index(idx);
            (self.coeffs[cidx] - self.coeffs[idx].conj()).norm() <= bound
        })
    }

    /// Pointwise multiplication of the coefficients by a real radial symbol.
    pub fn apply_multiplier(&self, symbol: impl Fn(Mode) -> f64) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| c * symbol(self.spec.mode(idx)))
            .collect();
        Self {
            spec: self.spec,
            coeffs,
        }
    }

    /// Frequency projector `P_M` onto `|n| <= M`.
    pub fn project(&self, radius: u32) -> Self {
        self.apply_multiplier(|m| if m.within(radius) { 1.0 } else { 0.0 })
    }

    /// `Id - P_M`.
    pub fn project_perp(&self, radius: u32) -> Self {
        self.apply_multiplier(|m| if m.within(radius) { 0.0 } else { 1.0 })
    }

    /// Applies the I-operator with multiplier [`i_multiplier`].
    pub fn apply_i_operator(&self, s: f64, radius: u32) -> Result<Self> {
        check_i_params(s, radius)?;
        Ok(self.apply_multiplier(|m| i_multiplier(s, radius, m)))
    }

    /// `(sum_n <n>^{2s} |f_n|^2)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| self.spec.mode(idx).bracket().powf(2.0 * s) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Grid-maximum proxy for the `W^{s, inf}` norm: `max_x |(<grad>^s f)(x)|`.
    pub fn sup_sobolev_norm(&self, s: f64) -> f64 {
        self.apply_multiplier(|m| m.bracket().powf(s))
            .to_grid()
            .into_iter()
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Spatial mean, i.e. the zero mode.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `<f, g>_{L^2}` with the normalized measure.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.spec.check(&other.spec)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a * b.conj()).re)
            .sum())
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            spec: self.spec,
            coeffs: self.coeffs.iter().map(|c| c * a).collect(),
        }
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) -> Result<()> {
        self.spec.check(&other.spec)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y * a;
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// Pointwise product computed on the physical grid.
    pub fn grid_product(&self, other: &Self) -> Result<Self> {
        self.spec.check(&other.spec)?;
        let a = self.to_grid();
        let b = other.to_grid();
        let prod: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Self::from_grid(self.spec, &prod)
    }

    /// Random real field with independent complex Gaussian coefficients,
    /// `E|f_n|^2 = variance(n)`, on the half lattice; unmatched Nyquist modes
    /// stay zero. The zero mode is real with variance `variance(0)`.
    pub fn random_gaussian<R: Rng + ?Sized>(
        spec: GridSpec,
        rng: &mut R,
        variance: impl Fn(Mode) -> f64,
    ) -> Self {
        let mut f = Self::zeros(spec);
        let reps: Vec<usize> = spec.half_lattice().collect();
        for idx in reps {
            let mode = spec.mode(idx);
            let var = variance(mode);
            if var <= 0.0 {
                continue;
            }
            if idx == 0 {
                let z: f64 = rng.sample(StandardNormal);
                f.coeffs[0] = Complex64::new(var.sqrt() * z, 0.0);
            } else {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                let sd = (0.5 * var).sqrt();
                let c = Complex64::new(sd * a, sd * b);
                f.coeffs[idx] = c;
                f.coeffs[spec.conj_index(idx)] = c.conj();
            }
        }
        f
    }
}

fn check_i_params(s: f64, radius: u32) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
    }
    if radius < 1 {
        return Err(invalid("M", "I-operator needs M >= 1"));
    }
    Ok(())
}

/// Symbol of the I-operator: `1` for `|n| <= M`, `(M / |n|)^{1-s}` beyond.
///
/// The smooth transition region `M < |n| < 2M` is replaced by the continuous
/// power-law branch, which agrees with both prescribed regimes and is
/// non-increasing in `|n|`.
pub fn i_multiplier(s: f64, radius: u32, mode: Mode) -> f64 {
    let r = mode.norm();
    let m = radius as f64;
    if r <= m {
        1.0
    } else {
        (m / r).powf(1.0 - s)
    }
}

/// l2-average `(N^{-1} sum_j v_j^2)^{1/2}`.
pub fn a_n_norm(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Double-index l2-average `(N^{-2} sum_{j,k} v_{jk}^2)^{1/2}` of an `N x N` table.
pub fn a_n2_norm(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = matrix.iter().flatten().map(|v| v * v).sum();
    (sum / (n * n) as f64).sqrt()
}

/// Set of modes the dynamics live on: `|n| <= M`, non-Nyquist, and, when
/// dealiasing is on, inside the 2/3-rule box `3 |k_i| < n_grid`.
#[derive(Debug, Clone)]
pub struct ActiveSet {
    spec: GridSpec,
    radius: u32,
    dealias: bool,
    mask: Vec<bool>,
    indices: Vec<usize>,
}

impl ActiveSet {
    pub fn new(spec: GridSpec, radius: u32, dealias: bool) -> Self {
        let n = spec.n_grid() as i64;
        let mask: Vec<bool> = (0..spec.len())
            .map(|idx| {
                let m = spec.mode(idx);
                m.within(radius)
                    && !spec.is_nyquist(m)
                    && (!dealias || (3 * m.k1.abs() < n && 3 * m.k2.abs() < n))
            })
            .collect();
        let indices = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &keep)| keep.then_some(i))
            .collect();
        Self {
            spec,
            radius,
            dealias,
            mask,
            indices,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn dealias(&self) -> bool {
        self.dealias
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Whether every active mode `|n| <= M` survives the dealiasing box.
    pub fn is_full_ball(&self) -> bool {
        let spec = self.spec;
        (0..spec.len()).all(|idx| {
            let m = spec.mode(idx);
            !m.within(self.radius) || spec.is_nyquist(m) || self.mask[idx]
        })
    }

    pub fn project_in_place(&self, f: &mut SpectralField) {
        for (c, &keep) in f.coeffs.iter_mut().zip(&self.mask) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn project(&self, f: &SpectralField) -> SpectralField {
        let mut out = f.clone();
        self.project_in_place(&mut out);
        out
    }
}

/// Phase-space point `(u, d_t u)` of one wave component.
#[derive(Debug, Clone, PartialEq)]
pub struct PairState {
    pub pos: SpectralField,
    pub vel: SpectralField,
}

impl PairState {
    pub fn new(pos: SpectralField, vel: SpectralField) -> Result<Self> {
        pos.spec().check(vel.spec())?;
        Ok(Self { pos, vel })
    }

    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            pos: SpectralField::zeros(spec),
            vel: SpectralField::zeros(spec),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        self.pos.spec()
    }

    /// `H^s x H^{s-1}` norm.
    pub fn energy_norm(&self, s: f64) -> f64 {
        (self.pos.sobolev_norm(s).powi(2) + self.vel.sobolev_norm(s - 1.0).powi(2)).sqrt()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            pos: self.pos.sub(&other.pos)?,
            vel: self.vel.sub(&other.vel)?,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            pos: self.pos.add(&other.pos)?,
            vel: self.vel.add(&other.vel)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.pos
            .coeffs()
            .iter()
            .chain(self.vel.coeffs())
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// `N` wave components on one grid sharing a time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEnsemble {
    components: Vec<PairState>,
}

impl ComponentEnsemble {
    pub fn new(components: Vec<PairState>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| invalid("N", "an ensemble needs at least one component"))?;
        let spec = *first.spec();
        for c in &components {
            spec.check(c.spec())?;
        }
        Ok(Self { components })
    }

    pub fn zeros(spec: GridSpec, n: usize) -> Result<Self> {
        Self::new(vec![PairState::zeros(spec); n])
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn spec(&self) -> &GridSpec {
        self.components[0].spec()
    }

    pub fn components(&self) -> &[PairState] {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut [PairState] {
        &mut self.components
    }

    pub fn into_components(self) -> Vec<PairState> {
        self.components
    }

    pub fn positions(&self) -> impl Iterator<Item = &SpectralField> {
        self.components.iter().map(|c| &c.pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GridSpec {
        GridSpec::new(16, 1.0).unwrap()
    }

    fn random(seed: u64) -> SpectralField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralField::random_gaussian(spec(), &mut rng, |m| 1.0 / (1.0 + m.norm_sq() as f64))
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(7, 1.0).is_err());
        assert!(GridSpec::new(2, 1.0).is_err());
        assert!(GridSpec::new(8, 0.0).is_err());
        assert!(GridSpec::new(8, -1.0).is_err());
    }

    #[test]
    fn mode_index_round_trip() {
        let s = spec();
        for idx in 0..s.len() {
            let m = s.mode(idx);
            assert_eq!(s.index_of(m), Some(idx));
            let c = s.mode(s.conj_index(idx));
            if !s.is_nyquist(m) {
                assert_eq!(c, Mode::new(-m.k1, -m.k2));
            }
        }
        assert_eq!(s.index_of(Mode::new(-8, 0)), None);
    }

    #[test]
    fn fft_round_trip() {
        let s = spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..s.len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let f = SpectralField::from_grid(s, &values).unwrap();
        assert!(f.is_hermitian(1e-12));
        let back = f.to_grid();
        let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn single_mode_grid_values() {
        let s = spec();
        let mut f = SpectralField::zeros(s);
        f.set_mode(Mode::new(1, 0), Complex64::new(0.5, 0.0)).unwrap();
        let g = f.to_grid();
        let n = s.n_grid();
        for a in 0..n {
            for b in 0..n {
                let x = 2.0 * std::f64::consts::PI * a as f64 / n as f64;
                assert!((g[a * n + b] - x.cos()).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn projection_examples() {
        let f = random(1);
        let big = (f.spec().nyquist() as f64 * 2f64.sqrt()).ceil() as u32;
        assert_eq!(f.project(big), f);
        let p0 = f.project(0);
        for (idx, c) in p0.coeffs().iter().enumerate() {
            if idx != 0 {
                assert_eq!(*c, Complex64::new(0.0, 0.0));
            }
        }
        assert_eq!(p0.mean(), f.mean());

        let mut single = SpectralField::zeros(spec());
        single.set_mode(Mode::new(3, 4), Complex64::new(1.0, 2.0)).unwrap();
        assert!(single.project(4).is_zero());
        assert_eq!(single.project(5), single);

        let sum = f.project(3).add(&f.project_perp(3)).unwrap();
        assert_eq!(sum, f);
        assert!(f.project(3).is_hermitian(0.0));
    }

    #[test]
    fn i_multiplier_examples() {
        assert_eq!(i_multiplier(0.5, 4, Mode::new(2, 0)), 1.0);
        assert!((i_multiplier(0.5, 4, Mode::new(8, 0)) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((i_multiplier(0.9, 1, Mode::new(0, 10)) - 10f64.powf(-0.1)).abs() < 1e-15);
        assert!((i_multiplier(0.9, 1, Mode::new(0, 10)) - 0.79433).abs() < 1e-5);
        // boundary of the inner region
        assert_eq!(i_multiplier(0.3, 5, Mode::new(3, 4)), 1.0);
    }

    #[test]
    fn i_multiplier_monotone() {
        let mut modes: Vec<Mode> = (-40..=40)
            .flat_map(|a| (-40..=40).map(move |b| Mode::new(a, b)))
            .collect();
        modes.sort_by_key(|m| m.norm_sq());
        for &s in &[0.2, 0.6, 0.9] {
            for &radius in &[1u32, 3, 8] {
                let vals: Vec<f64> = modes.iter().map(|&m| i_multiplier(s, radius, m)).collect();
                assert!(vals.windows(2).all(|w| w[1] <= w[0]));
                assert!(vals.iter().all(|&v| v > 0.0 && v <= 1.0));
            }
        }
    }

    #[test]
    fn i_operator_cases() {
        let f = random(2);
        let low = f.project(3);
        assert_eq!(low.apply_i_operator(0.5, 3).unwrap(), low);
        assert!(SpectralField::zeros(spec())
            .apply_i_operator(0.5, 3)
            .unwrap()
            .is_zero());
        assert!(f.apply_i_operator(1.0, 3).is_err());
        assert!(f.apply_i_operator(0.5, 0).is_err());
        assert!(f.apply_i_operator(0.5, 2).unwrap().is_hermitian(1e-14));
    }

    #[test]
    fn sobolev_norm_examples() {
        let s = spec();
        assert_eq!(SpectralField::zeros(s).sobolev_norm(1.3), 0.0);
        // sqrt(2) cos(x) has unit L2 norm.
        let mut f = SpectralField::zeros(s);
        f.set_mode(Mode::new(1, 0), Complex64::new(0.5 * 2f64.sqrt(), 0.0)).unwrap();
        let grid = f.to_grid();
        let rms = (grid.iter().map(|v| v * v).sum::<f64>() / grid.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-13);
        assert!((f.sobolev_norm(1.0) - 2f64.sqrt()).abs() < 1e-13);
        assert!((f.sobolev_norm(0.0) - rms).abs() < 1e-13);
    }

    #[test]
    fn parseval_for_random_fields() {
        let f = random(5);
        let grid = f.to_grid();
        let rms = (grid.iter().map(|v| v * v).sum::<f64>() / grid.len() as f64).sqrt();
        assert!((f.sobolev_norm(0.0) - rms).abs() < 1e-12 * rms);
        assert!(f.sup_sobolev_norm(0.0) >= rms);
        assert!(f.sup_sobolev_norm(0.7) >= f.sobolev_norm(0.7) * (1.0 - 1e-12));
    }

    #[test]
    fn sup_norm_of_constant() {
        let c = SpectralField::constant(spec(), -2.5);
        assert!((c.sup_sobolev_norm(0.37) - 2.5).abs() < 1e-14);
        assert_eq!(SpectralField::zeros(spec()).sup_sobolev_norm(-0.1), 0.0);
    }

    #[test]
    fn a_n_norm_examples() {
        assert!((a_n_norm(&[3.0, 4.0]) - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((a_n_norm(&[2.5; 7]) - 2.5).abs() < 1e-15);
        let m = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        assert!((a_n2_norm(&m) - (30.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn random_fields_are_hermitian_and_skip_nyquist() {
        let f = random(9);
        assert!(f.is_hermitian(0.0));
        for idx in 0..f.spec().len() {
            if f.spec().is_nyquist(f.spec().mode(idx)) {
                assert_eq!(f.coeffs()[idx], Complex64::new(0.0, 0.0));
            }
        }
        let g = f.to_grid();
        let back = SpectralField::from_grid(*f.spec(), &g).unwrap();
        for (a, b) in back.coeffs().iter().zip(f.coeffs()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn mismatched_specs_rejected() {
        let a = SpectralField::zeros(spec());
        let b = SpectralField::zeros(GridSpec::new(8, 1.0).unwrap());
        let c = SpectralField::zeros(GridSpec::new(16, 2.0).unwrap());
        assert!(a.add(&b).is_err());
        assert!(a.add(&c).is_err());
        assert!(PairState::new(a.clone(), b).is_err());
        assert!(ComponentEnsemble::new(vec![]).is_err());
    }

    #[test]
    fn active_set_dealias_box() {
        let s = GridSpec::new(32, 1.0).unwrap();
        let full = ActiveSet::new(s, 20, false);
        let dealiased = ActiveSet::new(s, 20, true);
        assert!(dealiased.indices().len() < full.indices().len());
        for &idx in dealiased.indices() {
            let m = s.mode(idx);
            assert!(m.k1.abs() <= 10 && m.k2.abs() <= 10);
        }
        assert!(ActiveSet::new(s, 8, true).is_full_ball());
        assert!(!dealiased.is_full_ball());
    }
}
