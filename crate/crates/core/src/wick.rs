//! Hermite polynomials with a variance parameter and the Wick products built
//! from them. All products are formed pointwise on the physical grid and
//! returned in spectral form; inputs are projected to `|n| <= M` first.

use crate::error::{invalid, Result};
use crate::grid::SpectralField;

/// `H_k(x; c)` for `k <= 4`.
pub fn hermite(k: usize, x: f64, c: f64) -> Result<f64> {
    let x2 = x * x;
    Ok(match k {
        0 => 1.0,
        1 => x,
        2 => x2 - c,
        3 => x * (x2 - 3.0 * c),
        4 => x2 * x2 - 6.0 * c * x2 + 3.0 * c * c,
        _ => return Err(invalid("k", format!("Hermite degree must be at most 4, got {k}"))),
    })
}

/// Variance parameter and truncation of a Wick product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WickContext {
    variance: f64,
    radius: u32,
}

impl WickContext {
    pub fn new(variance: f64, radius: u32) -> Result<Self> {
        if !(variance >= 0.0) || !variance.is_finite() {
            return Err(invalid("c", format!("variance must be finite and >= 0, got {variance}")));
        }
        Ok(Self { variance, radius })
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    fn grid(&self, f: &SpectralField) -> Vec<f64> {
        f.project(self.radius).to_grid()
    }
}

fn pointwise(
    spec_of: &SpectralField,
    a: &[f64],
    b: &[f64],
    op: impl Fn(f64, f64) -> f64,
) -> Result<SpectralField> {
    let values: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| op(x, y)).collect();
    SpectralField::from_grid(*spec_of.spec(), &values)
}

/// `:psi_k psi_j:`, which is `H_2(psi_j; c)` when `k = j` and the plain
/// product otherwise.
pub fn wick_pair(
    psi_k: &SpectralField,
    psi_j: &SpectralField,
    ctx: &WickContext,
    same_component: bool,
) -> Result<SpectralField> {
    psi_k.spec().check(psi_j.spec())?;
    let c = ctx.variance;
    let b = ctx.grid(psi_j);
    if same_component {
        return pointwise(psi_j, &b, &b, |_, y| y * y - c);
    }
    let a = ctx.grid(psi_k);
    pointwise(psi_j, &a, &b, |x, y| x * y)
}

/// `:psi_k^2 psi_j:`, which is `H_3(psi_j; c)` when `k = j` and
/// `H_2(psi_k; c) psi_j` otherwise.
pub fn wick_triple(
    psi_k: &SpectralField,
    psi_j: &SpectralField,
    ctx: &WickContext,
    same_component: bool,
) -> Result<SpectralField> {
    psi_k.spec().check(psi_j.spec())?;
    let c = ctx.variance;
    let b = ctx.grid(psi_j);
    if same_component {
        return pointwise(psi_j, &b, &b, |_, y| y * (y * y - 3.0 * c));
    }
    let a = ctx.grid(psi_k);
    pointwise(psi_j, &a, &b, |x, y| (x * x - c) * y)
}

fn wick_power(u: &SpectralField, k: usize, c: f64) -> Result<SpectralField> {
    WickContext::new(c, u32::MAX)?;
    let values = u
        .to_grid()
        .into_iter()
        .map(|x| hermite(k, x, c))
        .collect::<Result<Vec<_>>>()?;
    SpectralField::from_grid(*u.spec(), &values)
}

/// `:u^2: = H_2(u; c)`.
pub fn wick_square(u: &SpectralField, c: f64) -> Result<SpectralField> {
    wick_power(u, 2, c)
}

/// `:u^3: = H_3(u; c)`.
pub fn wick_cube(u: &SpectralField, c: f64) -> Result<SpectralField> {
    wick_power(u, 3, c)
}

/// `:u^4: = H_4(u; c)`.
pub fn wick_quartic(u: &SpectralField, c: f64) -> Result<SpectralField> {
    wick_power(u, 4, c)
}
