//! Binary field snapshots.
//!
//! Layout: `b"SGWV"`, version `u16`, `n_grid` `u16`, 8 reserved zero bytes,
//! then `n_grid^2` coefficients as little-endian `f64` pairs `(re, im)` in
//! row-major mode order. The mass is not stored; readers supply it.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Result, SigmaError};
use crate::grid::{GridSpec, PairState, SpectralField};

pub const MAGIC: [u8; 4] = *b"SGWV";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

pub fn write_field<W: Write>(field: &SpectralField, mut out: W) -> Result<()> {
    let n = field.spec().n_grid();
    let n16 = u16::try_from(n).map_err(|_| SigmaError::Format(format!("n_grid {n} does not fit the header")))?;
    let mut buf = Vec::with_capacity(HEADER_LEN + 16 * field.coeffs().len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&n16.to_le_bytes());
    buf.extend_from_slice(&[0u8; 8]);
    for c in field.coeffs() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_field<R: Read>(mut input: R, mass: f64) -> Result<SpectralField> {
    let mut header = [0u8; HEADER_LEN];
    input
        .read_exact(&mut header)
        .map_err(|e| SigmaError::Format(format!("truncated header: {e}")))?;
    if header[..4] != MAGIC {
        return Err(SigmaError::Format("bad magic, expected SGWV".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(SigmaError::Format(format!("unsupported version {version}")));
    }
    let n = u16::from_le_bytes([header[6], header[7]]) as usize;
    let spec = GridSpec::new(n, mass)?;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != 16 * spec.len() {
        return Err(SigmaError::Format(format!(
            "expected {} coefficient bytes for n_grid {n}, found {}",
            16 * spec.len(),
            body.len()
        )));
    }
    let coeffs = body
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
            Complex64::new(re, im)
        })
        .collect();
    SpectralField::from_coeffs(spec, coeffs)
}

pub fn save_field(field: &SpectralField, path: &Path) -> Result<()> {
    write_field(field, fs::File::create(path)?)
}

pub fn load_field(path: &Path, mass: f64) -> Result<SpectralField> {
    read_field(std::io::BufReader::new(fs::File::open(path)?), mass)
}

/// Writes `u{j}_pos.sgwv` and `u{j}_vel.sgwv` for every component into `dir`.
pub fn save_state(states: &[PairState], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (j, s) in states.iter().enumerate() {
        save_field(&s.pos, &dir.join(format!("u{j}_pos.sgwv")))?;
        save_field(&s.vel, &dir.join(format!("u{j}_vel.sgwv")))?;
    }
    Ok(())
}

/// Reads `n` components written by [`save_state`].
pub fn load_state(dir: &Path, n: usize, mass: f64) -> Result<Vec<PairState>> {
    (0..n)
        .map(|j| {
            let pos = load_field(&dir.join(format!("u{j}_pos.sgwv")), mass)?;
            let vel = load_field(&dir.join(format!("u{j}_vel.sgwv")), mass)?;
            PairState::new(pos, vel)
        })
        .collect()
}
