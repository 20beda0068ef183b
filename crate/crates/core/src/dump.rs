//! Binary grid dumps and CSV slices. The byte layout is documented in
//! `docs/FORMATS.md`; everything is little-endian.
//!
//! ```text
//! magic    8 bytes  "LMBGRID\0"
//! version  u32      1
//! flags    u32      bit 0: density block present
//! nz, nt   u64 ×2   field grid shape
//! z0, dz   f64 ×2   field Z axis
//! t0, dt   f64 ×2   T axis
//! omega_s  nz·nt × (re f64, im f64), z-major
//! omega_c  same layout
//! [density block]
//! nzd      u64      density Z stations
//! zd0, dzd f64 ×2   density Z axis
//! nd       u64      Doppler nodes
//! nodes    nd × f64
//! weights  nd × f64
//! rho      nzd·nd × 9 × (re, im), row-major 3×3 per entry
//! ```

use crate::types::{Axis, DensityField, FieldGrid};
use crate::DensityMatrix3;
use num_complex::Complex64 as C64;
use std::fmt::Write as _;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const MAGIC: [u8; 8] = *b"LMBGRID\0";
pub const VERSION: u32 = 1;
pub const FLAG_DENSITY: u32 = 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a grid dump (bad magic)")]
    BadMagic,
    #[error("unsupported dump version {0}")]
    Version(u32),
    #[error("corrupt dump: {0}")]
    Corrupt(String),
}

fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64(w: &mut impl Write, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_c64s(w: &mut impl Write, vs: &[C64]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(vs.len() * 16);
    for v in vs {
        buf.extend_from_slice(&v.re.to_le_bytes());
        buf.extend_from_slice(&v.im.to_le_bytes());
    }
    w.write_all(&buf)
}

fn get<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

fn get_u32(r: &mut impl Read) -> io::Result<u32> {
    Ok(u32::from_le_bytes(get(r)?))
}

fn get_u64(r: &mut impl Read) -> io::Result<u64> {
    Ok(u64::from_le_bytes(get(r)?))
}

fn get_f64(r: &mut impl Read) -> io::Result<f64> {
    Ok(f64::from_le_bytes(get(r)?))
}

fn get_f64s(r: &mut impl Read, n: usize) -> io::Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn get_c64s(r: &mut impl Read, n: usize) -> io::Result<Vec<C64>> {
    let flat = get_f64s(r, 2 * n)?;
    Ok(flat.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect())
}

/// Guard against absurd sizes in a corrupt header before allocating.
fn checked_len(parts: &[u64]) -> Result<usize, DumpError> {
    let mut n: u64 = 1;
    for p in parts {
        n = n
            .checked_mul(*p)
            .filter(|n| *n <= (1 << 34))
            .ok_or_else(|| DumpError::Corrupt(format!("array size {parts:?} out of range")))?;
    }
    Ok(n as usize)
}

pub fn write_grid(w: &mut impl Write, fields: &FieldGrid, density: Option<&DensityField>) -> Result<(), DumpError> {
    w.write_all(&MAGIC)?;
    put_u32(w, VERSION)?;
    put_u32(w, if density.is_some() { FLAG_DENSITY } else { 0 })?;
    put_u64(w, fields.z_axis.len as u64)?;
    put_u64(w, fields.t_axis.len as u64)?;
    for v in [fields.z_axis.start, fields.z_axis.step, fields.t_axis.start, fields.t_axis.step] {
        put_f64(w, v)?;
    }
    put_c64s(w, &fields.omega_s)?;
    put_c64s(w, &fields.omega_c)?;
    if let Some(d) = density {
        put_u64(w, d.z_axis.len as u64)?;
        put_f64(w, d.z_axis.start)?;
        put_f64(w, d.z_axis.step)?;
        put_u64(w, d.delta_nodes.len() as u64)?;
        for v in d.delta_nodes.iter().chain(&d.weights) {
            put_f64(w, *v)?;
        }
        for rho in &d.rho {
            put_c64s(w, &rho.entries)?;
        }
    }
    Ok(())
}

pub fn read_grid(r: &mut impl Read) -> Result<(FieldGrid, Option<DensityField>), DumpError> {
    if get::<8>(r)? != MAGIC {
        return Err(DumpError::BadMagic);
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(DumpError::Version(version));
    }
    let flags = get_u32(r)?;
    let nz = get_u64(r)?;
    let nt = get_u64(r)?;
    let (z0, dz, t0, dt) = (get_f64(r)?, get_f64(r)?, get_f64(r)?, get_f64(r)?);
    let n = checked_len(&[nz, nt])?;
    let z_axis = Axis {
        start: z0,
        step: dz,
        len: nz as usize,
    };
    let t_axis = Axis {
        start: t0,
        step: dt,
        len: nt as usize,
    };
    let fields = FieldGrid {
        z_axis,
        t_axis,
        omega_s: get_c64s(r, n)?,
        omega_c: get_c64s(r, n)?,
    };
    if flags & FLAG_DENSITY == 0 {
        return Ok((fields, None));
    }
    let nzd = get_u64(r)?;
    let (zd0, dzd) = (get_f64(r)?, get_f64(r)?);
    let nd = get_u64(r)?;
    let m = checked_len(&[nzd, nd, 9])?;
    let delta_nodes = get_f64s(r, nd as usize)?;
    let weights = get_f64s(r, nd as usize)?;
    let flat = get_c64s(r, m)?;
    let rho = flat
        .chunks_exact(9)
        .map(|c| DensityMatrix3 {
            entries: c.try_into().unwrap(),
        })
        .collect();
    let density = DensityField {
        z_axis: Axis {
            start: zd0,
            step: dzd,
            len: nzd as usize,
        },
        delta_nodes,
        weights,
        rho,
    };
    Ok((fields, Some(density)))
}

/// Field slice along T at Z row `k`.
pub fn field_slice_at_z(fields: &FieldGrid, k: usize) -> String {
    let mut out = String::from("t,signal_re,signal_im,signal_abs,control_re,control_im,control_abs\n");
    let (s, c) = (fields.signal_row(k), fields.control_row(k));
    for i in 0..fields.t_axis.len {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fields.t_axis.at(i),
            s[i].re,
            s[i].im,
            s[i].norm(),
            c[i].re,
            c[i].im,
            c[i].norm()
        );
    }
    out
}

/// Field slice along Z at T sample `i`.
pub fn field_slice_at_t(fields: &FieldGrid, i: usize) -> String {
    let mut out = String::from("z,signal_re,signal_im,signal_abs,control_re,control_im,control_abs\n");
    for k in 0..fields.z_axis.len {
        let s = fields.omega_s[fields.index(k, i)];
        let c = fields.omega_c[fields.index(k, i)];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fields.z_axis.at(k),
            s.re,
            s.im,
            s.norm(),
            c.re,
            c.im,
            c.norm()
        );
    }
    out
}

/// Doppler-averaged density along Z.
pub fn density_profile(density: &DensityField) -> String {
    let mut out = String::from("z,rho11,rho22,rho33,rho12_re,rho12_im,rho12_abs\n");
    for k in 0..density.z_axis.len {
        let r = density.averaged(k);
        let c = r[(0, 1)];
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            density.z_axis.at(k),
            r[(0, 0)].re,
            r[(1, 1)].re,
            r[(2, 2)].re,
            c.re,
            c.im,
            c.norm()
        );
    }
    out
}

/// Density of a single Z station against Doppler node.
pub fn density_slice_at_z(density: &DensityField, k: usize) -> String {
    let mut out = String::from("delta,weight,rho11,rho22,rho33,rho12_re,rho12_im\n");
    for (d, (delta, w)) in density.delta_nodes.iter().zip(&density.weights).enumerate() {
        let r = density.at(k, d);
        let _ = writeln!(
            out,
            "{delta},{w},{},{},{},{},{}",
            r[(0, 0)].re,
            r[(1, 1)].re,
            r[(2, 2)].re,
            r[(0, 1)].re,
            r[(0, 1)].im
        );
    }
    out
}
