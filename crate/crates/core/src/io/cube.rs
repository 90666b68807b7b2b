//! `HSRC` cube files: magic, version, `W`, `H`, `C`, an optional wavelength
//! table, then the band-major `f32` payload.

use std::path::Path;

use super::{put_f32s, write_atomic, Reader};
use crate::error::{Error, Result};
use crate::spectral::SpectralCube;

pub const CUBE_MAGIC: &[u8; 4] = b"HSRC";
pub const CUBE_VERSION: u32 = 1;

pub fn encode_cube(cube: &SpectralCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(21 + 4 * (cube.data().len() + cube.channels()));
    out.extend_from_slice(CUBE_MAGIC);
    out.extend_from_slice(&CUBE_VERSION.to_le_bytes());
    for d in [cube.width(), cube.height(), cube.channels()] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    match cube.wavelengths_nm() {
        Some(wl) => {
            out.push(1);
            put_f32s(&mut out, wl);
        }
        None => out.push(0),
    }
    put_f32s(&mut out, cube.data());
    out
}

fn dim(r: &mut Reader<'_>, field: &str) -> Result<usize> {
    let v = r.u32(field)?;
    if v == 0 {
        return Err(Error::format(field, "must be positive"));
    }
    Ok(v as usize)
}

pub fn decode_cube(bytes: &[u8]) -> Result<SpectralCube> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4, "magic")?;
    if magic != CUBE_MAGIC {
        return Err(Error::format("magic", format!("expected \"HSRC\", found {magic:?}")));
    }
    let version = r.u32("version")?;
    if version != CUBE_VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let w = dim(&mut r, "width")?;
    let h = dim(&mut r, "height")?;
    let c = dim(&mut r, "channels")?;
    let wavelengths = match r.u8("has_wavelengths")? {
        0 => None,
        1 => Some(r.f32s(c, "wavelengths")?),
        v => return Err(Error::format("has_wavelengths", format!("expected 0 or 1, found {v}"))),
    };
    let n = w
        .checked_mul(h)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| Error::format("payload", "dimensions overflow"))?;
    let data = r.f32s(n, "payload")?;
    r.finish("payload")?;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format("payload", format!("non-finite value at element {i}")));
    }
    SpectralCube::new(w, h, c, data)?.with_wavelengths(wavelengths)
}

pub fn write_cube(path: &Path, cube: &SpectralCube) -> Result<()> {
    write_atomic(path, &encode_cube(cube))
}

pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    decode_cube(&std::fs::read(path)?)
}
