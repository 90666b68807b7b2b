//! Patch tiling and dihedral augmentation of aligned MS/HS training pairs.

use crate::error::{Error, Result};
use crate::spectral::SpectralCube;

/// An aligned multispectral input and hyperspectral target.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub msi: SpectralCube,
    pub hsi: SpectralCube,
}

impl Pair {
    pub fn new(msi: SpectralCube, hsi: SpectralCube) -> Result<Self> {
        if (msi.width(), msi.height()) != (hsi.width(), hsi.height()) {
            return Err(Error::shape(format!(
                "MSI is {}x{}, HSI is {}x{}",
                msi.width(),
                msi.height(),
                hsi.width(),
                hsi.height()
            )));
        }
        Ok(Self { msi, hsi })
    }
}

/// Copies the `size × size` window whose top-left corner is `(row, col)`.
pub fn crop(cube: &SpectralCube, row: usize, col: usize, size: usize) -> Result<SpectralCube> {
    if row + size > cube.height() || col + size > cube.width() {
        return Err(Error::shape(format!(
            "{size}x{size} window at ({row}, {col}) exceeds {}x{} cube",
            cube.width(),
            cube.height()
        )));
    }
    let mut data = Vec::with_capacity(size * size * cube.channels());
    for b in 0..cube.channels() {
        let band = cube.band(b);
        for r in row..row + size {
            data.extend_from_slice(&band[r * cube.width() + col..r * cube.width() + col + size]);
        }
    }
    SpectralCube::new(size, size, cube.channels(), data)?
        .with_wavelengths(cube.wavelengths_nm().map(<[f32]>::to_vec))
}

/// Non-overlapping `patch_size` tiles from the top-left in row-major order;
/// partial tiles at the right and bottom edges are dropped.
pub fn extract_patches(cube: &SpectralCube, patch_size: usize) -> Result<Vec<SpectralCube>> {
    if patch_size == 0 || patch_size > cube.width() || patch_size > cube.height() {
        return Err(Error::shape(format!(
            "patch size {patch_size} does not fit a {}x{} cube",
            cube.width(),
            cube.height()
        )));
    }
    let (rows, cols) = (cube.height() / patch_size, cube.width() / patch_size);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(crop(cube, r * patch_size, c * patch_size, patch_size)?);
        }
    }
    Ok(out)
}

/// The eight symmetries of the square: `rotations` quarter turns
/// (counter-clockwise), applied after an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dihedral {
    pub flip: bool,
    pub rotations: u8,
}

impl Dihedral {
    pub fn all() -> [Dihedral; 8] {
        let mut out = [Dihedral { flip: false, rotations: 0 }; 8];
        for (i, d) in out.iter_mut().enumerate() {
            *d = Dihedral {
                flip: i >= 4,
                rotations: (i % 4) as u8,
            };
        }
        out
    }

    /// Source coordinate read for destination `(row, col)` in an `n × n` image.
    pub fn source(&self, row: usize, col: usize, n: usize) -> (usize, usize) {
        let (mut r, mut c) = (row, col);
        // undo the rotations, then the flip
        for _ in 0..self.rotations {
            // a ccw quarter turn moves (r, c) to (n-1-c, r)
            (r, c) = (c, n - 1 - r);
        }
        if self.flip {
            c = n - 1 - c;
        }
        (r, c)
    }

    pub fn apply(&self, cube: &SpectralCube) -> Result<SpectralCube> {
        let n = cube.width();
        if cube.height() != n {
            return Err(Error::shape(format!(
                "dihedral transforms need a square patch, got {}x{}",
                cube.width(),
                cube.height()
            )));
        }
        let mut data = Vec::with_capacity(cube.data().len());
        for b in 0..cube.channels() {
            let band = cube.band(b);
            for r in 0..n {
                for c in 0..n {
                    let (sr, sc) = self.source(r, c, n);
                    data.push(band[sr * n + sc]);
                }
            }
        }
        SpectralCube::new(n, n, cube.channels(), data)?
            .with_wavelengths(cube.wavelengths_nm().map(<[f32]>::to_vec))
    }
}

/// The dihedral orbit of a square pair, same transform on both cubes.
pub fn augment8(pair: &Pair) -> Result<Vec<Pair>> {
    Dihedral::all()
        .iter()
        .map(|d| Pair::new(d.apply(&pair.msi)?, d.apply(&pair.hsi)?))
        .collect()
}

/// Tiles every pair and expands each tile into its eight variants.
pub fn build_training_set(pairs: &[Pair], patch_size: usize, augment: bool) -> Result<Vec<Pair>> {
    let mut out = Vec::new();
    for pair in pairs {
        let ms = extract_patches(&pair.msi, patch_size)?;
        let hs = extract_patches(&pair.hsi, patch_size)?;
        for (m, h) in ms.into_iter().zip(hs) {
            let p = Pair::new(m, h)?;
            if augment {
                out.extend(augment8(&p)?);
            } else {
                out.push(p);
            }
        }
    }
    Ok(out)
}
