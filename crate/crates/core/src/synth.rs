//! Synthetic hyperspectral scenes from a linear mixing model.
//!
//! Endmember spectra are sums of two or three Gaussian bumps along the band
//! axis, rescaled into `[0.05, 0.95]`. Abundance maps are a softmax over
//! smoothed random fields, so every pixel is a convex combination of the
//! endmembers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::presets::wavelength_grid;
use crate::spectral::SpectralCube;

/// Wavelength range assigned to synthetic bands.
pub const SYNTH_RANGE_NM: (f32, f32) = (400.0, 700.0);
/// Softmax sharpness applied to standardized fields.
const ABUNDANCE_TEMPERATURE: f32 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthScene {
    pub cube: SpectralCube,
    /// `n_endmembers × channels`, row-major.
    pub endmembers: Vec<f32>,
    /// `n_endmembers × height × width`, planar.
    pub abundances: Vec<f32>,
}

fn endmember<R: Rng>(rng: &mut R, channels: usize) -> Vec<f32> {
    let bumps = rng.random_range(2..=3);
    let span = (channels.max(2) - 1) as f32;
    let params: Vec<(f32, f32, f32)> = (0..bumps)
        .map(|_| {
            let center = rng.random_range(0.0..=span);
            let width = rng.random_range(span / 12.0..=span / 4.0).max(0.5);
            let amp = rng.random_range(0.3..=1.0);
            (center, width, amp)
        })
        .collect();
    let raw: Vec<f32> = (0..channels)
        .map(|j| {
            params
                .iter()
                .map(|&(c, w, a)| a * (-0.5 * ((j as f32 - c) / w).powi(2)).exp())
                .sum()
        })
        .collect();
    let max = raw.iter().copied().fold(f32::MIN_POSITIVE, f32::max);
    raw.into_iter().map(|v| 0.05 + 0.9 * v / max).collect()
}

/// One pass of a 3×3 mean filter with edge replication.
fn box3(src: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut out = vec![0.0; src.len()];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for dr in [-1isize, 0, 1] {
                for dc in [-1isize, 0, 1] {
                    let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                    let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                    acc += src[rr * w + cc];
                }
            }
            out[r * w + c] = acc / 9.0;
        }
    }
    out
}

/// Smoothing passes: enough for blobs a few pixels wide, growing with image size.
fn smoothing_passes(width: usize, height: usize) -> usize {
    (width.max(height) / 8).clamp(2, 16)
}

fn standardized_field<R: Rng>(rng: &mut R, w: usize, h: usize) -> Vec<f32> {
    let mut f: Vec<f32> = (0..w * h).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    for _ in 0..smoothing_passes(w, h) {
        f = box3(&f, w, h);
    }
    let n = f.len() as f32;
    let mean = f.iter().sum::<f32>() / n;
    let std = (f.iter().map(|v| (v - mean).powi(2)).sum::<f32>() / n).sqrt();
    let std = if std > 0.0 { std } else { 1.0 };
    f.into_iter().map(|v| (v - mean) / std).collect()
}

pub fn synth_scene_parts(
    seed: u64,
    width: usize,
    height: usize,
    channels: usize,
    n_endmembers: usize,
) -> Result<SynthScene> {
    if n_endmembers < 2 {
        return Err(Error::Config(format!("need at least 2 endmembers, got {n_endmembers}")));
    }
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::shape(format!("empty scene {width}x{height}x{channels}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let endmembers: Vec<f32> = (0..n_endmembers).flat_map(|_| endmember(&mut rng, channels)).collect();
    let plane = width * height;
    let fields: Vec<Vec<f32>> = (0..n_endmembers)
        .map(|_| standardized_field(&mut rng, width, height))
        .collect();
    let mut abundances = vec![0.0f32; n_endmembers * plane];
    for p in 0..plane {
        let max = fields.iter().map(|f| f[p]).fold(f32::MIN, f32::max);
        let exps: Vec<f32> = fields
            .iter()
            .map(|f| (ABUNDANCE_TEMPERATURE * (f[p] - max)).exp())
            .collect();
        let total: f32 = exps.iter().sum();
        for (e, v) in exps.iter().enumerate() {
            abundances[e * plane + p] = v / total;
        }
    }
    let mut data = vec![0.0f32; channels * plane];
    for b in 0..channels {
        let dst = &mut data[b * plane..(b + 1) * plane];
        for e in 0..n_endmembers {
            let s = endmembers[e * channels + b];
            for (d, a) in dst.iter_mut().zip(&abundances[e * plane..(e + 1) * plane]) {
                *d += s * a;
            }
        }
        for d in dst.iter_mut() {
            *d = d.clamp(0.0, 1.0);
        }
    }
    let wavelengths = wavelength_grid(SYNTH_RANGE_NM.0, SYNTH_RANGE_NM.1, channels);
    let cube = SpectralCube::new(width, height, channels, data)?.with_wavelengths(Some(wavelengths))?;
    Ok(SynthScene {
        cube,
        endmembers,
        abundances,
    })
}

/// Deterministic synthetic HSI with values in `[0, 1]` and bands spread over 400–700 nm.
pub fn synth_scene(seed: u64, width: usize, height: usize, channels: usize, n_endmembers: usize) -> Result<SpectralCube> {
    Ok(synth_scene_parts(seed, width, height, channels, n_endmembers)?.cube)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_bounded() {
        let a = synth_scene(7, 24, 16, 8, 3).unwrap();
        let b = synth_scene(7, 24, 16, 8, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, synth_scene(8, 24, 16, 8, 3).unwrap());
        assert!(a.data().iter().all(|v| (0.05 - 1e-6..=0.95 + 1e-6).contains(v)));
        assert_eq!(a.wavelengths_nm().unwrap()[7], 700.0);
    }

    #[test]
    fn abundances_sum_to_one() {
        let s = synth_scene_parts(3, 10, 10, 6, 4).unwrap();
        for p in 0..100 {
            let total: f32 = (0..4).map(|e| s.abundances[e * 100 + p]).sum();
            assert!((total - 1.0).abs() < 1e-5);
        }
        for e in 0..4 {
            let row = &s.endmembers[e * 6..(e + 1) * 6];
            let max = row.iter().copied().fold(0.0, f32::max);
            assert!((max - 0.95).abs() < 1e-6);
            assert!(row.iter().all(|v| *v >= 0.05 - 1e-6));
        }
    }

    #[test]
    fn rejects_single_endmember() {
        assert!(synth_scene(0, 4, 4, 4, 1).is_err());
    }
}
