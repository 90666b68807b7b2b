//! Reconstruction quality: per-band CC, PSNR and SSIM averaged over bands,
//! and the mean per-pixel spectral angle. Data range is taken as `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::SpectralCube;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cc: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub sam_degrees: f64,
    /// Bands where either cube is constant, so CC was substituted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constant_bands: Vec<usize>,
}

impl MetricsReport {
    /// Band-wise mean of several reports, e.g. over test scenes.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mut constant_bands: Vec<usize> = reports.iter().flat_map(|r| r.constant_bands.clone()).collect();
        constant_bands.sort_unstable();
        constant_bands.dedup();
        Some(MetricsReport {
            cc: avg(|r| r.cc),
            psnr_db: avg(|r| r.psnr_db),
            ssim: avg(|r| r.ssim),
            sam_degrees: avg(|r| r.sam_degrees),
            constant_bands,
        })
    }
}

fn check(xhat: &SpectralCube, x: &SpectralCube) -> Result<()> {
    let dims = |c: &SpectralCube| (c.width(), c.height(), c.channels());
    if dims(xhat) != dims(x) {
        return Err(Error::shape(format!(
            "cubes differ: {:?} vs {:?}",
            dims(xhat),
            dims(x)
        )));
    }
    Ok(())
}

/// Pearson correlation of one band pair; `None` when either band is constant.
pub fn band_cc(a: &[f32], b: &[f32]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&u, &v) in a.iter().zip(b) {
        let (du, dv) = (u as f64 - ma, v as f64 - mb);
        sab += du * dv;
        saa += du * du;
        sbb += dv * dv;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn band_psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse = a
        .iter()
        .zip(b)
        .map(|(&u, &v)| (u as f64 - v as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

/// Normalized 1-D Gaussian taps of odd length `size`.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / s).collect()
}

/// Window length actually used: 11, shrunk to the largest odd size that fits.
pub fn ssim_window(width: usize, height: usize) -> usize {
    let m = SSIM_WINDOW.min(width).min(height);
    if m % 2 == 0 {
        m - 1
    } else {
        m
    }
}

/// Separable "valid" filtering of a `w × h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w - k + 1, h - k + 1);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * src[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Single-scale SSIM of one band, averaged over the valid window positions.
pub fn band_ssim(a: &[f32], b: &[f32], width: usize, height: usize) -> f64 {
    let k = ssim_window(width, height);
    let taps = gaussian_taps(k, SSIM_SIGMA);
    let x: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
    let f = |p: &[f64]| filter_valid(p, width, height, &taps);
    let (mx, my, mxx, myy, mxy) = (f(&x), f(&y), f(&xx), f(&yy), f(&xy));
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cov = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    total / mx.len() as f64
}

/// Mean spectral angle in degrees; the norm product is floored at `1e-12`.
pub fn sam_degrees(xhat: &SpectralCube, x: &SpectralCube) -> Result<f64> {
    check(xhat, x)?;
    let n = x.pixels();
    let mut dot = vec![0.0f64; n];
    let mut na = vec![0.0f64; n];
    let mut nb = vec![0.0f64; n];
    for b in 0..x.channels() {
        for (p, (&u, &v)) in xhat.band(b).iter().zip(x.band(b)).enumerate() {
            let (u, v) = (u as f64, v as f64);
            dot[p] += u * v;
            na[p] += u * u;
            nb[p] += v * v;
        }
    }
    let total: f64 = (0..n)
        .map(|p| {
            let norms = na[p].sqrt() * nb[p].sqrt();
            if norms < NORM_EPSILON {
                return (dot[p] / NORM_EPSILON).clamp(-1.0, 1.0).acos();
            }
            // atan2 form: exactly zero for identical spectra, where acos rounds
            let sin = (na[p] * nb[p] - dot[p] * dot[p]).max(0.0).sqrt();
            sin.atan2(dot[p])
        })
        .sum();
    Ok((total / n as f64).to_degrees())
}

pub fn metrics(xhat: &SpectralCube, x: &SpectralCube) -> Result<MetricsReport> {
    check(xhat, x)?;
    let bands = x.channels() as f64;
    let (mut cc, mut psnr, mut ssim) = (0.0, 0.0, 0.0);
    let mut constant_bands = Vec::new();
    for b in 0..x.channels() {
        let (u, v) = (xhat.band(b), x.band(b));
        cc += match band_cc(u, v) {
            Some(r) => r,
            None => {
                constant_bands.push(b);
                if u == v {
                    1.0
                } else {
                    0.0
                }
            }
        };
        psnr += band_psnr(u, v);
        ssim += band_ssim(u, v, x.width(), x.height());
    }
    Ok(MetricsReport {
        cc: cc / bands,
        psnr_db: psnr / bands,
        ssim: (ssim / bands).clamp(0.0, 1.0),
        sam_degrees: sam_degrees(xhat, x)?,
        constant_bands,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_cubes() {
        let data: Vec<f32> = (0..16 * 16 * 3).map(|v| ((v * 7919) % 101) as f32 / 101.0).collect();
        let x = SpectralCube::new(16, 16, 3, data).unwrap();
        let r = metrics(&x, &x).unwrap();
        assert!((r.cc - 1.0).abs() < 1e-12);
        assert_eq!(r.psnr_db, PSNR_CAP_DB);
        assert!((r.ssim - 1.0).abs() < 1e-12);
        assert_eq!(r.sam_degrees, 0.0);
        assert!(r.constant_bands.is_empty());
    }

    #[test]
    fn uniform_error_of_a_tenth_is_twenty_db() {
        let x = SpectralCube::new(12, 12, 2, vec![0.4; 288]).unwrap();
        let y = x.map(|v| v + 0.1);
        let r = metrics(&y, &x).unwrap();
        assert!((r.psnr_db - 20.0).abs() < 1e-5, "{}", r.psnr_db);
    }

    #[test]
    fn constant_bands_are_flagged() {
        let x = SpectralCube::new(12, 12, 1, vec![0.4; 144]).unwrap();
        let same = metrics(&x, &x).unwrap();
        assert_eq!(same.cc, 1.0);
        assert_eq!(same.constant_bands, vec![0]);
        let other = metrics(&x.map(|v| v * 0.5), &x).unwrap();
        assert_eq!(other.cc, 0.0);
        assert_eq!(other.constant_bands, vec![0]);
    }

    #[test]
    fn small_images_shrink_the_ssim_window() {
        assert_eq!(ssim_window(64, 64), 11);
        assert_eq!(ssim_window(8, 20), 7);
        assert_eq!(ssim_window(5, 5), 5);
        let x = SpectralCube::new(4, 4, 1, (0..16).map(|v| v as f32 / 16.0).collect()).unwrap();
        assert!((metrics(&x, &x).unwrap().ssim - 1.0).abs() < 1e-12);
    }
}
