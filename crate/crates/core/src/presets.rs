//! Built-in sensor response functions for simulation and tests.

use crate::spectral::Srf;

/// `n` evenly spaced wavelengths from `from_nm` to `to_nm` inclusive.
pub fn wavelength_grid(from_nm: f32, to_nm: f32, n: usize) -> Vec<f32> {
    match n {
        0 => Vec::new(),
        1 => vec![from_nm],
        _ => {
            let step = (to_nm as f64 - from_nm as f64) / (n - 1) as f64;
            (0..n).map(|i| (from_nm as f64 + step * i as f64) as f32).collect()
        }
    }
}

/// (center nm, sigma nm) of the blue, green and red curves.
pub const CAVE_LIKE_BANDS: [(f32, f32); 3] = [(440.0, 25.0), (580.0, 41.0), (610.0, 31.0)];

/// Three Gaussian RGB-camera curves sampled every 5 nm over 380–720 nm.
///
/// At a 1% coverage threshold, blue alone covers 400–450 nm, blue and green
/// overlap over 460–510 nm, and green and red cover 520–700 nm.
pub fn cave_like_srf() -> Srf {
    let samples: Vec<f32> = (0..=68).map(|i| 380.0 + 5.0 * i as f32).collect();
    let mut responses = Vec::with_capacity(samples.len() * 3);
    for &wl in &samples {
        for (center, sigma) in CAVE_LIKE_BANDS {
            let z = (wl - center) / sigma;
            responses.push((-0.5 * z * z).exp());
        }
    }
    Srf::new(samples, responses, 3).expect("preset SRF is valid")
}

/// Flat-top band passes (nm) of four Sentinel-2-like bands: blue, green, red, NIR.
pub const SENTINEL2_LIKE_BANDS: [(f32, f32); 4] = [(455.0, 525.0), (540.0, 580.0), (650.0, 680.0), (785.0, 900.0)];

/// Trapezoidal curves with 5 nm ramps, sampled every 5 nm over 400–1050 nm.
/// The passbands leave gaps, so several HS bands fall outside every curve.
pub fn sentinel2_like_srf() -> Srf {
    let samples: Vec<f32> = (0..=130).map(|i| 400.0 + 5.0 * i as f32).collect();
    let ramp = 5.0;
    let mut responses = Vec::with_capacity(samples.len() * 4);
    for &wl in &samples {
        for (lo, hi) in SENTINEL2_LIKE_BANDS {
            let r = if wl < lo - ramp || wl > hi + ramp {
                0.0
            } else if wl < lo {
                (wl - (lo - ramp)) / ramp
            } else if wl > hi {
                ((hi + ramp) - wl) / ramp
            } else {
                1.0
            };
            responses.push(r);
        }
    }
    Srf::new(samples, responses, 4).expect("preset SRF is valid")
}
