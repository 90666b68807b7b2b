//! Half-quadratic splitting with a single gradient step on the data term and
//! a plug-in denoiser standing in for the prior's proximal step.
//!
//! The solver state is kept in `f64`; cubes are converted on entry and exit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{DegradationOperator, SpectralCube};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    Identity,
    SpatialSpectralSmoothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HqsConfig {
    pub epsilon: f64,
    pub mu: f64,
    /// Prior weight, `γ / μ`.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once `‖x_{k+1} − x_k‖ / ‖x_k‖` drops below this.
    pub tol: f64,
    pub prior: Prior,
}

impl Default for HqsConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            mu: 0.0,
            lambda: 0.0,
            max_iters: 1000,
            tol: 1e-10,
            prior: Prior::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// `‖Φ x − y‖²` after the iteration.
    pub fidelity: f64,
    pub update_norm: f64,
}

#[derive(Debug, Clone)]
pub struct HqsOutcome {
    pub x: SpectralCube,
    pub trace: Vec<TraceRow>,
    pub converged: bool,
}

/// Planar `f64` cube used inside the solver.
#[derive(Debug, Clone, PartialEq)]
struct Planes {
    bands: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Planes {
    fn from_cube(c: &SpectralCube) -> Self {
        Self {
            bands: c.channels(),
            width: c.width(),
            height: c.height(),
            data: c.data().iter().map(|&v| v as f64).collect(),
        }
    }

    fn pixels(&self) -> usize {
        self.width * self.height
    }

    fn to_cube(&self, wavelengths: Option<Vec<f32>>) -> Result<SpectralCube> {
        SpectralCube::new(
            self.width,
            self.height,
            self.bands,
            self.data.iter().map(|&v| v as f32).collect(),
        )?
        .with_wavelengths(wavelengths)
    }

    fn mix(&self, phi: &DegradationOperator, transpose: bool) -> Planes {
        let (rows, cols) = (phi.ms_bands(), phi.hs_bands());
        let out_bands = if transpose { cols } else { rows };
        let n = self.pixels();
        let mut out = vec![0.0f64; out_bands * n];
        for o in 0..out_bands {
            let dst = &mut out[o * n..(o + 1) * n];
            for i in 0..self.bands {
                let w = if transpose { phi.at(i, o) } else { phi.at(o, i) } as f64;
                if w == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(&self.data[i * n..(i + 1) * n]) {
                    *d += w * s;
                }
            }
        }
        Planes {
            bands: out_bands,
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

fn check_shapes(x: &SpectralCube, h: &SpectralCube, y: &SpectralCube, phi: &DegradationOperator) -> Result<()> {
    if x.channels() != phi.hs_bands() || h.channels() != phi.hs_bands() {
        return Err(Error::shape(format!(
            "x/h must have {} bands, got {} and {}",
            phi.hs_bands(),
            x.channels(),
            h.channels()
        )));
    }
    if y.channels() != phi.ms_bands() {
        return Err(Error::shape(format!(
            "y must have {} bands, got {}",
            phi.ms_bands(),
            y.channels()
        )));
    }
    let dims = |c: &SpectralCube| (c.width(), c.height());
    if dims(x) != dims(h) || dims(x) != dims(y) {
        return Err(Error::shape("x, h and y must share spatial extents"));
    }
    Ok(())
}

fn x_step(x: &Planes, h: &Planes, y: &Planes, phi: &DegradationOperator, epsilon: f64, mu: f64) -> Planes {
    // x − ε [Φᵀ(Φx − y) + μ (x − h)]
    let mut residual = x.mix(phi, false);
    for (r, yv) in residual.data.iter_mut().zip(&y.data) {
        *r -= yv;
    }
    let grad = residual.mix(phi, true);
    let mut out = x.clone();
    for ((o, g), hv) in out.data.iter_mut().zip(&grad.data).zip(&h.data) {
        *o -= epsilon * (g + mu * (*o - hv));
    }
    out
}

/// One gradient step on `‖y − Φx‖² + μ‖h − x‖²`:
/// `[(1 − εμ)I − εΦᵀΦ] x + εΦᵀy + εμ h`.
pub fn hqs_x_step(
    x: &SpectralCube,
    h: &SpectralCube,
    y: &SpectralCube,
    phi: &DegradationOperator,
    epsilon: f64,
    mu: f64,
) -> Result<SpectralCube> {
    check_shapes(x, h, y, phi)?;
    let out = x_step(
        &Planes::from_cube(x),
        &Planes::from_cube(h),
        &Planes::from_cube(y),
        phi,
        epsilon,
        mu,
    );
    out.to_cube(x.wavelengths_nm().map(<[f32]>::to_vec))
}

/// Fixed smoother `S`: 3×3 spatial box average, then a (¼, ½, ¼) filter
/// along the band axis. Both use edge replication, so constants pass through.
fn smooth(x: &Planes) -> Planes {
    let (w, h, n) = (x.width, x.height, x.pixels());
    let mut spatial = vec![0.0f64; x.data.len()];
    for b in 0..x.bands {
        let src = &x.data[b * n..(b + 1) * n];
        let dst = &mut spatial[b * n..(b + 1) * n];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                        let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                        acc += src[rr * w + cc];
                    }
                }
                dst[r * w + c] = acc / 9.0;
            }
        }
    }
    let mut out = vec![0.0f64; x.data.len()];
    for b in 0..x.bands {
        let lo = b.saturating_sub(1);
        let hi = (b + 1).min(x.bands - 1);
        for p in 0..n {
            out[b * n + p] =
                0.25 * spatial[lo * n + p] + 0.5 * spatial[b * n + p] + 0.25 * spatial[hi * n + p];
        }
    }
    Planes {
        data: out,
        ..x.clone()
    }
}

fn denoise(x: &Planes, lambda: f64, prior: Prior) -> Planes {
    match prior {
        Prior::Identity => x.clone(),
        Prior::SpatialSpectralSmoothing => {
            let s = smooth(x);
            let mut out = x.clone();
            for (o, sv) in out.data.iter_mut().zip(&s.data) {
                *o = (*o + lambda * sv) / (1.0 + lambda);
            }
            out
        }
    }
}

/// Proximal surrogate of the prior: `(x + λ S(x)) / (1 + λ)` for the
/// smoothing prior, the identity otherwise.
pub fn denoise_prior(x: &SpectralCube, lambda: f64, prior: Prior) -> Result<SpectralCube> {
    if !(lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be >= 0, got {lambda}")));
    }
    denoise(&Planes::from_cube(x), lambda, prior).to_cube(x.wavelengths_nm().map(<[f32]>::to_vec))
}

/// Largest eigenvalue of `ΦᵀΦ` (equivalently of `ΦΦᵀ`) by power iteration.
pub fn gram_spectral_norm(phi: &DegradationOperator, steps: usize) -> f64 {
    let c = phi.ms_bands();
    let big_c = phi.hs_bands();
    // ΦΦᵀ is only c × c
    let mut g = vec![0.0f64; c * c];
    for i in 0..c {
        for k in 0..c {
            g[i * c + k] = (0..big_c).map(|j| phi.at(i, j) as f64 * phi.at(k, j) as f64).sum();
        }
    }
    let mut v = vec![1.0f64 / (c as f64).sqrt(); c];
    let mut lambda = 0.0;
    for _ in 0..steps {
        let w: Vec<f64> = (0..c).map(|i| (0..c).map(|k| g[i * c + k] * v[k]).sum()).collect();
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        v = w.into_iter().map(|a| a / norm).collect();
    }
    lambda
}

pub const POWER_ITERATION_STEPS: usize = 50;

impl HqsConfig {
    pub fn validate(&self, phi: &DegradationOperator) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.mu >= 0.0) || !(self.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "need epsilon > 0, mu >= 0, lambda >= 0; got {}, {}, {}",
                self.epsilon, self.mu, self.lambda
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be positive".into()));
        }
        let sigma = gram_spectral_norm(phi, POWER_ITERATION_STEPS);
        let bound = self.epsilon * (self.mu + sigma);
        if bound >= 2.0 {
            return Err(Error::Config(format!(
                "unstable step: epsilon * (mu + sigma_max) = {bound:.4} >= 2"
            )));
        }
        Ok(())
    }
}

/// Alternates the X-step and the denoiser starting from `x⁰ = h⁰ = Φᵀy`.
pub fn solve_hqs(y: &SpectralCube, phi: &DegradationOperator, cfg: &HqsConfig) -> Result<HqsOutcome> {
    cfg.validate(phi)?;
    if y.channels() != phi.ms_bands() {
        return Err(Error::shape(format!(
            "y has {} bands, operator expects {}",
            y.channels(),
            phi.ms_bands()
        )));
    }
    let yp = Planes::from_cube(y);
    let mut x = yp.mix(phi, true);
    let mut h = x.clone();
    let mut trace = Vec::new();
    let mut converged = false;

    for iter in 1..=cfg.max_iters {
        let next = x_step(&x, &h, &yp, phi, cfg.epsilon, cfg.mu);
        let diff: f64 = next.data.iter().zip(&x.data).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut residual = next.mix(phi, false);
        for (r, yv) in residual.data.iter_mut().zip(&yp.data) {
            *r -= yv;
        }
        let fidelity = residual.norm_sq();
        if !fidelity.is_finite() || next.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite iterate at iteration {iter}")));
        }
        let base = x.norm_sq().sqrt();
        let update_norm = if base > 0.0 { diff.sqrt() / base } else { diff.sqrt() };
        trace.push(TraceRow { iter, fidelity, update_norm });
        h = denoise(&next, cfg.lambda, cfg.prior);
        x = next;
        if update_norm < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(HqsOutcome {
        x: x.to_cube(Some(phi.hs_wavelengths_nm().to_vec()))?,
        trace,
        converged,
    })
}
