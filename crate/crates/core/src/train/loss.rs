//! L1 + spectral-angle losses.
//!
//! [`loss_reference`] walks pixel by pixel and evaluates the angle with an
//! `arccos` of the normalized inner product. [`loss_fast`] unitizes every
//! pixel in bulk and uses `a·b = 1 − ½‖a − b‖²` for unit vectors, which needs
//! only plane-wise array passes.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the spectral-angle term.
    pub alpha: f32,
    /// Added to per-pixel norms before dividing.
    pub norm_epsilon: f32,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            norm_epsilon: 1e-12,
        }
    }
}

/// Which objective the trainer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// L1 plus the bulk spectral-angle term.
    L1Sam,
    /// L1 only.
    L1,
}

fn check(xhat: &Tensor, x: &Tensor) -> Result<(usize, usize)> {
    if xhat.shape() != x.shape() {
        return Err(Error::shape(format!(
            "prediction {:?} and target {:?} differ",
            xhat.shape(),
            x.shape()
        )));
    }
    let (c, h, w) = x.dims3()?;
    Ok((c, h * w))
}

/// Per-pixel loop form: `mean|x̂ − x| + α · mean_j arccos(⟨x̂_j, x_j⟩ / (‖x̂_j‖‖x_j‖ + ε))`.
pub fn loss_reference(xhat: &Tensor, x: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let (c, n) = check(xhat, x)?;
    let (a, b) = (xhat.data(), x.data());
    let eps = cfg.norm_epsilon as f64;
    let mut l1 = 0.0f64;
    let mut sam = 0.0f64;
    for p in 0..n {
        let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
        for ch in 0..c {
            let (u, v) = (a[ch * n + p] as f64, b[ch * n + p] as f64);
            l1 += (u - v).abs();
            dot += u * v;
            na += u * u;
            nb += v * v;
        }
        let cos = dot / (na.sqrt() * nb.sqrt() + eps);
        sam += cos.clamp(-1.0, 1.0).acos();
    }
    Ok(l1 / (c * n) as f64 + cfg.alpha as f64 * sam / n as f64)
}

/// Inverse pixel norms of both cubes and the summed absolute difference, in one read of each.
/// Also returns the norms of `a`.
fn fused_norms_l1(a: &[f32], b: &[f32], n: usize, eps: f32) -> (Vec<f32>, Vec<f32>, Vec<f32>, f64) {
    let (mut sa, mut sb) = (vec![0.0f32; n], vec![0.0f32; n]);
    let mut l1 = 0.0f64;
    for (pa, pb) in a.chunks_exact(n).zip(b.chunks_exact(n)) {
        for (((ca, cb), qa), qb) in pa.chunks(4096).zip(pb.chunks(4096)).zip(sa.chunks_mut(4096)).zip(sb.chunks_mut(4096)) {
            let mut part = 0.0f32;
            for (((u, v), x), y) in ca.iter().zip(cb).zip(qa.iter_mut()).zip(qb.iter_mut()) {
                *x += u * u;
                *y += v * v;
                part += (u - v).abs();
            }
            l1 += part as f64;
        }
    }
    let na: Vec<f32> = sa.iter().map(|v| v.sqrt()).collect();
    let ia = na.iter().map(|v| 1.0 / (v + eps)).collect();
    let ib = sb.iter().map(|v| 1.0 / (v.sqrt() + eps)).collect();
    (ia, ib, na, l1)
}

/// Bulk form of [`loss_reference`]; equal to it up to rounding.
pub fn loss_fast(xhat: &Tensor, x: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let (c, n) = check(xhat, x)?;
    let (a, b) = (xhat.data(), x.data());
    let (ia, ib, _, l1) = fused_norms_l1(a, b, n, cfg.norm_epsilon);
    let mut dist = vec![0.0f32; n];
    for (pa, pb) in a.chunks_exact(n).zip(b.chunks_exact(n)) {
        for ((((d, u), v), s), t) in dist.iter_mut().zip(pa).zip(pb).zip(&ia).zip(&ib) {
            let e = u * s - v * t;
            *d += e * e;
        }
    }
    let sam: f64 = dist
        .iter()
        .map(|d| (1.0 - 0.5 * d).clamp(-1.0, 1.0).acos() as f64)
        .sum();
    Ok(l1 / (c * n) as f64 + cfg.alpha as f64 * sam / n as f64)
}

/// Value and gradient w.r.t. `xhat` of the chosen objective.
pub fn loss_with_grad(xhat: &Tensor, x: &Tensor, cfg: &LossConfig, kind: LossKind) -> Result<(f64, Vec<f32>)> {
    let (c, n) = check(xhat, x)?;
    let (a, b) = (xhat.data(), x.data());
    let total = (c * n) as f32;
    let mut grad: Vec<f32> = a
        .iter()
        .zip(b)
        .map(|(u, v)| {
            if u > v {
                1.0 / total
            } else if u < v {
                -1.0 / total
            } else {
                0.0
            }
        })
        .collect();
    let (ia, ib, na, l1) = fused_norms_l1(a, b, n, cfg.norm_epsilon);
    let l1 = l1 / total as f64;
    if kind == LossKind::L1 {
        return Ok((l1, grad));
    }

    let mut dist = vec![0.0f32; n];
    let mut ua_dot_g = vec![0.0f32; n];
    for (pa, pb) in a.chunks_exact(n).zip(b.chunks_exact(n)) {
        for p in 0..n {
            let (ua, ub) = (pa[p] * ia[p], pb[p] * ib[p]);
            let d = ua - ub;
            dist[p] += d * d;
            // g = ∂u/∂a' = −(a' − b')
            ua_dot_g[p] -= ua * d;
        }
    }
    let mut sam = 0.0f64;
    // per-pixel factor α/n · d arccos(u)/du, zero where the clamp is active
    let mut coef = vec![0.0f32; n];
    for p in 0..n {
        let u = 1.0 - 0.5 * dist[p];
        sam += u.clamp(-1.0, 1.0).acos() as f64;
        if u.abs() < 1.0 && na[p] > 0.0 {
            coef[p] = -cfg.alpha / n as f32 / (1.0 - u * u).sqrt();
        }
    }
    for (ch, (ga, pb)) in grad.chunks_exact_mut(n).zip(b.chunks_exact(n)).enumerate() {
        let pa = &a[ch * n..(ch + 1) * n];
        for p in 0..n {
            if coef[p] == 0.0 {
                continue;
            }
            let ua = pa[p] * ia[p];
            let g = -(ua - pb[p] * ib[p]);
            // back through a' = a / (‖a‖ + ε)
            let s = na[p] + cfg.norm_epsilon;
            let da = (g - ua * ua_dot_g[p] * s / na[p]) / s;
            ga[p] += coef[p] * da;
        }
    }
    Ok((l1 + cfg.alpha as f64 * sam / n as f64, grad))
}

/// Records the loss of `pred` against a fixed `target` on the tape.
pub fn record_loss(tape: &mut Tape, pred: Var, target: &Tensor, cfg: &LossConfig, kind: LossKind) -> Result<Var> {
    let (value, grad) = loss_with_grad(tape.value(pred), target, cfg, kind)?;
    tape.fused_scalar(pred, value as f32, grad)
}
