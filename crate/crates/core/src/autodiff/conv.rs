//! Same-padded, stride-1 2-D convolution kernels on planar `[C, H, W]` buffers.
//!
//! Each kernel lowers the convolution to a matrix product over an im2col
//! buffer of shape `[in_ch·k·k, H·W]`.

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvGeom {
    fn plane(&self) -> usize {
        self.h * self.w
    }

    #[cfg(test)]
    fn tap(&self, o: usize, i: usize, ky: usize, kx: usize) -> usize {
        ((o * self.in_ch + i) * self.k + ky) * self.k + kx
    }
}

/// Valid index ranges for a tap offset `d` along an axis of length `n`:
/// destination positions `lo..hi`, source position = destination + d.
#[inline]
fn span(d: isize, n: usize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { n.saturating_sub(d as usize) } else { n };
    (lo, hi.max(lo))
}

/// Row `(i, ky, kx)` of the column matrix holds input plane `i` shifted by
/// the tap offset, zero where the tap falls outside the image.
fn im2col(g: ConvGeom, input: &[f32]) -> Vec<f32> {
    let plane = g.plane();
    let pad = (g.k / 2) as isize;
    let mut col = vec![0.0f32; g.in_ch * g.k * g.k * plane];
    for i in 0..g.in_ch {
        let src = &input[i * plane..(i + 1) * plane];
        for ky in 0..g.k {
            let dy = ky as isize - pad;
            let (y0, y1) = span(dy, g.h);
            for kx in 0..g.k {
                let dx = kx as isize - pad;
                let (x0, x1) = span(dx, g.w);
                let row = (i * g.k + ky) * g.k + kx;
                let dst = &mut col[row * plane..(row + 1) * plane];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let s0 = ((sy * g.w) as isize + x0 as isize + dx) as usize;
                    dst[y * g.w + x0..y * g.w + x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatter-adds every row back onto its input plane.
fn col2im(g: ConvGeom, col: &[f32]) -> Vec<f32> {
    let plane = g.plane();
    let pad = (g.k / 2) as isize;
    let mut out = vec![0.0f32; g.in_ch * plane];
    for i in 0..g.in_ch {
        let dst = &mut out[i * plane..(i + 1) * plane];
        for ky in 0..g.k {
            let dy = ky as isize - pad;
            let (y0, y1) = span(dy, g.h);
            for kx in 0..g.k {
                let dx = kx as isize - pad;
                let (x0, x1) = span(dx, g.w);
                let row = (i * g.k + ky) * g.k + kx;
                let src = &col[row * plane..(row + 1) * plane];
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let d0 = ((sy * g.w) as isize + x0 as isize + dx) as usize;
                    let d = &mut dst[d0..d0 + (x1 - x0)];
                    for (a, b) in d.iter_mut().zip(&src[y * g.w + x0..y * g.w + x1]) {
                        *a += b;
                    }
                }
            }
        }
    }
    out
}

/// Row-major `c = a·b (+ c if accumulate)`, where `a` is `m × k` (or its
/// transpose stored `k × m`) and `b` is `k × n` (or `n × k`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f32], a_t: bool, b: &[f32], b_t: bool, c: &mut [f32], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major buffers whose lengths are asserted to match.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn columns(g: ConvGeom, input: &[f32]) -> std::borrow::Cow<'_, [f32]> {
    if g.k == 1 {
        std::borrow::Cow::Borrowed(input)
    } else {
        std::borrow::Cow::Owned(im2col(g, input))
    }
}

pub(crate) fn forward(g: ConvGeom, input: &[f32], kernel: &[f32], bias: &[f32]) -> Vec<f32> {
    let plane = g.plane();
    let mut out = vec![0.0f32; g.out_ch * plane];
    for (o, dst) in out.chunks_mut(plane).enumerate() {
        dst.fill(bias[o]);
    }
    let col = columns(g, input);
    gemm(g.out_ch, g.in_ch * g.k * g.k, plane, kernel, false, &col, false, &mut out, true);
    out
}

/// Gradient w.r.t. the input: the transposed convolution of `dout`.
pub(crate) fn backward_input(g: ConvGeom, dout: &[f32], kernel: &[f32]) -> Vec<f32> {
    let rows = g.in_ch * g.k * g.k;
    let mut dcol = vec![0.0f32; rows * g.plane()];
    gemm(rows, g.out_ch, g.plane(), kernel, true, dout, false, &mut dcol, false);
    if g.k == 1 {
        dcol
    } else {
        col2im(g, &dcol)
    }
}

pub(crate) fn backward_kernel(g: ConvGeom, dout: &[f32], input: &[f32]) -> Vec<f32> {
    let rows = g.in_ch * g.k * g.k;
    let mut dk = vec![0.0f32; g.out_ch * rows];
    let col = columns(g, input);
    gemm(g.out_ch, g.plane(), rows, dout, false, &col, true, &mut dk, false);
    dk
}

pub(crate) fn backward_bias(g: ConvGeom, dout: &[f32]) -> Vec<f32> {
    let plane = g.plane();
    (0..g.out_ch)
        .map(|o| dout[o * plane..(o + 1) * plane].iter().sum())
        .collect()
}
