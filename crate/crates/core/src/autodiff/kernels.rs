//! Array kernels behind the graph ops: GEMM, im2col convolution, pooling.
//!
//! All kernels are single threaded and accumulate in a fixed order, so the
//! same inputs always produce bit-identical outputs.

use crate::Scalar;

/// `c = a·b + beta·c` with `a` m×k, `b` k×n, `c` m×n, all row-major.
/// `a_t`/`b_t` say the stored buffer is the transpose (k×m / n×k).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Scalar],
    a_t: bool,
    b: &[Scalar],
    b_t: bool,
    beta: Scalar,
    c: &mut [Scalar],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: the asserted lengths match the strides for every index touched.
    unsafe {
        gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
        );
    }
}

#[cfg(not(feature = "single-precision"))]
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: *const f64,
    rsa: isize,
    csa: isize,
    b: *const f64,
    rsb: isize,
    csb: isize,
    beta: f64,
    c: *mut f64,
    rsc: isize,
) {
    matrixmultiply::dgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, 1);
}

#[cfg(feature = "single-precision")]
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_raw(
    m: usize,
    k: usize,
    n: usize,
    a: *const f32,
    rsa: isize,
    csa: isize,
    b: *const f32,
    rsb: isize,
    csb: isize,
    beta: f32,
    c: *mut f32,
    rsc: isize,
) {
    matrixmultiply::sgemm(m, k, n, 1.0, a, rsa, csa, b, rsb, csb, beta, c, rsc, 1);
}

/// Geometry of one 2-D convolution over a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub padding: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }

    fn in_len(&self) -> usize {
        self.in_ch * self.in_h * self.in_w
    }

    fn out_len(&self) -> usize {
        self.out_ch * self.out_pixels()
    }
}

/// Unfold one sample `[C,H,W]` into `cols[C·k·k, Hout·Wout]`.
fn im2col(g: &ConvGeom, input: &[Scalar], cols: &mut [Scalar]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.in_ch {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride) as isize - p + ky as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride) as isize - p + kx as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add `cols` back into a `[C,H,W]` gradient buffer.
fn col2im_add(g: &ConvGeom, cols: &[Scalar], grad_in: &mut [Scalar]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let p = g.padding as isize;
    let mut row = 0;
    for c in 0..g.in_ch {
        let plane = &mut grad_in[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride) as isize - p + ky as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..ow {
                        let ix = (ox * g.stride) as isize - p + kx as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            dst[ix as usize] += src[oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Batched convolution. `input` is `[B, C, H, W]`, `weight` `[O, C, k, k]`.
pub(crate) fn conv2d_forward(
    g: &ConvGeom,
    batch: usize,
    input: &[Scalar],
    weight: &[Scalar],
    bias: &[Scalar],
) -> Vec<Scalar> {
    let (pl, np) = (g.patch_len(), g.out_pixels());
    let mut cols = vec![0.0; pl * np];
    let mut out = vec![0.0; batch * g.out_len()];
    for b in 0..batch {
        im2col(g, &input[b * g.in_len()..(b + 1) * g.in_len()], &mut cols);
        let dst = &mut out[b * g.out_len()..(b + 1) * g.out_len()];
        for (oc, row) in dst.chunks_mut(np).enumerate() {
            row.fill(bias[oc]);
        }
        gemm(g.out_ch, pl, np, weight, false, &cols, false, 1.0, dst);
    }
    out
}

/// Gradients of a batched convolution. Each output is only computed when its
/// slot is `Some`; results are added into the given buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    batch: usize,
    input: &[Scalar],
    weight: &[Scalar],
    grad_out: &[Scalar],
    mut grad_in: Option<&mut [Scalar]>,
    mut grad_w: Option<&mut [Scalar]>,
    mut grad_b: Option<&mut [Scalar]>,
) {
    let (pl, np) = (g.patch_len(), g.out_pixels());
    let mut cols = vec![0.0; pl * np];
    let mut gcols = vec![0.0; pl * np];
    for b in 0..batch {
        let gout = &grad_out[b * g.out_len()..(b + 1) * g.out_len()];
        if let Some(gb) = grad_b.as_deref_mut() {
            for (oc, row) in gout.chunks(np).enumerate() {
                gb[oc] += row.iter().sum::<Scalar>();
            }
        }
        if let Some(gw) = grad_w.as_deref_mut() {
            im2col(g, &input[b * g.in_len()..(b + 1) * g.in_len()], &mut cols);
            gemm(g.out_ch, np, pl, gout, false, &cols, true, 1.0, gw);
        }
        if let Some(gi) = grad_in.as_deref_mut() {
            gemm(pl, g.out_ch, np, weight, true, gout, false, 0.0, &mut gcols);
            col2im_add(g, &gcols, &mut gi[b * g.in_len()..(b + 1) * g.in_len()]);
        }
    }
}

/// 2×2 max pooling with stride 2 over `[B, C, H, W]`; odd trailing rows and
/// columns are dropped. Returns the output and, per output, the flat input
/// index of the selected element (first maximum wins on ties).
pub(crate) fn maxpool2_forward(shape: &[usize], input: &[Scalar]) -> (Vec<Scalar>, Vec<usize>) {
    let (b, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut arg = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                arg.push(best);
            }
        }
    }
    (out, arg)
}

/// `y[B,out] = x[B,in] · Wᵀ + b` with `W` stored `[out, in]`.
pub(crate) fn dense_forward(
    batch: usize,
    in_f: usize,
    out_f: usize,
    x: &[Scalar],
    w: &[Scalar],
    bias: &[Scalar],
) -> Vec<Scalar> {
    let mut y = Vec::with_capacity(batch * out_f);
    for _ in 0..batch {
        y.extend_from_slice(bias);
    }
    gemm(batch, in_f, out_f, x, false, w, true, 1.0, &mut y);
    y
}
