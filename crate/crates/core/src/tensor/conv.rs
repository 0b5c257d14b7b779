//! GEMM-based 2-D convolution: im2col forward, col2im backward.

use rayon::prelude::*;

use super::{Node, Op, Scalar, Tensor};
use crate::error::{Error, Result};

/// Output spatial extent for kernel `k`, padding `k/2`, given stride.
/// Stride 1 preserves the extent; stride 2 halves it (rounding up).
pub(crate) fn conv_out_extent(input: usize, kernel: usize, stride: usize) -> usize {
    (input + 2 * (kernel / 2) - kernel) / stride + 1
}

/// Unroll one image `[C, H, W]` into a `[C*kh*kw, out_h*out_w]` column
/// matrix with zero padding.
pub fn im2col<T: Scalar>(
    input: &[T],
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    col: &mut [T],
) {
    let out_h = (h + 2 * pad - kh) / stride + 1;
    let out_w = (w + 2 * pad - kw) / stride + 1;
    let col_w = out_h * out_w;
    debug_assert_eq!(col.len(), channels * kh * kw * col_w);

    for c in 0..channels {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let dst = &mut col[row * col_w..(row + 1) * col_w];
                for oy in 0..out_h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let seg = &mut dst[oy * out_w..(oy + 1) * out_w];
                    if iy < 0 || iy >= h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, o) in seg.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *o = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add a `[C*kh*kw, out_h*out_w]` column matrix back into an image
/// gradient `[C, H, W]` (the adjoint of [`im2col`]).
pub fn col2im<T: Scalar>(
    col: &[T],
    channels: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out: &mut [T],
) {
    let out_h = (h + 2 * pad - kh) / stride + 1;
    let out_w = (w + 2 * pad - kw) / stride + 1;
    let col_w = out_h * out_w;
    debug_assert_eq!(col.len(), channels * kh * kw * col_w);
    debug_assert_eq!(out.len(), channels * h * w);

    for c in 0..channels {
        let plane = &mut out[c * h * w..(c + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let row = (c * kh + ky) * kw + kx;
                let src = &col[row * col_w..(row + 1) * col_w];
                for oy in 0..out_h {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..out_w {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += src[oy * out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_op<'t, T: Scalar>(
    input: &Tensor<'t, T>,
    kernel: &Tensor<'t, T>,
    bias: &Tensor<'t, T>,
    stride: usize,
) -> Result<Tensor<'t, T>> {
    let (ish, ksh) = (input.shape().to_vec(), kernel.shape().to_vec());
    let [n, c, h, w] = match ish[..] {
        [n, c, h, w] => [n, c, h, w],
        _ => {
            return Err(Error::Shape(format!(
                "conv2d expects NCHW input, got shape {ish:?}"
            )))
        }
    };
    let [f, kc, kh, kw] = match ksh[..] {
        [f, kc, kh, kw] => [f, kc, kh, kw],
        _ => {
            return Err(Error::Shape(format!(
                "conv2d expects FCKhKw kernel, got shape {ksh:?}"
            )))
        }
    };
    if kc != c {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input shape {ish:?} has {c} channels, kernel shape {ksh:?} expects {kc}"
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 || kh == 0 || kw == 0 {
        return Err(Error::Shape(format!(
            "conv2d kernel extents must be odd and >= 1, got {kh}x{kw}"
        )));
    }
    if bias.shape() != [f] {
        return Err(Error::Shape(format!(
            "conv2d bias shape {:?} should be [{f}]",
            bias.shape()
        )));
    }
    if stride == 0 {
        return Err(Error::InvalidConfig("conv2d stride must be >= 1".into()));
    }

    let pad = kh / 2;
    let out_h = conv_out_extent(h, kh, stride);
    let out_w = conv_out_extent(w, kw, stride);
    let (ckk, ohw) = (c * kh * kw, out_h * out_w);

    let mut out = vec![T::zero(); n * f * ohw];
    {
        let nodes = input.tape.nodes.borrow();
        let x = &nodes[input.id].value;
        let k = &nodes[kernel.id].value;
        let b = &nodes[bias.id].value;

        out.par_chunks_mut(f * ohw)
            .enumerate()
            .for_each(|(bi, out_b)| {
                let mut col = vec![T::zero(); ckk * ohw];
                im2col(
                    &x[bi * c * h * w..(bi + 1) * c * h * w],
                    c,
                    h,
                    w,
                    kh,
                    kw,
                    stride,
                    pad,
                    &mut col,
                );
                for (fi, row) in out_b.chunks_mut(ohw).enumerate() {
                    row.fill(b[fi]);
                }
                // out_b [F, OHW] += kernel [F, CKK] @ col [CKK, OHW]
                T::gemm(false, false, f, ckk, ohw, T::one(), k, &col, T::one(), out_b);
            });
    }

    let ng = input.requires_grad() || kernel.requires_grad() || bias.requires_grad();
    Ok(input.tape.push(
        vec![n, f, out_h, out_w],
        out,
        ng,
        Op::Conv2d {
            input: input.id,
            kernel: kernel.id,
            bias: bias.id,
            stride,
            pad,
        },
    ))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_backward<T: Scalar>(
    nodes: &[Node<T>],
    out_id: usize,
    g: &[T],
    grads: &mut [Option<Vec<T>>],
    input: usize,
    kernel: usize,
    bias: usize,
    stride: usize,
    pad: usize,
) {
    let ish = &nodes[input].shape;
    let ksh = &nodes[kernel].shape;
    let osh = &nodes[out_id].shape;
    let (n, c, h, w) = (ish[0], ish[1], ish[2], ish[3]);
    let (f, kh, kw) = (ksh[0], ksh[2], ksh[3]);
    let (out_h, out_w) = (osh[2], osh[3]);
    let (ckk, ohw) = (c * kh * kw, out_h * out_w);
    let x = &nodes[input].value;
    let k = &nodes[kernel].value;

    if nodes[bias].needs_grad {
        let buf = grads[bias].get_or_insert_with(|| vec![T::zero(); f]);
        for gb in g.chunks(f * ohw) {
            for (fi, o) in buf.iter_mut().enumerate() {
                *o += gb[fi * ohw..(fi + 1) * ohw].iter().copied().sum();
            }
        }
    }

    if nodes[kernel].needs_grad {
        let buf = grads[kernel].get_or_insert_with(|| vec![T::zero(); f * ckk]);
        let mut col = vec![T::zero(); ckk * ohw];
        for bi in 0..n {
            im2col(
                &x[bi * c * h * w..(bi + 1) * c * h * w],
                c,
                h,
                w,
                kh,
                kw,
                stride,
                pad,
                &mut col,
            );
            let gb = &g[bi * f * ohw..(bi + 1) * f * ohw];
            // gk [F, CKK] += g_b [F, OHW] @ col^T [OHW, CKK]
            T::gemm(false, true, f, ohw, ckk, T::one(), gb, &col, T::one(), buf);
        }
    }

    if nodes[input].needs_grad {
        let buf = grads[input].get_or_insert_with(|| vec![T::zero(); n * c * h * w]);
        buf.par_chunks_mut(c * h * w).enumerate().for_each(|(bi, gx)| {
            let gb = &g[bi * f * ohw..(bi + 1) * f * ohw];
            let mut gcol = vec![T::zero(); ckk * ohw];
            // gcol [CKK, OHW] = kernel^T [CKK, F] @ g_b [F, OHW]
            T::gemm(true, false, ckk, f, ohw, T::one(), k, gb, T::zero(), &mut gcol);
            col2im(&gcol, c, h, w, kh, kw, stride, pad, gx);
        });
    }
}
