//! Batched NCHW kernels with explicit backward passes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `c = a * b` (`beta = 0`) or `c += a * b` (`beta = 1`), all row-major.
/// `a` is `m x k` (or its transpose when `trans_a`), `b` is `k x n` (or transposed).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths checked above match the strides passed.
    unsafe {
        matrixmultiply::dgemm(
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

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    cin: usize,
    h: usize,
    w: usize,
    k: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeometry {
    fn rows(&self) -> usize {
        self.cin * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output columns `ox` whose input column `ox + kx - pad` lies inside the row.
fn valid_cols(g: &ConvGeometry, kx: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kx).min(g.ow);
    let hi = (g.w + g.pad).saturating_sub(kx).min(g.ow).max(lo);
    (lo, hi)
}

/// Unfolds one sample into a `cin*k*k x oh*ow` matrix.
fn im2col(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let mut col = Vec::with_capacity(g.rows() * g.cols());
    let zeros = |col: &mut Vec<f64>, n: usize| col.resize(col.len() + n, 0.0);
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let (lo, hi) = valid_cols(g, kx);
                for oy in 0..g.oh {
                    let iy = oy as isize + ky as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize || hi == lo {
                        zeros(&mut col, g.ow);
                        continue;
                    }
                    let s0 = iy as usize * g.w + lo + kx - g.pad;
                    zeros(&mut col, lo);
                    col.extend_from_slice(&plane[s0..s0 + hi - lo]);
                    zeros(&mut col, g.ow - hi);
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], g: &ConvGeometry, x: &mut [f64]) {
    let n = g.cols();
    x.fill(0.0);
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = &col[((c * g.k + ky) * g.k + kx) * n..][..n];
                let (lo, hi) = valid_cols(g, kx);
                if lo == hi {
                    continue;
                }
                let s0 = lo + kx - g.pad;
                for oy in 0..g.oh {
                    let iy = oy as isize + ky as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w + s0..][..hi - lo];
                    let src = &row[oy * g.ow + lo..oy * g.ow + hi];
                    dst.iter_mut().zip(src).for_each(|(d, v)| *d += v);
                }
            }
        }
    }
}

fn conv_geometry(input: &Tensor, weight: &Tensor, bias: &Tensor, pad: usize) -> Result<(usize, usize, ConvGeometry)> {
    let (n, cin, h, w) = input.dims4()?;
    let (cout, wcin, kh, kw) = weight.dims4()?;
    if wcin != cin || kh != kw {
        return Err(Error::ShapeMismatch(format!(
            "weight {:?} incompatible with input {:?}",
            weight.shape(),
            input.shape()
        )));
    }
    if bias.shape() != [cout] {
        return Err(Error::ShapeMismatch(format!(
            "bias {:?} for {cout} output channels",
            bias.shape()
        )));
    }
    if h + 2 * pad < kh || w + 2 * pad < kw {
        return Err(Error::ShapeMismatch(format!(
            "kernel {kh}x{kw} larger than padded input {h}x{w}"
        )));
    }
    let g = ConvGeometry {
        cin,
        h,
        w,
        k: kh,
        pad,
        oh: h + 2 * pad - kh + 1,
        ow: w + 2 * pad - kw + 1,
    };
    Ok((n, cout, g))
}

/// Stride-1 cross-correlation with zero padding `pad` and per-channel bias.
pub fn conv2d_forward(input: &Tensor, weight: &Tensor, bias: &Tensor, pad: usize) -> Result<Tensor> {
    let (n, cout, g) = conv_geometry(input, weight, bias, pad)?;
    let mut out = Tensor::zeros([n, cout, g.oh, g.ow]);
    let per_out = cout * g.cols();
    out.data_mut()
        .par_chunks_mut(per_out)
        .enumerate()
        .for_each(|(i, y)| {
            let col = im2col(input.sample(i), &g);
            for (co, row) in y.chunks_mut(g.cols()).enumerate() {
                row.fill(bias.data()[co]);
            }
            gemm(cout, g.rows(), g.cols(), weight.data(), false, &col, false, 1.0, y);
        });
    Ok(out)
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Gradients of [`conv2d_forward`]. Per-sample weight gradients are summed in
/// sample order, so the result does not depend on thread scheduling.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    pad: usize,
    grad_out: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads> {
    let (n, cout, g) = conv_geometry(input, weight, bias, pad)?;
    if grad_out.shape() != [n, cout, g.oh, g.ow] {
        return Err(Error::ShapeMismatch(format!(
            "output gradient {:?}, expected {:?}",
            grad_out.shape(),
            [n, cout, g.oh, g.ow]
        )));
    }
    let partials: Vec<(Vec<f64>, Vec<f64>, Option<Vec<f64>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let go = grad_out.sample(i);
            let mut col = im2col(input.sample(i), &g);
            let mut gw = vec![0.0; cout * g.rows()];
            gemm(cout, g.cols(), g.rows(), go, false, &col, true, 0.0, &mut gw);
            let gb: Vec<f64> = go.chunks(g.cols()).map(|r| r.iter().sum()).collect();
            let gx = need_input_grad.then(|| {
                gemm(g.rows(), cout, g.cols(), weight.data(), true, go, false, 0.0, &mut col);
                let mut gx = vec![0.0; g.cin * g.h * g.w];
                col2im(&col, &g, &mut gx);
                gx
            });
            (gw, gb, gx)
        })
        .collect();

    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros(bias.shape());
    let mut gx = need_input_grad.then(|| Vec::with_capacity(input.len()));
    for (w, b, x) in partials {
        gw.data_mut().iter_mut().zip(&w).for_each(|(a, v)| *a += v);
        gb.data_mut().iter_mut().zip(&b).for_each(|(a, v)| *a += v);
        if let (Some(acc), Some(x)) = (gx.as_mut(), x) {
            acc.extend_from_slice(&x);
        }
    }
    Ok(ConvGrads {
        input: gx.map(|d| Tensor::new(input.shape(), d)).transpose()?,
        weight: gw,
        bias: gb,
    })
}

/// Winning position of each 2x2 window: 0 = (0,0), 1 = (0,1), 2 = (1,0), 3 = (1,1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    /// Shape of the tensor that was pooled.
    pub input_shape: Vec<usize>,
    pub argmax: Vec<u8>,
}

impl PoolIndices {
    pub fn output_shape(&self) -> [usize; 4] {
        let s = &self.input_shape;
        [s[0], s[1], s[2] / 2, s[3] / 2]
    }
}

/// 2x2 stride-2 max pooling. Ties go to the first position in row-major window order.
pub fn maxpool2x2_forward(input: &Tensor) -> Result<(Tensor, PoolIndices)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 {
        return Err(Error::OddExtent(h));
    }
    if w % 2 != 0 {
        return Err(Error::OddExtent(w));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    let mut argmax = vec![0u8; n * c * oh * ow];
    let x = input.data();
    for p in 0..n * c {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let base = 2 * oy * w + 2 * ox;
                let cand = [plane[base], plane[base + 1], plane[base + w], plane[base + w + 1]];
                let mut best = 0;
                for (i, &v) in cand.iter().enumerate().skip(1) {
                    if v > cand[best] {
                        best = i;
                    }
                }
                let o = (p * oh + oy) * ow + ox;
                out.data_mut()[o] = cand[best];
                argmax[o] = best as u8;
            }
        }
    }
    Ok((
        out,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Scatters each value to its recorded window position; the other three are zero.
/// This is also the backward pass of [`maxpool2x2_forward`].
pub fn maxunpool2x2(input: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    if input.shape() != indices.output_shape() {
        return Err(Error::ShapeMismatch(format!(
            "unpool input {:?} does not match pooled shape {:?}",
            input.shape(),
            indices.output_shape()
        )));
    }
    let (n, c, h, w) = match indices.input_shape[..] {
        [n, c, h, w] => (n, c, h, w),
        _ => unreachable!(),
    };
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([n, c, h, w]);
    for p in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let a = indices.argmax[o] as usize;
                if a > 3 {
                    return Err(Error::IndexOutOfWindow { index: a });
                }
                let (dy, dx) = (a / 2, a % 2);
                out.data_mut()[(p * h + 2 * oy + dy) * w + 2 * ox + dx] = input.data()[o];
            }
        }
    }
    Ok(out)
}

/// Gathers the recorded window positions; backward pass of [`maxunpool2x2`].
pub fn maxunpool2x2_backward(grad_out: &Tensor, indices: &PoolIndices) -> Result<Tensor> {
    if grad_out.shape() != indices.input_shape.as_slice() {
        return Err(Error::ShapeMismatch(format!(
            "unpool gradient {:?} does not match {:?}",
            grad_out.shape(),
            indices.input_shape
        )));
    }
    let [n, c, oh, ow] = indices.output_shape();
    let w = indices.input_shape[3];
    let h = indices.input_shape[2];
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for p in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let o = (p * oh + oy) * ow + ox;
                let a = indices.argmax[o] as usize;
                if a > 3 {
                    return Err(Error::IndexOutOfWindow { index: a });
                }
                out.data_mut()[o] = grad_out.data()[(p * h + 2 * oy + a / 2) * w + 2 * ox + a % 2];
            }
        }
    }
    Ok(out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Masks `grad` by `activation > 0`; `activation` may be the ReLU input or output.
pub fn relu_backward(grad: &Tensor, activation: &Tensor) -> Result<Tensor> {
    if grad.shape() != activation.shape() {
        return Err(Error::ShapeMismatch("relu gradient shape".into()));
    }
    let mut out = grad.clone();
    out.data_mut()
        .iter_mut()
        .zip(activation.data())
        .for_each(|(g, &a)| {
            if a <= 0.0 {
                *g = 0.0;
            }
        });
    Ok(out)
}

/// Softmax over the channel axis at every pixel.
pub fn softmax_channels(input: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = input.dims4()?;
    let hw = h * w;
    let mut out = input.clone();
    let x = input.data();
    let y = out.data_mut();
    let mut buf = vec![0.0; c];
    for b in 0..n {
        let base = b * c * hw;
        for p in 0..hw {
            let mut m = f64::NEG_INFINITY;
            for k in 0..c {
                m = m.max(x[base + k * hw + p]);
            }
            let mut s = 0.0;
            for k in 0..c {
                buf[k] = (x[base + k * hw + p] - m).exp();
                s += buf[k];
            }
            for k in 0..c {
                y[base + k * hw + p] = buf[k] / s;
            }
        }
    }
    Ok(out)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, ca, h, w) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(Error::ShapeMismatch(format!(
            "cannot concat {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for i in 0..n {
        data.extend_from_slice(a.sample(i));
        data.extend_from_slice(b.sample(i));
    }
    Tensor::new([n, ca + cb, h, w], data)
}

/// Splits a channel-concatenated gradient back into the parts for `a` and `b`.
pub fn split_channels(t: &Tensor, first: usize) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = t.dims4()?;
    if first > c {
        return Err(Error::ShapeMismatch(format!("split at {first} of {c} channels")));
    }
    let hw = h * w;
    let mut a = Vec::with_capacity(n * first * hw);
    let mut b = Vec::with_capacity(n * (c - first) * hw);
    for i in 0..n {
        let s = t.sample(i);
        a.extend_from_slice(&s[..first * hw]);
        b.extend_from_slice(&s[first * hw..]);
    }
    Ok((
        Tensor::new([n, first, h, w], a)?,
        Tensor::new([n, c - first, h, w], b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct six-loop cross-correlation.
    fn naive_conv(x: &Tensor, wt: &Tensor, b: &Tensor, pad: usize) -> Tensor {
        let (n, cin, h, w) = x.dims4().unwrap();
        let (cout, _, k, _) = wt.dims4().unwrap();
        let (oh, ow) = (h + 2 * pad - k + 1, w + 2 * pad - k + 1);
        let mut out = Tensor::zeros([n, cout, oh, ow]);
        for i in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = b.data()[co];
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = oy as isize + ky as isize - pad as isize;
                                    let ix = ox as isize + kx as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                        s += x.data()[((i * cin + ci) * h + iy as usize) * w + ix as usize]
                                            * wt.data()[((co * cin + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((i * cout + co) * oh + oy) * ow + ox] = s;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_counts_neighbours() {
        let x = Tensor::full([1, 1, 3, 3], 1.0);
        let k = Tensor::full([1, 1, 3, 3], 1.0);
        let y = conv2d_forward(&x, &k, &Tensor::zeros([1]), 1).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random([2, 1, 5, 6], &mut rng);
        let mut k = Tensor::zeros([1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        assert_eq!(conv2d_forward(&x, &k, &Tensor::zeros([1]), 1).unwrap(), x);
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(pad, k) in &[(1, 3), (0, 3), (2, 5), (0, 1)] {
            let x = random([2, 3, 7, 6], &mut rng);
            let w = random([4, 3, k, k], &mut rng);
            let b = Tensor::new([4], (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let fast = conv2d_forward(&x, &w, &b, pad).unwrap();
            let slow = naive_conv(&x, &w, &b, pad);
            assert_eq!(fast.shape(), slow.shape());
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() <= 1e-6 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::zeros([1, 2, 4, 4]);
        assert!(matches!(
            conv2d_forward(&x, &Tensor::zeros([1, 3, 3, 3]), &Tensor::zeros([1]), 1),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(conv2d_forward(&x, &Tensor::zeros([1, 2, 3, 3]), &Tensor::zeros([2]), 1).is_err());
        assert!(conv2d_forward(&Tensor::zeros([2, 4, 4]), &Tensor::zeros([1, 2, 3, 3]), &Tensor::zeros([1]), 1).is_err());
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random([2, 2, 4, 5], &mut rng);
        let w = random([3, 2, 3, 3], &mut rng);
        let b = random([1, 1, 1, 3], &mut rng);
        let b = Tensor::new([3], b.into_data()).unwrap();
        let r = random([2, 3, 4, 5], &mut rng);
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| -> f64 {
            let y = conv2d_forward(x, w, b, 1).unwrap();
            y.data().iter().zip(r.data()).map(|(a, c)| a * c).sum()
        };
        let g = conv2d_backward(&x, &w, &b, 1, &r, true).unwrap();
        let h = 1e-6;
        let check = |analytic: &[f64], base: &Tensor, which: usize| {
            for i in 0..base.len() {
                let mut p = base.clone();
                p.data_mut()[i] += h;
                let mut m = base.clone();
                m.data_mut()[i] -= h;
                let (lp, lm) = match which {
                    0 => (loss(&p, &w, &b), loss(&m, &w, &b)),
                    1 => (loss(&x, &p, &b), loss(&x, &m, &b)),
                    _ => (loss(&x, &w, &p), loss(&x, &w, &m)),
                };
                let fd = (lp - lm) / (2.0 * h);
                assert!((fd - analytic[i]).abs() < 1e-6, "{which}/{i}: {fd} vs {}", analytic[i]);
            }
        };
        check(g.input.as_ref().unwrap().data(), &x, 0);
        check(g.weight.data(), &w, 1);
        check(g.bias.data(), &b, 2);
        assert!(conv2d_backward(&x, &w, &b, 1, &r, false).unwrap().input.is_none());
    }

    #[test]
    fn pool_picks_max_and_index() {
        let x = Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(idx.argmax, vec![3]);
    }

    #[test]
    fn pool_tie_goes_to_first() {
        let x = Tensor::full([1, 2, 4, 4], 7.0);
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        assert!(idx.argmax.iter().all(|&a| a == 0));
        let up = maxunpool2x2(&y, &idx).unwrap();
        for yy in 0..4 {
            for xx in 0..4 {
                let expect = if yy % 2 == 0 && xx % 2 == 0 { 7.0 } else { 0.0 };
                assert_eq!(up.data()[yy * 4 + xx], expect);
            }
        }
    }

    #[test]
    fn pool_rejects_odd() {
        assert!(matches!(maxpool2x2_forward(&Tensor::zeros([1, 1, 3, 4])), Err(Error::OddExtent(3))));
        assert!(matches!(maxpool2x2_forward(&Tensor::zeros([1, 1, 4, 5])), Err(Error::OddExtent(5))));
    }

    #[test]
    fn pool_matches_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random([2, 3, 6, 8], &mut rng);
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        for p in 0..6 {
            for oy in 0..3 {
                for ox in 0..4 {
                    let mut best = f64::NEG_INFINITY;
                    let mut at = 0;
                    for a in 0..4 {
                        let v = x.data()[(p * 6 + 2 * oy + a / 2) * 8 + 2 * ox + a % 2];
                        if v > best {
                            best = v;
                            at = a;
                        }
                    }
                    let o = (p * 3 + oy) * 4 + ox;
                    assert_eq!(y.data()[o], best);
                    assert_eq!(idx.argmax[o] as usize, at);
                }
            }
        }
    }

    #[test]
    fn unpool_structure_and_conservation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random([2, 3, 8, 6], &mut rng);
        let (y, idx) = maxpool2x2_forward(&x).unwrap();
        let up = maxunpool2x2(&y, &idx).unwrap();
        assert_eq!(up.shape(), x.shape());
        let s_up: f64 = up.data().iter().sum();
        let s_y: f64 = y.data().iter().sum();
        assert!((s_up - s_y).abs() < 1e-12);
        for p in 0..6 {
            for by in 0..4 {
                for bx in 0..3 {
                    let nz = (0..4)
                        .filter(|a| up.data()[(p * 8 + 2 * by + a / 2) * 6 + 2 * bx + a % 2] != 0.0)
                        .count();
                    assert!(nz <= 1);
                }
            }
        }
        let back = maxunpool2x2_backward(&up, &idx).unwrap();
        assert_eq!(back, y);
    }

    #[test]
    fn unpool_rejects_bad_indices() {
        let mut idx = PoolIndices {
            input_shape: vec![1, 1, 2, 2],
            argmax: vec![4],
        };
        assert!(matches!(
            maxunpool2x2(&Tensor::zeros([1, 1, 1, 1]), &idx),
            Err(Error::IndexOutOfWindow { index: 4 })
        ));
        idx.argmax[0] = 0;
        assert!(maxunpool2x2(&Tensor::zeros([1, 1, 2, 2]), &idx).is_err());
    }

    #[test]
    fn relu_and_softmax() {
        let x = Tensor::new([1, 1, 1, 2], vec![-1.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 2.0]);
        let z = Tensor::zeros([1, 2, 2, 2]);
        assert!(softmax_channels(&z).unwrap().data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random([2, 5, 3, 3], &mut rng);
        let mut shifted = x.clone();
        for b in 0..2 {
            for p in 0..9 {
                let c = rng.gen_range(-50.0..50.0);
                for k in 0..5 {
                    shifted.data_mut()[(b * 5 + k) * 9 + p] += c;
                }
            }
        }
        let s1 = softmax_channels(&x).unwrap();
        let s2 = softmax_channels(&shifted).unwrap();
        for (a, b) in s1.data().iter().zip(s2.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        for b in 0..2 {
            for p in 0..9 {
                let s: f64 = (0..5).map(|k| s1.data()[(b * 5 + k) * 9 + p]).sum();
                assert!((s - 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn concat_and_split() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random([2, 2, 3, 3], &mut rng);
        let b = random([2, 3, 3, 3], &mut rng);
        let c = concat_channels(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 5, 3, 3]);
        assert_eq!(c.data()[45], a.data()[18]);
        assert_eq!(c.data()[63], b.data()[27]);
        let (a2, b2) = split_channels(&c, 2).unwrap();
        assert_eq!((a2, b2), (a, b));
        assert!(concat_channels(&Tensor::zeros([1, 1, 2, 2]), &Tensor::zeros([1, 1, 2, 3])).is_err());
    }
}
