//! Zero-padded cross-correlation in two and three spatial dimensions.
//!
//! Both are served by one depth/height/width kernel; a 2D convolution is a 3D
//! one with unit depth. Parallel loops split over output channels (forward,
//! weight gradient) or input channels (input gradient), so each output value
//! is produced by exactly one sequential loop nest.

use super::exec::Exec;
use super::graph::{Function, Graph, Var};
use super::{expect_rank, Real, Tensor};
use crate::error::{Error, Result};

/// Fully resolved convolution geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    /// Input extents (depth, height, width).
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

/// `floor((n + 2 pad - k) / stride) + 1`, or `None` when the kernel does not
/// fit the padded input.
pub fn conv_out_extent(n: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = n + 2 * pad;
    (stride >= 1 && padded >= k).then(|| (padded - k) / stride + 1)
}

impl ConvGeom {
    fn resolve(
        op: &'static str,
        cin: usize,
        cout: usize,
        input: [usize; 3],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        if kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidShape {
                op,
                detail: format!("kernel extents must be odd, got {kernel:?}"),
            });
        }
        let mut output = [0; 3];
        for a in 0..3 {
            output[a] = conv_out_extent(input[a], kernel[a], stride[a], pad[a]).ok_or_else(|| {
                Error::InvalidShape {
                    op,
                    detail: format!(
                        "kernel {kernel:?} stride {stride:?} pad {pad:?} does not fit input {input:?}"
                    ),
                }
            })?;
        }
        Ok(ConvGeom {
            cin,
            cout,
            input,
            kernel,
            stride,
            pad,
            output,
        })
    }

    /// Geometry of a 2D convolution of `x: [cin, h, w]` with `w: [cout, cin, kh, kw]`.
    pub fn conv2d(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        expect_rank("conv2d", x, 3)?;
        expect_rank("conv2d", w, 4)?;
        if w[1] != x[0] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                lhs: x.to_vec(),
                rhs: w.to_vec(),
            });
        }
        Self::resolve(
            "conv2d",
            x[0],
            w[0],
            [1, x[1], x[2]],
            [1, w[2], w[3]],
            [1, stride, stride],
            [0, pad, pad],
        )
    }

    /// Geometry of a 3D convolution of `x: [cin, d, h, w]` with `w: [cout, cin, kd, kh, kw]`.
    pub fn conv3d(x: &[usize], w: &[usize], stride: usize, pad: usize) -> Result<Self> {
        expect_rank("conv3d", x, 4)?;
        expect_rank("conv3d", w, 5)?;
        if w[1] != x[0] {
            return Err(Error::ShapeMismatch {
                op: "conv3d",
                lhs: x.to_vec(),
                rhs: w.to_vec(),
            });
        }
        Self::resolve(
            "conv3d",
            x[0],
            w[0],
            [x[1], x[2], x[3]],
            [w[2], w[3], w[4]],
            [stride; 3],
            [pad; 3],
        )
    }

    fn out_volume(&self) -> usize {
        self.output.iter().product()
    }

    fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Nominal multiply-accumulate count of the forward pass.
    pub fn macs(&self) -> u64 {
        (self.cout * self.cin * self.kernel_volume() * self.out_volume()) as u64
    }

    /// Whether this geometry came from a 2D convolution.
    fn is_2d(&self) -> bool {
        self.input[0] == 1 && self.kernel[0] == 1 && self.pad[0] == 0
    }

    fn output_shape(&self, two_d: bool) -> Vec<usize> {
        let [d, h, w] = self.output;
        if two_d {
            vec![self.cout, h, w]
        } else {
            vec![self.cout, d, h, w]
        }
    }
}

/// Output positions `o` in `0..out_n` whose tap `o*stride + k - pad` lands in `0..in_n`.
#[inline]
fn valid_range(out_n: usize, in_n: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    if in_n + pad <= k {
        return (0, 0);
    }
    let hi = ((in_n - 1 + pad - k) / stride + 1).min(out_n);
    (lo.min(hi), hi)
}

/// Accumulates `w * src[ix(ox)]` into `dst[ox]` over one output row.
#[inline]
fn row_axpy<T: Real>(dst: &mut [T], src: &[T], wv: T, kx: usize, g: &ConvGeom) {
    let (stride, pad) = (g.stride[2], g.pad[2]);
    let (lo, hi) = valid_range(dst.len(), src.len(), kx, stride, pad);
    if lo >= hi {
        return;
    }
    let first = lo * stride + kx - pad;
    if stride == 1 {
        for (d, &s) in dst[lo..hi].iter_mut().zip(&src[first..first + (hi - lo)]) {
            *d += wv * s;
        }
    } else {
        for (d, s) in dst[lo..hi].iter_mut().zip(src[first..].iter().step_by(stride)) {
            *d += wv * *s;
        }
    }
}

/// Dot product of `gout[ox]` with `src[ix(ox)]` over one output row.
#[inline]
fn row_dot<T: Real>(gout: &[T], src: &[T], kx: usize, g: &ConvGeom) -> T {
    let (stride, pad) = (g.stride[2], g.pad[2]);
    let (lo, hi) = valid_range(gout.len(), src.len(), kx, stride, pad);
    if lo >= hi {
        return T::ZERO;
    }
    let first = lo * stride + kx - pad;
    if stride == 1 {
        // four partial sums so the loop can pipeline
        let a = &gout[lo..hi];
        let b = &src[first..first + (hi - lo)];
        let mut acc = [T::ZERO; 4];
        let chunks = a.len() / 4;
        for c in 0..chunks {
            for l in 0..4 {
                acc[l] += a[4 * c + l] * b[4 * c + l];
            }
        }
        for i in 4 * chunks..a.len() {
            acc[0] += a[i] * b[i];
        }
        (acc[0] + acc[1]) + (acc[2] + acc[3])
    } else {
        gout[lo..hi]
            .iter()
            .zip(src[first..].iter().step_by(stride))
            .fold(T::ZERO, |acc, (&a, &b)| acc + a * b)
    }
}

/// Accumulates `w * gout[ox]` into `dst[ix(ox)]` (transpose of [`row_axpy`]).
#[inline]
fn row_scatter<T: Real>(dst: &mut [T], gout: &[T], wv: T, kx: usize, g: &ConvGeom) {
    let (stride, pad) = (g.stride[2], g.pad[2]);
    let (lo, hi) = valid_range(gout.len(), dst.len(), kx, stride, pad);
    if lo >= hi {
        return;
    }
    let first = lo * stride + kx - pad;
    if stride == 1 {
        for (d, &s) in dst[first..first + (hi - lo)].iter_mut().zip(&gout[lo..hi]) {
            *d += wv * s;
        }
    } else {
        for (d, &s) in dst[first..].iter_mut().step_by(stride).zip(&gout[lo..hi]) {
            *d += wv * s;
        }
    }
}

/// Input index along one axis for output `o` and tap `k`, if inside the input.
#[inline]
fn tap(o: usize, k: usize, stride: usize, pad: usize, n: usize) -> Option<usize> {
    let i = (o * stride + k).checked_sub(pad)?;
    (i < n).then_some(i)
}

fn forward_kernel<T: Real>(x: &[T], w: &[T], b: &[T], g: &ConvGeom, exec: Exec) -> Vec<T> {
    let [d, h, wd] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let plane_in = d * h * wd;
    let kvol = g.kernel_volume();
    let mut out = vec![T::ZERO; g.cout * g.out_volume()];
    exec.for_each_chunk(&mut out, g.out_volume(), |fo, plane| {
        plane.fill(b[fo]);
        for fi in 0..g.cin {
            let xin = &x[fi * plane_in..(fi + 1) * plane_in];
            let wk = &w[(fo * g.cin + fi) * kvol..(fo * g.cin + fi + 1) * kvol];
            for oz in 0..od {
                for kz in 0..kd {
                    let Some(iz) = tap(oz, kz, g.stride[0], g.pad[0], d) else {
                        continue;
                    };
                    for oy in 0..oh {
                        let dst = &mut plane[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                        for ky in 0..kh {
                            let Some(iy) = tap(oy, ky, g.stride[1], g.pad[1], h) else {
                                continue;
                            };
                            let src = &xin[(iz * h + iy) * wd..(iz * h + iy + 1) * wd];
                            for kx in 0..kw {
                                row_axpy(dst, src, wk[(kz * kh + ky) * kw + kx], kx, g);
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

fn weight_grad_kernel<T: Real>(x: &[T], gout: &[T], g: &ConvGeom, exec: Exec) -> Vec<T> {
    let [d, h, wd] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let plane_in = d * h * wd;
    let plane_out = g.out_volume();
    let kvol = g.kernel_volume();
    let mut gw = vec![T::ZERO; g.cout * g.cin * kvol];
    exec.for_each_chunk(&mut gw, g.cin * kvol, |fo, chunk| {
        let go = &gout[fo * plane_out..(fo + 1) * plane_out];
        for fi in 0..g.cin {
            let xin = &x[fi * plane_in..(fi + 1) * plane_in];
            let wk = &mut chunk[fi * kvol..(fi + 1) * kvol];
            for oz in 0..od {
                for kz in 0..kd {
                    let Some(iz) = tap(oz, kz, g.stride[0], g.pad[0], d) else {
                        continue;
                    };
                    for oy in 0..oh {
                        let grow = &go[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                        for ky in 0..kh {
                            let Some(iy) = tap(oy, ky, g.stride[1], g.pad[1], h) else {
                                continue;
                            };
                            let src = &xin[(iz * h + iy) * wd..(iz * h + iy + 1) * wd];
                            for kx in 0..kw {
                                wk[(kz * kh + ky) * kw + kx] += row_dot(grow, src, kx, g);
                            }
                        }
                    }
                }
            }
        }
    });
    gw
}

fn input_grad_kernel<T: Real>(w: &[T], gout: &[T], g: &ConvGeom, exec: Exec) -> Vec<T> {
    let [d, h, wd] = g.input;
    let [kd, kh, kw] = g.kernel;
    let [od, oh, ow] = g.output;
    let plane_in = d * h * wd;
    let plane_out = g.out_volume();
    let kvol = g.kernel_volume();
    let mut gx = vec![T::ZERO; g.cin * plane_in];
    exec.for_each_chunk(&mut gx, plane_in, |fi, plane| {
        for fo in 0..g.cout {
            let go = &gout[fo * plane_out..(fo + 1) * plane_out];
            let wk = &w[(fo * g.cin + fi) * kvol..(fo * g.cin + fi + 1) * kvol];
            for oz in 0..od {
                for kz in 0..kd {
                    let Some(iz) = tap(oz, kz, g.stride[0], g.pad[0], d) else {
                        continue;
                    };
                    for oy in 0..oh {
                        let grow = &go[(oz * oh + oy) * ow..(oz * oh + oy + 1) * ow];
                        for ky in 0..kh {
                            let Some(iy) = tap(oy, ky, g.stride[1], g.pad[1], h) else {
                                continue;
                            };
                            let dst = &mut plane[(iz * h + iy) * wd..(iz * h + iy + 1) * wd];
                            for kx in 0..kw {
                                row_scatter(dst, grow, wk[(kz * kh + ky) * kw + kx], kx, g);
                            }
                        }
                    }
                }
            }
        }
    });
    gx
}

fn bias_grad<T: Real>(gout: &[T], g: &ConvGeom) -> Vec<T> {
    gout.chunks(g.out_volume())
        .map(|plane| plane.iter().copied().sum())
        .collect()
}

fn check_bias<T: Real>(op: &'static str, b: &Tensor<T>, cout: usize) -> Result<()> {
    if b.shape() != [cout] {
        return Err(Error::ShapeMismatch {
            op,
            lhs: vec![cout],
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Forward 2D convolution on plain tensors.
pub fn conv2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
    exec: Exec,
) -> Result<Tensor<T>> {
    let g = ConvGeom::conv2d(x.shape(), w.shape(), stride, pad)?;
    check_bias("conv2d", b, g.cout)?;
    let out = forward_kernel(x.data(), w.data(), b.data(), &g, exec);
    Ok(Tensor::from_parts(g.output_shape(true), out))
}

/// Forward 3D convolution on plain tensors.
pub fn conv3d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
    exec: Exec,
) -> Result<Tensor<T>> {
    let g = ConvGeom::conv3d(x.shape(), w.shape(), stride, pad)?;
    check_bias("conv3d", b, g.cout)?;
    let out = forward_kernel(x.data(), w.data(), b.data(), &g, exec);
    Ok(Tensor::from_parts(g.output_shape(false), out))
}

/// Gradients `(dx, dw, db)` of a convolution given the output gradient.
fn backward_all<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    g: &ConvGeom,
    exec: Exec,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let gx = input_grad_kernel(w.data(), gout.data(), g, exec);
    let gw = weight_grad_kernel(x.data(), gout.data(), g, exec);
    let gb = bias_grad(gout.data(), g);
    (
        Tensor::from_parts(x.shape().to_vec(), gx),
        Tensor::from_parts(w.shape().to_vec(), gw),
        Tensor::from_parts(vec![g.cout], gb),
    )
}

pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
    exec: Exec,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = ConvGeom::conv2d(x.shape(), w.shape(), stride, pad)?;
    if gout.shape() != g.output_shape(true) {
        return Err(Error::ShapeMismatch {
            op: "conv2d_backward",
            lhs: g.output_shape(true),
            rhs: gout.shape().to_vec(),
        });
    }
    Ok(backward_all(x, w, gout, &g, exec))
}

pub fn conv3d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gout: &Tensor<T>,
    stride: usize,
    pad: usize,
    exec: Exec,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = ConvGeom::conv3d(x.shape(), w.shape(), stride, pad)?;
    if gout.shape() != g.output_shape(false) {
        return Err(Error::ShapeMismatch {
            op: "conv3d_backward",
            lhs: g.output_shape(false),
            rhs: gout.shape().to_vec(),
        });
    }
    Ok(backward_all(x, w, gout, &g, exec))
}

struct ConvFn {
    geom: ConvGeom,
}

impl<T: Real> Function<T> for ConvFn {
    fn name(&self) -> &'static str {
        if self.geom.is_2d() {
            "conv2d"
        } else {
            "conv3d"
        }
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let (gx, gw, gb) = backward_all(inputs[0], inputs[1], grad, &self.geom, exec);
        vec![Some(gx), Some(gw), Some(gb)]
    }
}

impl<T: Real> Graph<T> {
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::conv2d(self.shape(x), self.shape(w), stride, pad)?;
        self.conv(geom, true, x, w, b)
    }

    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::conv3d(self.shape(x), self.shape(w), stride, pad)?;
        self.conv(geom, false, x, w, b)
    }

    fn conv(&mut self, geom: ConvGeom, two_d: bool, x: Var, w: Var, b: Var) -> Result<Var> {
        let op = if two_d { "conv2d" } else { "conv3d" };
        check_bias(op, self.value(b), geom.cout)?;
        let out = forward_kernel(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &geom,
            self.exec(),
        );
        self.count_flops(geom.macs());
        let out = Tensor::from_parts(geom.output_shape(two_d), out);
        Ok(self.apply(ConvFn { geom }, &[x, w, b], out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::finite_diff_check_many;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    /// Direct nested-loop 2D cross-correlation.
    fn conv2d_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: usize, p: usize) -> Tensor<f64> {
        let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let oh = (h + 2 * p - kh) / s + 1;
        let ow = (wd + 2 * p - kw) / s + 1;
        let mut out = Tensor::zeros(&[co, oh, ow]);
        for o in 0..co {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.data()[o];
                    for i in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (y * s + ky) as isize - p as isize;
                                let ix = (xx * s + kx) as isize - p as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w.at(&[o, i, ky, kx]) * x.at(&[i, iy as usize, ix as usize]);
                            }
                        }
                    }
                    let off = out.offset(&[o, y, xx]);
                    out.data_mut()[off] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn box_sum_with_zero_padding() {
        let x = Tensor::<f64>::full(&[1, 3, 3], 1.0);
        let w = Tensor::<f64>::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::<f64>::zeros(&[1]);
        let y = conv2d_forward(&x, &w, &b, 1, 1, Exec::Sequential).unwrap();
        assert_eq!(y.at(&[0, 1, 1]), 9.0);
        assert_eq!(y.at(&[0, 0, 0]), 4.0);
        assert_eq!(y.at(&[0, 0, 1]), 6.0);

        let x = Tensor::<f64>::full(&[1, 3, 3, 3], 1.0);
        let w = Tensor::<f64>::full(&[1, 1, 3, 3, 3], 1.0);
        let y = conv3d_forward(&x, &w, &b, 1, 1, Exec::Sequential).unwrap();
        assert_eq!(y.at(&[0, 1, 1, 1]), 27.0);
        assert_eq!(y.at(&[0, 0, 0, 0]), 8.0);
    }

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, &[2, 5, 6]);
        let mut w = Tensor::<f64>::zeros(&[2, 2, 3, 3]);
        for c in 0..2 {
            let off = w.offset(&[c, c, 1, 1]);
            w.data_mut()[off] = 1.0;
        }
        let y = conv2d_forward(&x, &w, &Tensor::zeros(&[2]), 1, 1, Exec::Parallel).unwrap();
        assert_eq!(y, x);

        let x = rand_tensor(&mut rng, &[1, 3, 4, 5]);
        let mut w = Tensor::<f64>::zeros(&[1, 1, 3, 3, 3]);
        w.data_mut()[13] = 1.0;
        let y = conv3d_forward(&x, &w, &Tensor::zeros(&[1]), 1, 1, Exec::Parallel).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(&mut rng, &[2, 5, 6]);
        let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
        let b = rand_tensor(&mut rng, &[3]);
        let y = conv2d_forward(&x, &w, &b, 1, 1, Exec::default()).unwrap();
        assert!(y.max_abs_diff(&conv2d_oracle(&x, &w, &b, 1, 1)) < 1e-12);
        for (s, p, k) in [(2, 1, 3), (2, 0, 1), (1, 0, 3), (3, 2, 5), (2, 2, 5)] {
            let x = rand_tensor(&mut rng, &[3, 9, 8]);
            let w = rand_tensor(&mut rng, &[2, 3, k, k]);
            let b = rand_tensor(&mut rng, &[2]);
            let y = conv2d_forward(&x, &w, &b, s, p, Exec::default()).unwrap();
            assert!(y.max_abs_diff(&conv2d_oracle(&x, &w, &b, s, p)) < 1e-12, "s={s} p={p} k={k}");
        }
    }

    #[test]
    fn stride_two_halves_even_extents() {
        assert_eq!(conv_out_extent(8, 3, 2, 1), Some(4));
        assert_eq!(conv_out_extent(8, 1, 2, 0), Some(4));
        assert_eq!(conv_out_extent(2, 5, 1, 1), None);
    }

    #[test]
    fn rejects_even_kernels_and_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[2, 4, 4]);
        let b = Tensor::<f64>::zeros(&[1]);
        let even = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        assert!(conv2d_forward(&x, &even, &b, 1, 1, Exec::Sequential).is_err());
        let wrong_cin = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        assert!(conv2d_forward(&x, &wrong_cin, &b, 1, 1, Exec::Sequential).is_err());
        let big = Tensor::<f64>::zeros(&[1, 2, 7, 7]);
        assert!(conv2d_forward(&x, &big, &b, 1, 1, Exec::Sequential).is_err());
    }

    #[test]
    fn sequential_and_parallel_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, &[4, 3, 7, 9]);
        let w = rand_tensor(&mut rng, &[5, 4, 3, 3, 3]);
        let b = rand_tensor(&mut rng, &[5]);
        let a = conv3d_forward(&x, &w, &b, 1, 1, Exec::Sequential).unwrap();
        let p = conv3d_forward(&x, &w, &b, 1, 1, Exec::Parallel).unwrap();
        assert_eq!(a, p);
        let gout = rand_tensor(&mut rng, a.shape());
        let s = conv3d_backward(&x, &w, &gout, 1, 1, Exec::Sequential).unwrap();
        let q = conv3d_backward(&x, &w, &gout, 1, 1, Exec::Parallel).unwrap();
        assert_eq!(s, q);
    }

    #[test]
    fn conv2d_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (s, p) in [(1, 1), (2, 1), (1, 0)] {
            let x = rand_tensor(&mut rng, &[2, 5, 6]);
            let w = rand_tensor(&mut rng, &[3, 2, 3, 3]);
            let b = rand_tensor(&mut rng, &[3]);
            let err = finite_diff_check_many(
                |g, v| {
                    let y = g.conv2d(v[0], v[1], v[2], s, p)?;
                    let y = g.mul(y, y)?;
                    Ok(g.sum(y))
                },
                &[x, w, b],
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "s={s} p={p}: {err}");
        }
    }

    #[test]
    fn conv3d_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let x = rand_tensor(&mut rng, &[2, 3, 4, 3]);
        let w = rand_tensor(&mut rng, &[2, 2, 3, 3, 3]);
        let b = rand_tensor(&mut rng, &[2]);
        let err = finite_diff_check_many(
            |g, v| {
                let y = g.conv3d(v[0], v[1], v[2], 1, 1)?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
