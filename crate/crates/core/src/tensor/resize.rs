//! Align-corners bilinear resampling of `[F, H, W]` maps.

use super::exec::Exec;
use super::graph::{Function, Graph, Var};
use super::{expect_rank, Real, Tensor};
use crate::error::{Error, Result};

/// Source taps for each output coordinate along one axis: (lo, hi, weight of hi).
fn axis_taps(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|o| {
            let pos = if n_out > 1 {
                o as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
            } else {
                0.0
            };
            let lo = (pos.floor() as usize).min(n_in - 1);
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn check(shape: &[usize], out_h: usize, out_w: usize) -> Result<()> {
    expect_rank("bilinear_resize", shape, 3)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target must be at least 1x1, got {out_h}x{out_w}"
        )));
    }
    Ok(())
}

pub fn bilinear_resize_forward<T: Real>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    check(x.shape(), out_h, out_w)?;
    let (f, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ty = axis_taps(h, out_h);
    let tx = axis_taps(w, out_w);
    let mut out = Vec::with_capacity(f * out_h * out_w);
    for c in 0..f {
        let plane = &x.data()[c * h * w..(c + 1) * h * w];
        for &(y0, y1, wy) in &ty {
            let wy = T::from_f64(wy);
            let (r0, r1) = (&plane[y0 * w..(y0 + 1) * w], &plane[y1 * w..(y1 + 1) * w]);
            for &(x0, x1, wx) in &tx {
                let wx = T::from_f64(wx);
                let top = r0[x0] * (T::ONE - wx) + r0[x1] * wx;
                let bot = r1[x0] * (T::ONE - wx) + r1[x1] * wx;
                out.push(top * (T::ONE - wy) + bot * wy);
            }
        }
    }
    Ok(Tensor::from_parts(vec![f, out_h, out_w], out))
}

pub fn bilinear_resize_backward<T: Real>(grad: &Tensor<T>, in_h: usize, in_w: usize) -> Tensor<T> {
    let (f, out_h, out_w) = (grad.shape()[0], grad.shape()[1], grad.shape()[2]);
    let ty = axis_taps(in_h, out_h);
    let tx = axis_taps(in_w, out_w);
    let mut gx = vec![T::ZERO; f * in_h * in_w];
    for c in 0..f {
        let plane = &mut gx[c * in_h * in_w..(c + 1) * in_h * in_w];
        let g = &grad.data()[c * out_h * out_w..(c + 1) * out_h * out_w];
        for (oy, &(y0, y1, wy)) in ty.iter().enumerate() {
            let wy = T::from_f64(wy);
            for (ox, &(x0, x1, wx)) in tx.iter().enumerate() {
                let wx = T::from_f64(wx);
                let v = g[oy * out_w + ox];
                plane[y0 * in_w + x0] += v * (T::ONE - wy) * (T::ONE - wx);
                plane[y0 * in_w + x1] += v * (T::ONE - wy) * wx;
                plane[y1 * in_w + x0] += v * wy * (T::ONE - wx);
                plane[y1 * in_w + x1] += v * wy * wx;
            }
        }
    }
    Tensor::from_parts(vec![f, in_h, in_w], gx)
}

struct Bilinear;

impl<T: Real> Function<T> for Bilinear {
    fn name(&self) -> &'static str {
        "bilinear_resize"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let s = inputs[0].shape();
        vec![Some(bilinear_resize_backward(grad, s[1], s[2]))]
    }
}

impl<T: Real> Graph<T> {
    pub fn bilinear_resize(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let out = bilinear_resize_forward(self.value(x), out_h, out_w)?;
        self.count_flops(6 * out.len() as u64);
        Ok(self.apply(Bilinear, &[x], out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::finite_diff_check;

    #[test]
    fn constant_stays_constant() {
        let x = Tensor::<f64>::full(&[2, 3, 5], 0.75);
        for (h, w) in [(1, 1), (7, 2), (12, 20)] {
            let y = bilinear_resize_forward(&x, h, w).unwrap();
            assert!(y.data().iter().all(|&v| (v - 0.75).abs() < 1e-15));
        }
    }

    #[test]
    fn align_corners_midpoint() {
        let x = Tensor::<f64>::new(&[1, 1, 2], vec![0.0, 1.0]).unwrap();
        let y = bilinear_resize_forward(&x, 1, 3).unwrap();
        assert_eq!(y.data(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn identity_size_is_bit_exact() {
        let x = Tensor::<f32>::from_fn(&[2, 4, 5], |i| (i as f32 * 0.731).sin());
        let y = bilinear_resize_forward(&x, 4, 5).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn corners_map_to_corners() {
        let x = Tensor::<f64>::from_fn(&[1, 3, 4], |i| i as f64);
        let y = bilinear_resize_forward(&x, 9, 13).unwrap();
        assert_eq!(y.at(&[0, 0, 0]), 0.0);
        assert_eq!(y.at(&[0, 0, 12]), 3.0);
        assert_eq!(y.at(&[0, 8, 0]), 8.0);
        assert_eq!(y.at(&[0, 8, 12]), 11.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 4], |i| ((i * 13 % 17) as f64 - 8.0) / 9.0);
        for (h, w) in [(7, 5), (2, 2), (12, 16)] {
            let err = finite_diff_check(
                |g, x| {
                    let y = g.bilinear_resize(x, h, w)?;
                    let y = g.mul(y, y)?;
                    Ok(g.sum(y))
                },
                &x,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{h}x{w}: {err}");
        }
    }
}
