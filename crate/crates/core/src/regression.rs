//! Soft-argmin disparity regression and the multi-output smooth-L1 loss.

use crate::error::{Error, Result};
use crate::tensor::exec::Exec;
use crate::tensor::{expect_rank, Function, Graph, Real, Tensor, Var};

/// Disparity values in pixels of the resolution they live at.
#[derive(Clone, Debug, PartialEq)]
pub struct DisparityMap {
    /// `[H, W]`.
    pub values: Tensor<f32>,
    /// Downsampling factor relative to the input image (1, 4, 16).
    pub downscale: usize,
}

impl DisparityMap {
    pub fn new(values: Tensor<f32>, downscale: usize) -> Result<Self> {
        expect_rank("disparity_map", values.shape(), 2)?;
        Ok(DisparityMap { values, downscale })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn data(&self) -> &[f32] {
        self.values.data()
    }
}

/// Per-pixel ground-truth availability.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::InvalidShape {
                op: "validity_mask",
                detail: format!("{height}x{width} mask with {} entries", bits.len()),
            });
        }
        Ok(ValidityMask { height, width, bits })
    }

    pub fn all(height: usize, width: usize) -> Self {
        ValidityMask {
            height,
            width,
            bits: vec![true; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn as_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_fn(&[self.height, self.width], |i| if self.bits[i] { T::ONE } else { T::ZERO })
    }
}

/// Relative weights of the four supervised outputs, indexed `[stage][output]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub w11: f64,
    pub w12: f64,
    pub w21: f64,
    pub w22: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w11: 0.25,
            w12: 0.5,
            w21: 0.5,
            w22: 1.0,
        }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.w11, self.w12, self.w21, self.w22]
    }
}

pub fn smooth_l1(x: f64) -> f64 {
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

struct SmoothL1;

impl<T: Real> Function<T> for SmoothL1 {
    fn name(&self) -> &'static str {
        "smooth_l1"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let x = inputs[0];
        let data = x
            .data()
            .iter()
            .zip(grad.data())
            .map(|(&v, &g)| {
                let d = if v.abs() < T::ONE {
                    v
                } else if v > T::ZERO {
                    T::ONE
                } else {
                    -T::ONE
                };
                g * d
            })
            .collect();
        vec![Some(Tensor::from_parts(x.shape().to_vec(), data))]
    }
}

pub fn smooth_l1_op<T: Real>(g: &mut Graph<T>, x: Var) -> Var {
    let out = g.value(x).map(|v| T::from_f64(smooth_l1(v.as_f64())));
    g.count_flops(out.len() as u64);
    g.apply(SmoothL1, &[x], out)
}

/// `y[p] = sum_n e[n,p] v[n,p] / sum_n e[n,p]` with `e = exp(-(c - min c))`.
///
/// Normalizing once at the end keeps uniform costs exact: every weight is
/// exactly one, so the result is the plain mean of the values.
struct Expectation;

fn expectation_weights<T: Real>(costs: &[T], n: usize, plane: usize, p: usize) -> (T, Vec<T>) {
    let lo = (0..n).map(|k| costs[k * plane + p]).fold(T::infinity(), T::min);
    let e: Vec<T> = (0..n).map(|k| (lo - costs[k * plane + p]).exp()).collect();
    (e.iter().copied().sum(), e)
}

fn expectation_values<T: Real>(costs: &Tensor<T>, values: &Tensor<T>) -> Tensor<T> {
    let s = costs.shape();
    let (n, plane) = (s[0], s[1] * s[2]);
    let (c, v) = (costs.data(), values.data());
    let out = (0..plane)
        .map(|p| {
            let (z, e) = expectation_weights(c, n, plane, p);
            let num: T = (0..n).map(|k| e[k] * v[k * plane + p]).sum();
            num / z
        })
        .collect();
    Tensor::from_parts(vec![s[1], s[2]], out)
}

impl<T: Real> Function<T> for Expectation {
    fn name(&self) -> &'static str {
        "soft_argmin"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let (costs, values) = (inputs[0], inputs[1]);
        let s = costs.shape();
        let (n, plane) = (s[0], s[1] * s[2]);
        let (c, v) = (costs.data(), values.data());
        let mut gc = vec![T::ZERO; c.len()];
        let mut gv = vec![T::ZERO; c.len()];
        for p in 0..plane {
            let (z, e) = expectation_weights(c, n, plane, p);
            let (y, g) = (out.data()[p], grad.data()[p]);
            for k in 0..n {
                let i = k * plane + p;
                let prob = e[k] / z;
                gv[i] = g * prob;
                gc[i] = -g * prob * (v[i] - y);
            }
        }
        vec![
            Some(Tensor::from_parts(s.to_vec(), gc)),
            Some(Tensor::from_parts(s.to_vec(), gv)),
        ]
    }
}

fn expectation<T: Real>(g: &mut Graph<T>, costs: Var, values: Var) -> Var {
    let out = expectation_values(g.value(costs), g.value(values));
    g.count_flops(4 * g.value(costs).len() as u64);
    g.apply(Expectation, &[costs, values], out)
}

/// Expected disparity under `softmax(-costs)` over the `[D, H, W]` levels `0..D`.
pub fn soft_argmin_full<T: Real>(g: &mut Graph<T>, costs: Var) -> Result<Var> {
    let shape = g.shape(costs).to_vec();
    expect_rank("soft_argmin_full", &shape, 3)?;
    let plane = shape[1] * shape[2];
    let levels = g.constant(Tensor::from_fn(&shape, |i| T::from_usize(i / plane)));
    Ok(expectation(g, costs, levels))
}

/// Expected disparity under `softmax(-costs)` over per-pixel candidates.
pub fn soft_argmin_candidates<T: Real>(g: &mut Graph<T>, costs: Var, cands: Var) -> Result<Var> {
    expect_rank("soft_argmin_candidates", g.shape(costs), 3)?;
    if g.shape(costs) != g.shape(cands) {
        return Err(Error::ShapeMismatch {
            op: "soft_argmin_candidates",
            lhs: g.shape(costs).to_vec(),
            rhs: g.shape(cands).to_vec(),
        });
    }
    Ok(expectation(g, costs, cands))
}

/// Bilinearly resamples an `[h, w]` disparity map to `[out_h, out_w]` and
/// rescales its values by the width ratio.
pub fn upsample_disparity<T: Real>(g: &mut Graph<T>, disp: Var, out_h: usize, out_w: usize) -> Result<Var> {
    let s = g.shape(disp).to_vec();
    expect_rank("upsample_disparity", &s, 2)?;
    if s == [out_h, out_w] {
        return Ok(disp);
    }
    let x = g.reshape(disp, &[1, s[0], s[1]])?;
    let x = g.bilinear_resize(x, out_h, out_w)?;
    let x = g.scale(x, out_w as f64 / s[1] as f64);
    g.reshape(x, &[out_h, out_w])
}

/// Weighted smooth-L1 loss of the four outputs `(d11, d12, d21, d22)`
/// against `gt`, averaged over the valid pixels.
pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    outputs: [Var; 4],
    gt: &Tensor<T>,
    mask: &ValidityMask,
    weights: &LossWeights,
) -> Result<Var> {
    expect_rank("total_loss", gt.shape(), 2)?;
    let (h, w) = (gt.shape()[0], gt.shape()[1]);
    if mask.height() != h || mask.width() != w {
        return Err(Error::ShapeMismatch {
            op: "total_loss",
            lhs: gt.shape().to_vec(),
            rhs: vec![mask.height(), mask.width()],
        });
    }
    let p = mask.count();
    if p == 0 {
        return Err(Error::EmptyMask);
    }
    let gt = g.constant(gt.clone());
    let m = g.constant(mask.as_tensor());
    let mut total = None;
    for (out, lambda) in outputs.into_iter().zip(weights.as_array()) {
        let up = upsample_disparity(g, out, h, w)?;
        let diff = g.sub(gt, up)?;
        let l = smooth_l1_op(g, diff);
        let l = g.mul(l, m)?;
        let l = g.sum(l);
        let l = g.scale(l, lambda / p as f64);
        total = Some(match total {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    Ok(total.expect("four outputs"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{finite_diff_check, finite_diff_check_many};
    use proptest::prelude::*;

    fn costs(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, v.to_vec()).unwrap()
    }

    fn full(c: Tensor<f64>) -> Tensor<f64> {
        let mut g = Graph::new();
        let c = g.constant(c);
        let d = soft_argmin_full(&mut g, c).unwrap();
        g.value(d).clone()
    }

    fn cand(c: Tensor<f64>, k: Tensor<f64>) -> Tensor<f64> {
        let mut g = Graph::new();
        let c = g.constant(c);
        let k = g.constant(k);
        let d = soft_argmin_candidates(&mut g, c, k).unwrap();
        g.value(d).clone()
    }

    #[test]
    fn uniform_costs_give_the_mean_level() {
        let d = full(Tensor::zeros(&[4, 2, 3]));
        assert!(d.data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn one_strong_level() {
        // sigma = e^0 / (e^10 + 3 e^0) on levels 1..3
        let d = full(costs(&[4, 1, 1], &[-10.0, 0.0, 0.0, 0.0]));
        let sigma = 1.0 / (10f64.exp() + 3.0);
        let expect = (1.0 + 2.0 + 3.0) * sigma;
        assert!((d.data()[0] - expect).abs() < 1e-15);
        assert!((expect - 2.72e-4).abs() < 1e-6);
    }

    #[test]
    fn shift_invariance() {
        let c = Tensor::from_fn(&[5, 2, 2], |i| (i as f64 * 0.9).sin());
        let a = full(c.clone());
        let b = full(c.map(|v| v + 7.0));
        assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn candidate_examples() {
        let k = costs(&[3, 1, 1], &[7.0, 10.0, 15.0]);
        let d = cand(Tensor::zeros(&[3, 1, 1]), k.clone());
        assert!((d.data()[0] - 32.0 / 3.0).abs() < 1e-12);

        let d = cand(costs(&[3, 1, 1], &[0.0, -20.0, 0.0]), k);
        assert!((d.data()[0] - 10.0).abs() < 1e-6);

        let d = cand(costs(&[1, 1, 1], &[3.3]), costs(&[1, 1, 1], &[4.25]));
        assert_eq!(d.data()[0], 4.25);
    }

    #[test]
    fn smooth_l1_values() {
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(-1.0), 0.5);
        assert_eq!(smooth_l1(1.0 - 1e-12), 0.5 * (1.0 - 1e-12f64).powi(2));
    }

    fn mask_one(h: usize, w: usize, y: usize, x: usize) -> ValidityMask {
        let mut bits = vec![false; h * w];
        bits[y * w + x] = true;
        ValidityMask::new(h, w, bits).unwrap()
    }

    #[test]
    fn loss_examples() {
        let gt = Tensor::<f64>::from_fn(&[4, 4], |i| 1.0 + i as f64 * 0.25);
        let mut g = Graph::new();
        let o = [(); 4].map(|_| g.param(gt.clone()));
        let l = total_loss(&mut g, o, &gt, &ValidityMask::all(4, 4), &LossWeights::default()).unwrap();
        assert_eq!(g.value(l).data(), &[0.0]);

        let mut off = gt.clone();
        off.data_mut()[5] += 2.0;
        let mut g = Graph::new();
        let o = [g.param(gt.clone()), g.param(off), g.param(gt.clone()), g.param(gt.clone())];
        let w = LossWeights {
            w11: 1.0,
            w12: 1.0,
            w21: 1.0,
            w22: 1.0,
        };
        let l = total_loss(&mut g, o, &gt, &mask_one(4, 4, 1, 1), &w).unwrap();
        assert_eq!(g.value(l).data(), &[1.5]);

        let empty = ValidityMask::new(4, 4, vec![false; 16]).unwrap();
        let mut g = Graph::new();
        let o = [(); 4].map(|_| g.param(gt.clone()));
        assert!(matches!(
            total_loss(&mut g, o, &gt, &empty, &w),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn default_weights() {
        assert_eq!(LossWeights::default().as_array(), [0.25, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn coarse_outputs_are_upsampled_with_value_scaling() {
        // a constant coarse map of 2 at 1/4 width is 8 at full width
        let gt = Tensor::<f64>::full(&[8, 16], 8.0);
        let mut g = Graph::new();
        let coarse = g.param(Tensor::full(&[2, 4], 2.0));
        let exact = g.param(gt.clone());
        let l = total_loss(
            &mut g,
            [coarse, coarse, exact, exact],
            &gt,
            &ValidityMask::all(8, 16),
            &LossWeights::default(),
        )
        .unwrap();
        assert!(g.value(l).data()[0].abs() < 1e-12);
    }

    #[test]
    fn regression_and_loss_gradients() {
        let c = Tensor::from_fn(&[4, 2, 3], |i| ((i * 7 % 9) as f64 - 4.0) / 3.0);
        let k = Tensor::from_fn(&[4, 2, 3], |i| 1.0 + (i % 5) as f64 * 1.3);
        let w = Tensor::from_fn(&[2, 3], |i| 0.5 + i as f64 * 0.1);
        let err = finite_diff_check_many(
            |g, v| {
                let d = soft_argmin_candidates(g, v[0], v[1])?;
                let wv = g.constant(w.clone());
                let y = g.mul(d, wv)?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            &[c.clone(), k],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");

        let gt = Tensor::from_fn(&[8, 12], |i| 0.3 * (i % 12) as f64 + 0.11 * (i / 12) as f64);
        let mask = ValidityMask::new(8, 12, (0..96).map(|i| i % 7 != 3).collect()).unwrap();
        let err = finite_diff_check(
            |g, v| {
                let d1 = soft_argmin_full(g, v)?;
                let d2 = g.scale(d1, 1.7);
                let fine = upsample_disparity(g, d1, 4, 6)?;
                let fine2 = g.add_scalar(fine, 0.4);
                total_loss(g, [d1, d2, fine, fine2], &gt, &mask, &LossWeights::default())
            },
            &c,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    proptest! {
        #[test]
        fn candidate_output_stays_in_hull(
            vals in prop::collection::vec((-30.0f64..30.0, 0.0f64..60.0), 1..9)
        ) {
            let n = vals.len();
            let c = Tensor::from_fn(&[n, 1, 1], |i| vals[i].0);
            let k = Tensor::from_fn(&[n, 1, 1], |i| vals[i].1);
            let d = cand(c, k.clone()).data()[0];
            let lo = k.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = k.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(d >= lo - 1e-9 && d <= hi + 1e-9);
        }

        #[test]
        fn loss_is_zero_iff_outputs_match(delta in -3.0f64..3.0, idx in 0usize..12) {
            let gt = Tensor::from_fn(&[3, 4], |i| i as f64);
            let mut off = gt.clone();
            off.data_mut()[idx] += delta;
            let mut g = Graph::new();
            let o = [g.param(gt.clone()), g.param(gt.clone()), g.param(off), g.param(gt.clone())];
            let l = total_loss(&mut g, o, &gt, &ValidityMask::all(3, 4), &LossWeights::default()).unwrap();
            let v = g.value(l).data()[0];
            if delta == 0.0 {
                prop_assert_eq!(v, 0.0);
            } else {
                prop_assert!(v > 0.0);
            }
        }
    }
}
