//! Concatenation cost volumes.
//!
//! The full volume pairs each left feature with the right feature `d` columns
//! to the left for every integer `d < D_c`. The compact volume does the same
//! for `N` per-pixel fractional candidates, sampling the right features with
//! linear interpolation along the row. Samples falling outside the frame are
//! zero in both.

use crate::error::{Error, Result};
use crate::tensor::exec::Exec;
use crate::tensor::{expect_rank, Function, Graph, Real, Tensor, Var};

/// Scalar count of a full volume `[2F, D_c, H, W]`.
pub fn full_volume_len(features: usize, d_c: usize, h: usize, w: usize) -> usize {
    2 * features * d_c * h * w
}

/// Scalar count of a compact volume `[2F, N, H, W]`.
pub fn compact_volume_len(features: usize, n: usize, h: usize, w: usize) -> usize {
    2 * features * n * h * w
}

fn check_pair(op: &'static str, left: &[usize], right: &[usize]) -> Result<()> {
    expect_rank(op, left, 3)?;
    if left != right {
        return Err(Error::ShapeMismatch {
            op,
            lhs: left.to_vec(),
            rhs: right.to_vec(),
        });
    }
    Ok(())
}

struct FullVolume {
    d_c: usize,
}

fn full_volume_values<T: Real>(left: &Tensor<T>, right: &Tensor<T>, d_c: usize) -> Tensor<T> {
    let (f, h, w) = (left.shape()[0], left.shape()[1], left.shape()[2]);
    let hw = h * w;
    let mut out = vec![T::ZERO; 2 * f * d_c * hw];
    for c in 0..f {
        let l = &left.data()[c * hw..(c + 1) * hw];
        let r = &right.data()[c * hw..(c + 1) * hw];
        for d in 0..d_c {
            out[(c * d_c + d) * hw..(c * d_c + d + 1) * hw].copy_from_slice(l);
            let dst = &mut out[((f + c) * d_c + d) * hw..((f + c) * d_c + d + 1) * hw];
            for y in 0..h {
                dst[y * w + d..(y + 1) * w].copy_from_slice(&r[y * w..(y + 1) * w - d]);
            }
        }
    }
    Tensor::from_parts(vec![2 * f, d_c, h, w], out)
}

impl<T: Real> Function<T> for FullVolume {
    fn name(&self) -> &'static str {
        "full_volume"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let shape = inputs[0].shape();
        let (f, h, w) = (shape[0], shape[1], shape[2]);
        let hw = h * w;
        let d_c = self.d_c;
        let g = grad.data();
        let mut gl = vec![T::ZERO; f * hw];
        let mut gr = vec![T::ZERO; f * hw];
        for c in 0..f {
            for d in 0..d_c {
                let src = &g[(c * d_c + d) * hw..(c * d_c + d + 1) * hw];
                for (a, &b) in gl[c * hw..(c + 1) * hw].iter_mut().zip(src) {
                    *a += b;
                }
                let src = &g[((f + c) * d_c + d) * hw..((f + c) * d_c + d + 1) * hw];
                let dst = &mut gr[c * hw..(c + 1) * hw];
                for y in 0..h {
                    for (a, &b) in dst[y * w..(y + 1) * w - d].iter_mut().zip(&src[y * w + d..(y + 1) * w]) {
                        *a += b;
                    }
                }
            }
        }
        vec![
            Some(Tensor::from_parts(shape.to_vec(), gl)),
            Some(Tensor::from_parts(shape.to_vec(), gr)),
        ]
    }
}

/// `[F, H, W]` left/right features to a `[2F, D_c, H, W]` volume.
pub fn build_full_volume<T: Real>(g: &mut Graph<T>, left: Var, right: Var, d_c: usize) -> Result<Var> {
    check_pair("build_full_volume", g.shape(left), g.shape(right))?;
    let w = g.shape(left)[2];
    if d_c == 0 || d_c > w {
        return Err(Error::InvalidArgument(format!(
            "disparity levels {d_c} must be in 1..={w} (feature width)"
        )));
    }
    let out = full_volume_values(g.value(left), g.value(right), d_c);
    g.count_flops(out.len() as u64);
    Ok(g.apply(FullVolume { d_c }, &[left, right], out))
}

/// Linear sample of `row` at fractional position `pos`, zero outside.
#[inline]
fn sample_row<T: Real>(row: &[T], pos: T) -> (T, isize, T, T) {
    let x0 = pos.floor();
    let a = pos - x0;
    let w = row.len() as isize;
    let i0 = x0.as_f64() as isize;
    let v0 = if (0..w).contains(&i0) { row[i0 as usize] } else { T::ZERO };
    let v1 = if (0..w).contains(&(i0 + 1)) { row[(i0 + 1) as usize] } else { T::ZERO };
    (v0 * (T::ONE - a) + v1 * a, i0, v0, v1)
}

/// Warped right features for one disparity plane: `out[c, y, x] = right[c, y, x - disp[y, x]]`.
fn warp_values<T: Real>(right: &[T], disp: &[T], f: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    for c in 0..f {
        for y in 0..h {
            let row = &right[c * hw + y * w..c * hw + (y + 1) * w];
            for x in 0..w {
                let pos = T::from_usize(x) - disp[y * w + x];
                out[c * hw + y * w + x] = sample_row(row, pos).0;
            }
        }
    }
}

/// Accumulates the warp's gradients for one disparity plane.
fn warp_grads<T: Real>(
    right: &[T],
    disp: &[T],
    gout: &[T],
    dims: (usize, usize, usize),
    g_right: &mut [T],
    g_disp: &mut [T],
) {
    let (f, h, w) = dims;
    let hw = h * w;
    for c in 0..f {
        for y in 0..h {
            let row = &right[c * hw + y * w..c * hw + (y + 1) * w];
            let grow = &mut g_right[c * hw + y * w..c * hw + (y + 1) * w];
            for x in 0..w {
                let go = gout[c * hw + y * w + x];
                let pos = T::from_usize(x) - disp[y * w + x];
                let (_, i0, v0, v1) = sample_row(row, pos);
                let a = pos - pos.floor();
                // d out / d pos = v1 - v0 and pos = x - disp
                g_disp[y * w + x] -= go * (v1 - v0);
                if (0..w as isize).contains(&i0) {
                    grow[i0 as usize] += go * (T::ONE - a);
                }
                if (0..w as isize).contains(&(i0 + 1)) {
                    grow[(i0 + 1) as usize] += go * a;
                }
            }
        }
    }
}

struct Warp;

impl<T: Real> Function<T> for Warp {
    fn name(&self) -> &'static str {
        "warp_right"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let (right, disp) = (inputs[0], inputs[1]);
        let s = right.shape();
        let mut gr = vec![T::ZERO; right.len()];
        let mut gd = vec![T::ZERO; disp.len()];
        warp_grads(right.data(), disp.data(), grad.data(), (s[0], s[1], s[2]), &mut gr, &mut gd);
        vec![
            Some(Tensor::from_parts(s.to_vec(), gr)),
            Some(Tensor::from_parts(disp.shape().to_vec(), gd)),
        ]
    }
}

/// Samples `right: [F, H, W]` at `x - disp[y, x]` with linear interpolation
/// along the row; differentiable in both arguments.
pub fn warp_right<T: Real>(g: &mut Graph<T>, right: Var, disp: Var) -> Result<Var> {
    let rs = g.shape(right);
    expect_rank("warp_right", rs, 3)?;
    if g.shape(disp) != &rs[1..] {
        return Err(Error::ShapeMismatch {
            op: "warp_right",
            lhs: rs.to_vec(),
            rhs: g.shape(disp).to_vec(),
        });
    }
    let (f, h, w) = (rs[0], rs[1], rs[2]);
    let mut out = vec![T::ZERO; f * h * w];
    warp_values(g.value(right).data(), g.value(disp).data(), f, h, w, &mut out);
    g.count_flops(3 * out.len() as u64);
    Ok(g.apply(Warp, &[right, disp], Tensor::from_parts(vec![f, h, w], out)))
}

struct CompactVolume;

impl<T: Real> Function<T> for CompactVolume {
    fn name(&self) -> &'static str {
        "compact_volume"
    }

    fn backward(
        &self,
        grad: &Tensor<T>,
        inputs: &[&Tensor<T>],
        _out: &Tensor<T>,
        _exec: Exec,
    ) -> Vec<Option<Tensor<T>>> {
        let (left, right, cands) = (inputs[0], inputs[1], inputs[2]);
        let s = left.shape();
        let (f, h, w) = (s[0], s[1], s[2]);
        let n = cands.shape()[0];
        let hw = h * w;
        let g = grad.data();
        let mut gl = vec![T::ZERO; f * hw];
        let mut gr = vec![T::ZERO; f * hw];
        let mut gc = vec![T::ZERO; n * hw];
        let mut plane = vec![T::ZERO; f * hw];
        for k in 0..n {
            for c in 0..f {
                let src = &g[(c * n + k) * hw..(c * n + k + 1) * hw];
                for (a, &b) in gl[c * hw..(c + 1) * hw].iter_mut().zip(src) {
                    *a += b;
                }
                plane[c * hw..(c + 1) * hw].copy_from_slice(&g[((f + c) * n + k) * hw..((f + c) * n + k + 1) * hw]);
            }
            let disp = &cands.data()[k * hw..(k + 1) * hw];
            warp_grads(right.data(), disp, &plane, (f, h, w), &mut gr, &mut gc[k * hw..(k + 1) * hw]);
        }
        vec![
            Some(Tensor::from_parts(s.to_vec(), gl)),
            Some(Tensor::from_parts(s.to_vec(), gr)),
            Some(Tensor::from_parts(cands.shape().to_vec(), gc)),
        ]
    }
}

/// `[F, H, W]` features and `[N, H, W]` candidates to a `[2F, N, H, W]`
/// volume whose slice `n` is `concat(left, warp_right(right, cands[n]))`.
pub fn build_compact_volume<T: Real>(g: &mut Graph<T>, left: Var, right: Var, cands: Var) -> Result<Var> {
    check_pair("build_compact_volume", g.shape(left), g.shape(right))?;
    let s = g.shape(left).to_vec();
    let cs = g.shape(cands);
    if cs.len() != 3 || cs[1..] != s[1..] {
        return Err(Error::ShapeMismatch {
            op: "build_compact_volume",
            lhs: s,
            rhs: cs.to_vec(),
        });
    }
    let (f, h, w, n) = (s[0], s[1], s[2], cs[0]);
    let hw = h * w;
    let mut out = vec![T::ZERO; 2 * f * n * hw];
    let mut warped = vec![T::ZERO; f * hw];
    let (lv, rv, cv) = (g.value(left).data(), g.value(right).data(), g.value(cands).data());
    for k in 0..n {
        warp_values(rv, &cv[k * hw..(k + 1) * hw], f, h, w, &mut warped);
        for c in 0..f {
            out[(c * n + k) * hw..(c * n + k + 1) * hw].copy_from_slice(&lv[c * hw..(c + 1) * hw]);
            out[((f + c) * n + k) * hw..((f + c) * n + k + 1) * hw]
                .copy_from_slice(&warped[c * hw..(c + 1) * hw]);
        }
    }
    g.count_flops(3 * (f * n * hw) as u64);
    Ok(g.apply(CompactVolume, &[left, right, cands], Tensor::from_parts(vec![2 * f, n, h, w], out)))
}
