//! Cost regularization for both stages.
//!
//! Stage 1 runs six 3x3x3 convolutions of equal width over the full-range
//! volume. Stage 2 runs the disparity-independent convolution (DIC): the
//! `[2F, N, H, W]` candidate volume is folded to `[2F*N, H, W]` so every 2D
//! kernel spans all `N` candidates with candidate-specific weights. A
//! weight-shared 3D convolution over the candidate axis is kept as the
//! ablation baseline.
//!
//! Every stack exposes two cost outputs: a head after the first layer and one
//! after the last.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{leaky, Bound, Builder, Conv2d, Conv3d, Init, ParamStore};
use crate::tensor::{expect_rank, Graph, Real, Tensor, Var};

pub const LAYERS: usize = 6;

fn drop_channel_axis<T: Real>(g: &mut Graph<T>, x: Var) -> Result<Var> {
    let s = g.shape(x).to_vec();
    g.reshape(x, &s[1..])
}

/// Six equal-width 3D convolutions with cost heads after layers 1 and 6.
#[derive(Clone, Debug)]
pub struct Conv3dStack {
    pub layers: [Conv3d; LAYERS],
    pub head_inter: Conv3d,
    pub head_final: Conv3d,
}

impl Conv3dStack {
    pub fn new<T: Real, R: Rng>(b: &mut Builder<'_, T, R>, name: &str, cin: usize, width: usize) -> Self {
        let layers = std::array::from_fn(|i| {
            let cin = if i == 0 { cin } else { width };
            b.conv3d(&format!("{name}.conv{i}"), cin, width, 3, Init::DEFAULT)
        });
        let head_inter = b.conv3d(&format!("{name}.head_inter"), width, 1, 3, Init::DEFAULT);
        let head_final = b.conv3d(&format!("{name}.head_final"), width, 1, 3, Init::DEFAULT);
        Conv3dStack {
            layers,
            head_inter,
            head_final,
        }
    }

    /// `[C, D, H, W]` volume to two `[D, H, W]` cost maps.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, vol: Var) -> Result<(Var, Var)> {
        expect_rank("conv3d_stack", g.shape(vol), 4)?;
        let mut x = vol;
        let mut inter = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(g, p, x)?;
            x = leaky(g, y);
            if i == 0 {
                let c = self.head_inter.forward(g, p, x)?;
                inter = Some(drop_channel_axis(g, c)?);
            }
        }
        let c = self.head_final.forward(g, p, x)?;
        let fin = drop_channel_axis(g, c)?;
        Ok((inter.expect("at least one layer"), fin))
    }
}

/// Disparity-independent convolution stack.
#[derive(Clone, Debug)]
pub struct Dic {
    pub n: usize,
    pub layers: [Conv2d; LAYERS],
    pub head_inter: Conv2d,
    pub head_final: Conv2d,
}

impl Dic {
    /// `cin` is the feature count per candidate; hidden layers have `width`
    /// channels regardless of `n`.
    pub fn new<T: Real, R: Rng>(b: &mut Builder<'_, T, R>, cin: usize, n: usize, width: usize) -> Self {
        let layers = std::array::from_fn(|i| {
            let cin = if i == 0 { cin * n } else { width };
            b.conv2d(&format!("dic.conv{i}"), cin, width, 3, 1, Init::DEFAULT)
        });
        let head_inter = b.conv2d("dic.head_inter", width, n, 3, 1, Init::DEFAULT);
        let head_final = b.conv2d("dic.head_final", width, n, 3, 1, Init::DEFAULT);
        Dic {
            n,
            layers,
            head_inter,
            head_final,
        }
    }

    /// `[C, N, H, W]` compact volume to two `[N, H, W]` cost maps.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, vol: Var) -> Result<(Var, Var)> {
        let s = g.shape(vol).to_vec();
        expect_rank("dic", &s, 4)?;
        if s[1] != self.n {
            return Err(Error::InvalidShape {
                op: "dic",
                detail: format!("expected {} candidates, got {s:?}", self.n),
            });
        }
        let mut x = g.reshape(vol, &[s[0] * s[1], s[2], s[3]])?;
        let mut inter = None;
        for (i, layer) in self.layers.iter().enumerate() {
            let y = layer.forward(g, p, x)?;
            x = leaky(g, y);
            if i == 0 {
                inter = Some(self.head_inter.forward(g, p, x)?);
            }
        }
        let fin = self.head_final.forward(g, p, x)?;
        Ok((inter.expect("at least one layer"), fin))
    }
}

/// Stage-2 aggregation: DIC or the weight-shared 3D baseline.
#[derive(Clone, Debug)]
pub enum Stage2 {
    Dic(Dic),
    Conv3d(Conv3dStack),
}

impl Stage2 {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, vol: Var) -> Result<(Var, Var)> {
        match self {
            Stage2::Dic(d) => d.forward(g, p, vol),
            Stage2::Conv3d(c) => c.forward(g, p, vol),
        }
    }
}

/// Direct 3x3xN weight-unshared convolution over a `[Cin, Nin, H, W]`
/// volume, producing `[Cout, Nout, H, W]`.
///
/// `w` is laid out as a 2D kernel `[Cout*Nout, Cin*Nin, 3, 3]`; the kernel for
/// output `(co, no)` at input `(ci, m)` lives at `[co*Nout + no, ci*Nin + m]`.
pub fn unshared_conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, nout: usize) -> Tensor<f64> {
    let (cin, nin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let cout = w.shape()[0] / nout;
    let k = w.shape()[2];
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros(&[cout, nout, h, wd]);
    for co in 0..cout {
        for no in 0..nout {
            let o = co * nout + no;
            for y in 0..h {
                for xx in 0..wd {
                    let mut acc = b.data()[o];
                    for ci in 0..cin {
                        for m in 0..nin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let sy = y as isize + ky as isize - pad;
                                    let sx = xx as isize + kx as isize - pad;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= wd as isize {
                                        continue;
                                    }
                                    acc += w.at(&[o, ci * nin + m, ky, kx])
                                        * x.at(&[ci, m, sy as usize, sx as usize]);
                                }
                            }
                        }
                    }
                    out.data_mut()[((co * nout + no) * h + y) * wd + xx] = acc;
                }
            }
        }
    }
    out
}

/// Reference for [`Dic::forward`] built from explicit loops over candidates.
/// Hidden activations are `[width, 1, H, W]` volumes; the heads emit
/// `[1, N, H, W]`.
pub fn dic_oracle(dic: &Dic, store: &ParamStore<f64>, vol: &Tensor<f64>) -> Result<(Tensor<f64>, Tensor<f64>)> {
    expect_rank("dic_oracle", vol.shape(), 4)?;
    let s = vol.shape();
    let leaky = |t: Tensor<f64>| t.map(|v| if v > 0.0 { v } else { crate::nn::LEAKY_SLOPE * v });
    let flat = |t: Tensor<f64>| t.reshaped(&[s[1], s[2], s[3]]);
    let mut x = vol.clone();
    let mut inter = None;
    for (i, layer) in dic.layers.iter().enumerate() {
        x = leaky(unshared_conv_oracle(&x, store.get(layer.w), store.get(layer.b), 1));
        if i == 0 {
            let h = &dic.head_inter;
            inter = Some(flat(unshared_conv_oracle(&x, store.get(h.w), store.get(h.b), dic.n))?);
        }
    }
    let h = &dic.head_final;
    let fin = flat(unshared_conv_oracle(&x, store.get(h.w), store.get(h.b), dic.n))?;
    Ok((inter.expect("at least one layer"), fin))
}
