//! Disparity candidates for the fine stage.
//!
//! Candidates are `clamp(d + k^n, 0, D - 1)` around the upsampled coarse
//! disparity `d`. The offsets `k^n` are either the fixed integers
//! `n - ceil(N/2)` or predicted per pixel by a small 2D network that sees the
//! coarse disparity and the left image. The first offset is always zero.

use rand::Rng;

use crate::backbone::ResidualBlock;
use crate::error::{Error, Result};
use crate::nn::{leaky, Bound, Builder, Conv2d, Init};
use crate::tensor::{expect_rank, Graph, Real, Tensor, Var};

/// `k^n = n - ceil(N/2)` for `n = 1..=N`.
pub fn constant_offsets(n: usize) -> Result<Vec<i64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("number of candidates must be at least 1".into()));
    }
    let half = n.div_ceil(2) as i64;
    Ok((1..=n as i64).map(|i| i - half).collect())
}

/// Constant offsets broadcast to `[N, H, W]`, zero offset first.
pub fn constant_offset_field<T: Real>(n: usize, h: usize, w: usize) -> Result<Tensor<T>> {
    let ordered = zero_first(&constant_offsets(n)?);
    Ok(Tensor::from_fn(&[n, h, w], |i| T::from_f64(ordered[i / (h * w)] as f64)))
}

/// Moves the single zero entry to the front, keeping the others in order.
fn zero_first(offsets: &[i64]) -> Vec<i64> {
    let mut out = vec![0];
    out.extend(offsets.iter().copied().filter(|&k| k != 0));
    out
}

/// Offset-prediction network.
#[derive(Clone, Debug)]
pub struct Dop {
    pub n: usize,
    /// Disparity range at the target resolution; the disparity guidance
    /// channel is divided by it so it lives in `[0, 1]` like the image.
    pub d_range: usize,
    pub entry: Conv2d,
    pub blocks: [ResidualBlock; 4],
    /// `None` when `N = 1`: the only offset is the fixed zero.
    pub head: Option<Conv2d>,
}

impl Dop {
    /// The head starts with small weights and a bias equal to the nonzero
    /// constant offsets, so an untrained network proposes the constant set.
    pub fn new<T: Real, R: Rng>(b: &mut Builder<'_, T, R>, c_dop: usize, n: usize, d_range: usize) -> Result<Self> {
        if d_range == 0 {
            return Err(Error::InvalidArgument("disparity range must be positive".into()));
        }
        let offsets = zero_first(&constant_offsets(n)?);
        let entry = b.conv2d("dop.entry", 4, c_dop, 3, 1, Init::DEFAULT);
        let blocks = std::array::from_fn(|i| ResidualBlock::new(b, &format!("dop.block{i}"), c_dop, c_dop, 1));
        let head = (n > 1).then(|| {
            let head = b.conv2d("dop.head", c_dop, n - 1, 3, 1, Init::He { gain: 0.1 });
            let bias = b.store.get_mut(head.b);
            for (dst, &k) in bias.data_mut().iter_mut().zip(&offsets[1..]) {
                *dst = T::from_f64(k as f64);
            }
            head
        });
        Ok(Dop {
            n,
            d_range,
            entry,
            blocks,
            head,
        })
    }

    /// Maps a `[4, H, W]` guidance tensor (disparity, RGB) to `[N, H, W]` offsets.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, guide: Var) -> Result<Var> {
        let s = g.shape(guide).to_vec();
        if s.len() != 3 || s[0] != 4 {
            return Err(Error::InvalidShape {
                op: "dop",
                detail: format!("expected [4, H, W] guidance, got {s:?}"),
            });
        }
        let Some(head) = &self.head else {
            return Ok(g.constant(Tensor::zeros(&[1, s[1], s[2]])));
        };
        let x = self.entry.forward(g, p, guide)?;
        let mut x = leaky(g, x);
        for block in &self.blocks {
            x = block.forward(g, p, x)?;
        }
        let k = head.forward(g, p, x)?;
        g.pad(k, 0, 1, 0)
    }

    /// Resizes the coarse disparity (with value scaling) and the left image
    /// to `(hs, ws)` and predicts offsets there.
    pub fn predict_offsets<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        coarse: Var,
        left: Var,
        hs: usize,
        ws: usize,
    ) -> Result<Var> {
        let guide = guidance(g, coarse, left, hs, ws, 1.0 / self.d_range as f64)?;
        self.forward(g, p, guide)
    }
}

/// `[4, hs, ws]`: resized coarse disparity (in target pixels, times
/// `disp_gain`) over the resized left image.
pub fn guidance<T: Real>(
    g: &mut Graph<T>,
    coarse: Var,
    left: Var,
    hs: usize,
    ws: usize,
    disp_gain: f64,
) -> Result<Var> {
    let cs = g.shape(coarse).to_vec();
    expect_rank("dop_guidance", &cs, 2)?;
    expect_rank("dop_guidance", g.shape(left), 3)?;
    let d = g.reshape(coarse, &[1, cs[0], cs[1]])?;
    let d = g.bilinear_resize(d, hs, ws)?;
    let d = g.scale(d, disp_gain * ws as f64 / cs[1] as f64);
    let img = g.bilinear_resize(left, hs, ws)?;
    g.concat(&[d, img], 0)
}

/// `cands[n] = clamp(coarse_up + offsets[n], 0, d_range - 1)`.
pub fn make_candidates<T: Real>(g: &mut Graph<T>, coarse_up: Var, offsets: Var, d_range: usize) -> Result<Var> {
    let cs = g.shape(coarse_up).to_vec();
    let os = g.shape(offsets).to_vec();
    expect_rank("make_candidates", &cs, 2)?;
    expect_rank("make_candidates", &os, 3)?;
    if os[1..] != cs[..] {
        return Err(Error::ShapeMismatch {
            op: "make_candidates",
            lhs: cs,
            rhs: os,
        });
    }
    if d_range == 0 {
        return Err(Error::InvalidArgument("disparity range must be positive".into()));
    }
    let d = g.reshape(coarse_up, &[1, cs[0], cs[1]])?;
    let d = g.concat(&vec![d; os[0]], 0)?;
    let c = g.add(d, offsets)?;
    Ok(g.clamp(c, 0.0, (d_range - 1) as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamStore;
    use crate::tensor::gradcheck::spot_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_offset_sets() {
        assert_eq!(constant_offsets(5).unwrap(), vec![-2, -1, 0, 1, 2]);
        assert_eq!(constant_offsets(3).unwrap(), vec![-1, 0, 1]);
        assert_eq!(constant_offsets(1).unwrap(), vec![0]);
        assert_eq!(constant_offsets(4).unwrap(), vec![-1, 0, 1, 2]);
        assert!(constant_offsets(0).is_err());
        for n in 1..10 {
            let k = constant_offsets(n).unwrap();
            assert_eq!(k.iter().filter(|&&v| v == 0).count(), 1);
        }
    }

    fn candidates(d: f64, offs: &[f64], range: usize) -> Vec<f64> {
        let mut g = Graph::<f64>::new();
        let d = g.constant(Tensor::full(&[1, 1], d));
        let o = g.constant(Tensor::new(&[offs.len(), 1, 1], offs.to_vec()).unwrap());
        let c = make_candidates(&mut g, d, o, range).unwrap();
        g.value(c).data().to_vec()
    }

    #[test]
    fn candidate_examples() {
        assert_eq!(candidates(10.0, &[0.0, -3.0, 5.0], 48), vec![10.0, 7.0, 15.0]);
        assert_eq!(candidates(1.0, &[0.0, -3.0], 48), vec![1.0, 0.0]);
        assert_eq!(candidates(46.5, &[0.0, 3.0], 48), vec![46.5, 47.0]);
        let field = constant_offset_field::<f64>(5, 1, 1).unwrap();
        let c = candidates(20.0, field.data(), 48);
        assert_eq!(c, vec![20.0, 18.0, 19.0, 21.0, 22.0]);
    }

    fn build(c_dop: usize, n: usize, seed: u64) -> (ParamStore<f64>, Dop) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dop = Dop::new(&mut Builder::new(&mut store, &mut rng), c_dop, n, 48).unwrap();
        (store, dop)
    }

    fn inputs(g: &mut Graph<f64>) -> (Var, Var) {
        let coarse = g.constant(Tensor::from_fn(&[2, 3], |i| 1.0 + i as f64 * 0.5));
        let left = g.constant(Tensor::from_fn(&[3, 32, 48], |i| ((i * 37 % 101) as f64) / 50.0 - 1.0));
        (coarse, left)
    }

    #[test]
    fn zero_network_predicts_zero_offsets() {
        let (mut store, dop) = build(4, 5, 1);
        store.zero_all();
        let mut g = Graph::new();
        let p = store.bind_frozen(&mut g);
        let (coarse, left) = inputs(&mut g);
        let k = dop.predict_offsets(&mut g, &p, coarse, left, 8, 12).unwrap();
        assert_eq!(g.shape(k), &[5, 8, 12]);
        assert!(g.value(k).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_channel_is_always_zero_and_shapes_follow_n() {
        for n in [1, 2, 3, 5, 7] {
            let (store, dop) = build(4, n, 2);
            let mut g = Graph::new();
            let p = store.bind_frozen(&mut g);
            let (coarse, left) = inputs(&mut g);
            let k = dop.predict_offsets(&mut g, &p, coarse, left, 4, 6).unwrap();
            assert_eq!(g.shape(k), &[n, 4, 6]);
            assert!(g.value(k).data()[..24].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn untrained_network_starts_near_constant_offsets() {
        let (store, dop) = build(4, 5, 3);
        let mut g = Graph::new();
        let p = store.bind_frozen(&mut g);
        let (coarse, left) = inputs(&mut g);
        let k = dop.predict_offsets(&mut g, &p, coarse, left, 8, 12).unwrap();
        let expect = constant_offset_field::<f64>(5, 8, 12).unwrap();
        let diff = g.value(k).max_abs_diff(&expect);
        assert!(diff > 0.0 && diff < 1.0, "{diff}");
    }

    #[test]
    fn guidance_scales_disparity_with_width() {
        let mut g = Graph::<f64>::new();
        let coarse = g.constant(Tensor::full(&[2, 3], 2.5));
        let left = g.constant(Tensor::zeros(&[3, 32, 48]));
        let x = guidance(&mut g, coarse, left, 8, 12, 1.0).unwrap();
        assert_eq!(g.shape(x), &[4, 8, 12]);
        assert!(g.value(x).data()[..96].iter().all(|&v| (v - 10.0).abs() < 1e-12));
    }

    #[test]
    fn offsets_are_differentiable_end_to_end() {
        let (store, dop) = build(2, 3, 4);
        let coarse = Tensor::from_fn(&[2, 2], |i| 1.0 + i as f64 * 0.7);
        let left = Tensor::from_fn(&[3, 8, 8], |i| ((i * 13 % 17) as f64) / 8.0 - 1.0);
        let mut xs = vec![coarse, left];
        xs.extend(store.tensors().iter().cloned());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let coords: Vec<(usize, usize)> = (0..xs.len())
            .flat_map(|i| {
                let len = xs[i].len();
                (0..3).map(move |_| i).zip(std::iter::repeat(len))
            })
            .map(|(i, len)| (i, rng.gen_range(0..len)))
            .collect();
        let res = spot_check(
            |g, v| {
                let p = Bound::from_vars(v[2..].to_vec());
                let k = dop.predict_offsets(g, &p, v[0], v[1], 4, 4)?;
                let up = g_reshape(g, v[0])?;
                let up = g.bilinear_resize(up, 4, 4)?;
                let up = g.scale(up, 2.0);
                let up = g.reshape(up, &[4, 4])?;
                let c = make_candidates(g, up, k, 16)?;
                let y = g.mul(c, c)?;
                Ok(g.sum(y))
            },
            &xs,
            &coords,
            1e-6,
        )
        .unwrap();
        assert!(res.max_rel_err < 1e-4, "{res:?}");
    }

    fn g_reshape(g: &mut Graph<f64>, v: Var) -> Result<Var> {
        let s = g.shape(v).to_vec();
        g.reshape(v, &[1, s[0], s[1]])
    }
}
