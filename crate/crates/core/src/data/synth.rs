//! Layered synthetic stereo scenes with exact ground truth.
//!
//! A scene is a textured background plane, a few fronto-parallel rectangles
//! and a few thin vertical bars, each at an integer disparity per row. The
//! right view is rendered by shifting every layer left by its disparity and
//! letting the nearest layer win, so non-occluded pixels match exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::StereoSample;
use crate::error::{Error, Result};
use crate::regression::{DisparityMap, ValidityMask};
use crate::tensor::Tensor;

/// Parameters of one synthetic scene; identical specs give identical samples.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Foreground rectangles.
    pub layers: usize,
    pub min_disparity: u32,
    pub max_disparity: u32,
    /// Thin vertical bars.
    pub bars: usize,
    /// Upper bound on bar width in pixels.
    pub bar_width: usize,
    /// Cell size of the smooth texture component, in pixels.
    pub texture: usize,
    /// Largest per-row disparity slope of slanted layers.
    pub slant: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            height: 64,
            width: 96,
            layers: 2,
            min_disparity: 2,
            max_disparity: 40,
            bars: 2,
            bar_width: 6,
            texture: 4,
            slant: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
struct Layer {
    x0: i64,
    x1: i64,
    y0: usize,
    y1: usize,
    d0: i64,
    slope: f64,
    thin: bool,
    tex: u64,
    base: [f32; 3],
}

impl Layer {
    fn disparity(&self, y: usize) -> i64 {
        self.d0 + (self.slope * (y as f64 - self.y0 as f64)).round() as i64
    }

    fn covers(&self, y: usize, x: i64) -> bool {
        y >= self.y0 && y < self.y1 && x >= self.x0 && x < self.x1
    }

    fn color(&self, y: usize, x: i64, cell: usize) -> [f32; 3] {
        std::array::from_fn(|c| {
            let smooth = value_noise(self.tex ^ c as u64, y as f64 / cell as f64, x as f64 / cell as f64);
            let fine = unit(hash(&[self.tex, c as u64 + 3, y as u64, x as u64]));
            (0.35 * self.base[c] + 0.45 * smooth + 0.2 * fine).clamp(0.0, 1.0)
        })
    }
}

fn hash(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

fn unit(h: u64) -> f32 {
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn value_noise(seed: u64, y: f64, x: f64) -> f32 {
    let (fy, fx) = (y.floor(), x.floor());
    let (ty, tx) = ((y - fy) as f32, (x - fx) as f32);
    let at = |dy: i64, dx: i64| unit(hash(&[seed, (fy as i64 + dy) as u64, (fx as i64 + dx) as u64]));
    let top = at(0, 0) * (1.0 - tx) + at(0, 1) * tx;
    let bottom = at(1, 0) * (1.0 - tx) + at(1, 1) * tx;
    top * (1.0 - ty) + bottom * ty
}

fn build_layers(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Layer> {
    let (h, w) = (spec.height, spec.width);
    let (lo, hi) = (spec.min_disparity as i64, spec.max_disparity as i64);
    let span = hi - lo;
    let layer = |rng: &mut ChaCha8Rng, x0: i64, x1: i64, y0: usize, y1: usize, d_lo: i64, d_hi: i64, thin: bool| {
        let d0 = rng.gen_range(d_lo..=d_hi.max(d_lo));
        let slope = if spec.slant > 0.0 && !thin {
            let s = rng.gen_range(-spec.slant..=spec.slant);
            // keep the whole extent inside the disparity range
            let rows = (y1 - y0 - 1) as f64;
            let end = d0 as f64 + s * rows;
            if end.round() < lo as f64 || end.round() > hi as f64 {
                0.0
            } else {
                s
            }
        } else {
            0.0
        };
        Layer {
            x0,
            x1,
            y0,
            y1,
            d0,
            slope,
            thin,
            tex: rng.gen(),
            base: [rng.gen(), rng.gen(), rng.gen()],
        }
    };
    let mut layers = vec![layer(rng, i64::MIN / 4, i64::MAX / 4, 0, h, lo, lo + span / 3, false)];
    for _ in 0..spec.layers {
        let rw = rng.gen_range(w / 6..=w / 2).max(2) as i64;
        let rh = rng.gen_range(h / 4..=(3 * h) / 4).max(2);
        let x0 = rng.gen_range(0..=(w as i64 - rw));
        let y0 = rng.gen_range(0..=h - rh);
        layers.push(layer(rng, x0, x0 + rw, y0, y0 + rh, lo + span / 4, hi - span / 4, false));
    }
    for _ in 0..spec.bars {
        let max_w = spec.bar_width.max(1);
        let bw = rng.gen_range(2.min(max_w)..=max_w) as i64;
        let bh = rng.gen_range((3 * h) / 5..=h).max(1);
        let x0 = rng.gen_range(0..=(w as i64 - bw));
        let y0 = rng.gen_range(0..=h - bh);
        layers.push(layer(rng, x0, x0 + bw, y0, y0 + bh, lo + span / 2, hi, true));
    }
    layers
}

/// Index of the nearest layer covering `(y, x)` once every layer has been
/// shifted left by `shift * disparity`.
fn visible(layers: &[Layer], y: usize, x: i64, shift: i64) -> usize {
    let mut best = 0;
    let mut best_d = i64::MIN;
    for (i, l) in layers.iter().enumerate() {
        let d = l.disparity(y);
        if l.covers(y, x + shift * d) && d >= best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn gen_synthetic(spec: &SceneSpec) -> Result<StereoSample> {
    if spec.height < 32 || spec.width < 32 {
        return Err(Error::InvalidArgument(format!(
            "synthetic scenes need at least 32x32 pixels, got {}x{}",
            spec.height, spec.width
        )));
    }
    if 2 * spec.max_disparity as usize > spec.width {
        return Err(Error::InvalidArgument(format!(
            "disparity range {} exceeds half the width {}",
            spec.max_disparity, spec.width
        )));
    }
    if spec.min_disparity > spec.max_disparity || spec.texture == 0 {
        return Err(Error::InvalidArgument(format!("invalid scene spec {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layers = build_layers(spec, &mut rng);
    let (h, w) = (spec.height, spec.width);
    let plane = h * w;
    let mut left = Tensor::zeros(&[3, h, w]);
    let mut right = Tensor::zeros(&[3, h, w]);
    let mut gt = Tensor::zeros(&[h, w]);
    let mut valid = vec![false; plane];
    let mut thin = vec![false; plane];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let xi = x as i64;
            let li = visible(&layers, y, xi, 0);
            let l = &layers[li];
            let d = l.disparity(y);
            let cl = l.color(y, xi, spec.texture);
            let ri = visible(&layers, y, xi, 1);
            let r = &layers[ri];
            let cr = r.color(y, xi + r.disparity(y), spec.texture);
            for c in 0..3 {
                left.data_mut()[c * plane + p] = cl[c];
                right.data_mut()[c * plane + p] = cr[c];
            }
            gt.data_mut()[p] = d as f32;
            valid[p] = xi - d >= 0 && visible(&layers, y, xi - d, 1) == li;
            thin[p] = l.thin;
        }
    }
    let mut sample = StereoSample::new(
        left,
        right,
        DisparityMap::new(gt, 1)?,
        ValidityMask::new(h, w, valid)?,
    )?;
    sample.thin = Some(ValidityMask::new(h, w, thin)?);
    Ok(sample)
}

/// `count` scenes sharing `base` except for per-scene seeds derived from it.
pub fn synthetic_set(base: &SceneSpec, count: usize) -> Result<Vec<StereoSample>> {
    (0..count)
        .map(|i| {
            gen_synthetic(&SceneSpec {
                seed: hash(&[base.seed, i as u64]),
                ..base.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(d: u32) -> SceneSpec {
        SceneSpec {
            layers: 0,
            bars: 0,
            min_disparity: d,
            max_disparity: d,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn zero_disparity_plane_gives_identical_views() {
        let s = gen_synthetic(&flat(0)).unwrap();
        assert_eq!(s.left, s.right);
        assert!(s.gt.data().iter().all(|&v| v == 0.0));
        assert_eq!(s.valid.count(), 64 * 96);
    }

    #[test]
    fn single_plane_shifts_by_its_disparity() {
        let s = gen_synthetic(&flat(7)).unwrap();
        let (h, w) = (64, 96);
        for c in 0..3 {
            for y in 0..h {
                for x in 7..w {
                    assert_eq!(s.left.at(&[c, y, x]), s.right.at(&[c, y, x - 7]));
                }
            }
        }
        assert_eq!(s.valid.count(), h * (w - 7));
    }

    #[test]
    fn warp_and_compare_is_exact_on_valid_pixels() {
        let spec = SceneSpec {
            slant: 0.15,
            ..SceneSpec::default()
        };
        for s in synthetic_set(&spec, 6).unwrap() {
            let mut checked = 0;
            for y in 0..s.height() {
                for x in 0..s.width() {
                    if !s.valid.get(y, x) {
                        continue;
                    }
                    let d = s.gt.values.at(&[y, x]) as usize;
                    for c in 0..3 {
                        assert_eq!(s.left.at(&[c, y, x]), s.right.at(&[c, y, x - d]));
                    }
                    checked += 1;
                }
            }
            assert!(checked > s.height() * s.width() / 2);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = SceneSpec {
            seed: 42,
            ..SceneSpec::default()
        };
        assert_eq!(gen_synthetic(&spec).unwrap(), gen_synthetic(&spec).unwrap());
        let other = gen_synthetic(&SceneSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(gen_synthetic(&SceneSpec { seed: 42, ..SceneSpec::default() }).unwrap(), other);
    }

    #[test]
    fn thin_bars_are_marked_and_narrow() {
        let spec = SceneSpec {
            bars: 3,
            bar_width: 5,
            ..SceneSpec::default()
        };
        for s in synthetic_set(&spec, 4).unwrap() {
            let thin = s.thin.as_ref().unwrap();
            assert!(thin.count() > 0);
            for y in 0..s.height() {
                let row: Vec<bool> = (0..s.width()).map(|x| thin.get(y, x)).collect();
                // a single bar is never wider than the limit
                let mut run = 0;
                for &b in &row {
                    run = if b { run + 1 } else { 0 };
                    assert!(run <= 3 * 5);
                }
            }
        }
    }

    #[test]
    fn rejects_excessive_disparity_range() {
        let spec = SceneSpec {
            max_disparity: 49,
            ..SceneSpec::default()
        };
        assert!(gen_synthetic(&spec).is_err());
        assert!(gen_synthetic(&SceneSpec {
            max_disparity: 48,
            ..SceneSpec::default()
        })
        .is_ok());
    }

    #[test]
    fn disparities_stay_in_range() {
        let spec = SceneSpec {
            slant: 0.3,
            ..SceneSpec::default()
        };
        for s in synthetic_set(&spec, 8).unwrap() {
            assert!(s.gt.data().iter().all(|&d| (2.0..=40.0).contains(&d)));
        }
    }
}
