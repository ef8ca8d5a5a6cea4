//! Normalization, cropping and padding.

use rand::Rng;

use super::StereoSample;
use crate::error::{Error, Result};
use crate::regression::{DisparityMap, ValidityMask};
use crate::tensor::Tensor;

/// Per-channel normalization constants applied to images in `[0, 1]`.
pub const NORM_MEAN: f32 = 0.5;
pub const NORM_STD: f32 = 0.5;

pub fn normalize(img: &Tensor<f32>) -> Tensor<f32> {
    img.map(|v| (v - NORM_MEAN) / NORM_STD)
}

fn crop_planes(t: &Tensor<f32>, top: usize, left: usize, h: usize, w: usize) -> Tensor<f32> {
    let s = t.shape();
    let (ih, iw) = (s[s.len() - 2], s[s.len() - 1]);
    let mut shape = s.to_vec();
    let r = shape.len();
    shape[r - 2] = h;
    shape[r - 1] = w;
    Tensor::from_fn(&shape, |i| {
        let (p, rest) = (i / (h * w), i % (h * w));
        let (y, x) = (rest / w, rest % w);
        t.data()[(p * ih + top + y) * iw + left + x]
    })
}

fn crop_mask(m: &ValidityMask, top: usize, left: usize, h: usize, w: usize) -> Result<ValidityMask> {
    let bits = (0..h * w).map(|i| m.get(top + i / w, left + i % w)).collect();
    ValidityMask::new(h, w, bits)
}

/// The `h x w` window at `(top, left)` of every field of `s`.
pub fn crop(s: &StereoSample, top: usize, left: usize, h: usize, w: usize) -> Result<StereoSample> {
    if h == 0 || w == 0 || top + h > s.height() || left + w > s.width() {
        return Err(Error::InvalidArgument(format!(
            "crop {h}x{w} at ({top}, {left}) exceeds {}x{} image",
            s.height(),
            s.width()
        )));
    }
    let mut out = StereoSample::new(
        crop_planes(&s.left, top, left, h, w),
        crop_planes(&s.right, top, left, h, w),
        DisparityMap::new(crop_planes(&s.gt.values, top, left, h, w), s.gt.downscale)?,
        crop_mask(&s.valid, top, left, h, w)?,
    )?;
    out.thin = s.thin.as_ref().map(|m| crop_mask(m, top, left, h, w)).transpose()?;
    Ok(out)
}

/// Random `crop_h x crop_w` window (shared by both views and the labels),
/// followed by normalization of both views.
pub fn preprocess<R: Rng>(s: &StereoSample, crop_h: usize, crop_w: usize, rng: &mut R) -> Result<StereoSample> {
    if crop_h > s.height() || crop_w > s.width() {
        return Err(Error::InvalidArgument(format!(
            "crop {crop_h}x{crop_w} larger than {}x{} image",
            s.height(),
            s.width()
        )));
    }
    let top = rng.gen_range(0..=s.height() - crop_h);
    let left = rng.gen_range(0..=s.width() - crop_w);
    let mut out = crop(s, top, left, crop_h, crop_w)?;
    out.left = normalize(&out.left);
    out.right = normalize(&out.right);
    Ok(out)
}

/// Zero-pads the last two axes at the bottom and right up to multiples of `m`.
pub fn pad_to_multiple(t: &Tensor<f32>, m: usize) -> Tensor<f32> {
    let s = t.shape();
    let r = s.len();
    let (h, w) = (s[r - 2], s[r - 1]);
    let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
    if (ph, pw) == (h, w) {
        return t.clone();
    }
    let mut shape = s.to_vec();
    shape[r - 2] = ph;
    shape[r - 1] = pw;
    Tensor::from_fn(&shape, |i| {
        let (p, rest) = (i / (ph * pw), i % (ph * pw));
        let (y, x) = (rest / pw, rest % pw);
        if y < h && x < w {
            t.data()[(p * h + y) * w + x]
        } else {
            0.0
        }
    })
}

/// Inverse of [`pad_to_multiple`]: the top-left `h x w` window.
pub fn unpad(t: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    crop_planes(t, 0, 0, h, w)
}
