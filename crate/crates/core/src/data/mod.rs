//! Stereo samples: synthetic generation, file formats and preprocessing.

mod dataset;
pub mod formats;
mod preprocess;
mod synth;

pub use dataset::{load_dir, write_dir};
pub use preprocess::{crop, normalize, pad_to_multiple, preprocess, unpad, NORM_MEAN, NORM_STD};
pub use synth::{gen_synthetic, synthetic_set, SceneSpec};

use crate::error::{Error, Result};
use crate::regression::{DisparityMap, ValidityMask};
use crate::tensor::Tensor;

/// A rectified pair with full-resolution ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoSample {
    /// `[3, H, W]`, values in `[0, 1]` before normalization.
    pub left: Tensor<f32>,
    pub right: Tensor<f32>,
    pub gt: DisparityMap,
    pub valid: ValidityMask,
    /// Pixels covered by thin structures, when known (synthetic scenes).
    pub thin: Option<ValidityMask>,
}

impl StereoSample {
    pub fn new(left: Tensor<f32>, right: Tensor<f32>, gt: DisparityMap, valid: ValidityMask) -> Result<Self> {
        let s = left.shape();
        if s.len() != 3 || s[0] != 3 || right.shape() != s {
            return Err(Error::ShapeMismatch {
                op: "stereo_sample",
                lhs: s.to_vec(),
                rhs: right.shape().to_vec(),
            });
        }
        if gt.height() != s[1] || gt.width() != s[2] || valid.height() != s[1] || valid.width() != s[2] {
            return Err(Error::ShapeMismatch {
                op: "stereo_sample",
                lhs: s.to_vec(),
                rhs: vec![gt.height(), gt.width(), valid.height(), valid.width()],
            });
        }
        Ok(StereoSample {
            left,
            right,
            gt,
            valid,
            thin: None,
        })
    }

    pub fn height(&self) -> usize {
        self.left.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.left.shape()[2]
    }
}
