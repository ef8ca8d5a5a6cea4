//! Shared-weight residual feature extractor.
//!
//! A stride-1 stem at full resolution is followed by one stride-2 residual
//! block per scale, giving features at 1/2, 1/4, 1/8 and 1/16 resolution with
//! `2C, 2C, 4C, 8C` channels. The same parameters serve both views.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{leaky, Bound, Builder, Conv2d, Init};
use crate::tensor::{Graph, Real, Var};

/// `leaky(conv2(leaky(conv1(x))) + skip(x))`, where `skip` is the identity or
/// a strided 1x1 projection.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub proj: Option<Conv2d>,
    pub stride: usize,
}

impl ResidualBlock {
    pub fn new<T: Real, R: Rng>(
        b: &mut Builder<'_, T, R>,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Self {
        assert!(stride == 1 || stride == 2, "residual block stride must be 1 or 2");
        let conv1 = b.conv2d(&format!("{name}.conv1"), cin, cout, 3, stride, Init::DEFAULT);
        let conv2 = b.conv2d(&format!("{name}.conv2"), cout, cout, 3, 1, Init::DEFAULT);
        let proj = (stride != 1 || cin != cout)
            .then(|| b.conv2d(&format!("{name}.proj"), cin, cout, 1, stride, Init::DEFAULT));
        ResidualBlock {
            conv1,
            conv2,
            proj,
            stride,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 3 || shape[1] % self.stride != 0 || shape[2] % self.stride != 0 {
            return Err(Error::InvalidShape {
                op: "residual_block",
                detail: format!("input {shape:?} not divisible by stride {}", self.stride),
            });
        }
        let h = self.conv1.forward(g, p, x)?;
        let h = leaky(g, h);
        let h = self.conv2.forward(g, p, h)?;
        let skip = match &self.proj {
            Some(proj) => proj.forward(g, p, x)?,
            None => x,
        };
        let y = g.add(h, skip)?;
        Ok(leaky(g, y))
    }
}

/// Feature maps of one view.
#[derive(Clone, Copy, Debug)]
pub struct FeaturePyramid {
    pub f2: Var,
    pub f4: Var,
    pub f8: Var,
    pub f16: Var,
}

#[derive(Clone, Debug)]
pub struct Backbone {
    pub c: usize,
    pub stem: Conv2d,
    pub down: [ResidualBlock; 4],
    /// Stage-1 unary blocks at 1/16 resolution.
    pub unary: [ResidualBlock; 2],
}

impl Backbone {
    pub fn new<T: Real, R: Rng>(b: &mut Builder<'_, T, R>, c: usize) -> Self {
        let stem = b.conv2d("backbone.stem", 3, 2 * c, 3, 1, Init::DEFAULT);
        let widths = [2 * c, 2 * c, 2 * c, 4 * c, 8 * c];
        let down = std::array::from_fn(|i| {
            ResidualBlock::new(b, &format!("backbone.down{i}"), widths[i], widths[i + 1], 2)
        });
        let unary = std::array::from_fn(|i| {
            ResidualBlock::new(b, &format!("backbone.unary{i}"), 8 * c, 8 * c, 1)
        });
        Backbone {
            c,
            stem,
            down,
            unary,
        }
    }

    /// Pyramid channel counts `(2C, 2C, 4C, 8C)`.
    pub fn channels(&self) -> [usize; 4] {
        let c = self.c;
        [2 * c, 2 * c, 4 * c, 8 * c]
    }

    pub fn extract_features<T: Real>(&self, g: &mut Graph<T>, p: &Bound, img: Var) -> Result<FeaturePyramid> {
        let shape = g.shape(img);
        if shape.len() != 3 || shape[0] != 3 || shape[1] % 16 != 0 || shape[2] % 16 != 0 {
            return Err(Error::InvalidShape {
                op: "extract_features",
                detail: format!("expected [3, H, W] with H, W divisible by 16, got {shape:?}"),
            });
        }
        let x = self.stem.forward(g, p, img)?;
        let x = leaky(g, x);
        let f2 = self.down[0].forward(g, p, x)?;
        let f4 = self.down[1].forward(g, p, f2)?;
        let f8 = self.down[2].forward(g, p, f4)?;
        let f16 = self.down[3].forward(g, p, f8)?;
        Ok(FeaturePyramid { f2, f4, f8, f16 })
    }

    pub fn stage1_unary<T: Real>(&self, g: &mut Graph<T>, p: &Bound, f16: Var) -> Result<Var> {
        let x = self.unary[0].forward(g, p, f16)?;
        self.unary[1].forward(g, p, x)
    }
}
