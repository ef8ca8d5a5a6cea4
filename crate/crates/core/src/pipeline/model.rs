//! The two-stage network: configuration, parameters and forward pass.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{Conv3dStack, Dic, Stage2};
use crate::backbone::Backbone;
use crate::costvol::{build_compact_volume, build_full_volume};
use crate::data::{normalize, pad_to_multiple, unpad};
use crate::dop::{constant_offset_field, make_candidates, Dop};
use crate::error::{Error, Result};
use crate::nn::{Bound, Builder, ParamStore};
use crate::regression::{soft_argmin_candidates, soft_argmin_full, upsample_disparity};
use crate::tensor::exec::Exec;
use crate::tensor::{Graph, Real, Tensor, Var};

/// Resolution divisor of the coarse stage.
pub const COARSE_SCALE: usize = 16;
/// Resolution divisor of the fine stage.
pub const STAGE2_SCALE: usize = 4;

/// Width presets: M is `(C, C_3d, C_DOP) = (4, 8, 16)`, S halves and L doubles it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    S,
    M,
    L,
}

impl Preset {
    pub fn widths(self) -> (usize, usize, usize) {
        match self {
            Preset::S => (2, 4, 8),
            Preset::M => (4, 8, 16),
            Preset::L => (8, 16, 32),
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(Preset::S),
            "M" | "m" => Ok(Preset::M),
            "L" | "l" => Ok(Preset::L),
            other => Err(Error::InvalidArgument(format!("unknown preset {other:?}"))),
        }
    }
}

/// Where the fine-stage candidates come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OffsetMode {
    Constant,
    Dop,
}

/// How the fine-stage volume is regularized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage2Mode {
    /// Weight-shared 3D convolution over the candidate axis.
    Conv3d,
    Dic,
}

/// One cell of the module ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variant {
    pub offsets: OffsetMode,
    pub stage2: Stage2Mode,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::new(OffsetMode::Constant, Stage2Mode::Conv3d),
        Variant::new(OffsetMode::Constant, Stage2Mode::Dic),
        Variant::new(OffsetMode::Dop, Stage2Mode::Conv3d),
        Variant::new(OffsetMode::Dop, Stage2Mode::Dic),
    ];

    pub const fn new(offsets: OffsetMode, stage2: Stage2Mode) -> Self {
        Variant { offsets, stage2 }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match (self.offsets, self.stage2) {
            (OffsetMode::Constant, Stage2Mode::Conv3d) => "baseline",
            (OffsetMode::Constant, Stage2Mode::Dic) => "const+dic",
            (OffsetMode::Dop, Stage2Mode::Conv3d) => "dop+conv3d",
            (OffsetMode::Dop, Stage2Mode::Dic) => "dop+dic",
        };
        f.write_str(s)
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Backbone base width.
    pub c: usize,
    /// Stage-1 3D convolution width (also the weight-shared stage-2 width).
    pub c3d: usize,
    /// Offset-network width.
    pub c_dop: usize,
    /// Candidates per pixel in the fine stage.
    pub n: usize,
    /// Largest disparity at full resolution; a multiple of 16.
    pub d_max: usize,
    /// Hidden width of the DIC layers.
    pub dic_width: usize,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn preset(p: Preset, n: usize) -> Self {
        let (c, c3d, c_dop) = p.widths();
        ModelConfig {
            c,
            c3d,
            c_dop,
            n,
            d_max: 192,
            dic_width: 4 * c3d,
            variant: Variant::new(OffsetMode::Dop, Stage2Mode::Dic),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c", self.c),
            ("c3d", self.c3d),
            ("c_dop", self.c_dop),
            ("n", self.n),
            ("d_max", self.d_max),
            ("dic_width", self.dic_width),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive")));
        }
        if self.d_max % COARSE_SCALE != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_max = {} is not a multiple of {COARSE_SCALE}",
                self.d_max
            )));
        }
        Ok(())
    }

    /// Disparity levels of the coarse volume.
    pub fn coarse_levels(&self) -> usize {
        self.d_max / COARSE_SCALE
    }

    /// Disparity range at the fine-stage resolution.
    pub fn fine_range(&self) -> usize {
        self.d_max / STAGE2_SCALE
    }
}

/// Everything one forward pass produces, as graph handles.
#[derive(Clone, Copy, Debug)]
pub struct Outputs {
    /// Coarse maps `[H/16, W/16]`, intermediate and final head.
    pub d11: Var,
    pub d12: Var,
    /// Fine maps `[H/4, W/4]`.
    pub d21: Var,
    pub d22: Var,
    /// `[N, H/4, W/4]`.
    pub offsets: Var,
    pub cands: Var,
    /// `[H, W]`.
    pub full: Var,
}

impl Outputs {
    pub fn heads(&self) -> [Var; 4] {
        [self.d11, self.d12, self.d21, self.d22]
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore<f32>,
    pub backbone: Backbone,
    pub stage1: Conv3dStack,
    pub dop: Option<Dop>,
    pub stage2: Stage2,
}

/// Layer layout for `config`, registering parameters in `store`.
fn build<T: Real>(config: &ModelConfig, store: &mut ParamStore<T>, seed: u64) -> Result<(Backbone, Conv3dStack, Option<Dop>, Stage2)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder::new(store, &mut rng);
    let c = config.c;
    let backbone = Backbone::new(&mut b, c);
    let stage1 = Conv3dStack::new(&mut b, "stage1", 2 * 8 * c, config.c3d);
    let dop = match config.variant.offsets {
        OffsetMode::Dop => Some(Dop::new(&mut b, config.c_dop, config.n, config.fine_range())?),
        OffsetMode::Constant => None,
    };
    let f4 = 2 * c;
    let stage2 = match config.variant.stage2 {
        Stage2Mode::Dic => Stage2::Dic(Dic::new(&mut b, 2 * f4, config.n, config.dic_width)),
        Stage2Mode::Conv3d => Stage2::Conv3d(Conv3dStack::new(&mut b, "stage2", 2 * f4, config.c3d)),
    };
    Ok((backbone, stage1, dop, stage2))
}

impl Model {
    /// Fresh parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let (backbone, stage1, dop, stage2) = build(&config, &mut params, seed)?;
        Ok(Model {
            config,
            params,
            backbone,
            stage1,
            dop,
            stage2,
        })
    }

    /// Same layout, parameters converted to another scalar type.
    pub fn params_as<T: Real>(&self) -> ParamStore<T> {
        self.params.cast()
    }

    /// Full two-stage pass on normalized `[3, H, W]` images with `H, W`
    /// divisible by 16. Op costs are recorded under the scopes
    /// `features`, `stage1` and `stage2`.
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, p: &Bound, left: Var, right: Var) -> Result<Outputs> {
        let s = g.shape(left).to_vec();
        if s.len() != 3 || s[1] % COARSE_SCALE != 0 || s[2] % COARSE_SCALE != 0 || g.shape(right) != s {
            return Err(Error::InvalidShape {
                op: "forward",
                detail: format!(
                    "expected two [3, H, W] images with H, W divisible by 16, got {s:?} and {:?}",
                    g.shape(right)
                ),
            });
        }
        let (h, w) = (s[1], s[2]);
        let (hs, ws) = (h / STAGE2_SCALE, w / STAGE2_SCALE);
        let cfg = &self.config;

        let prev = g.set_scope("features");
        let fl = self.backbone.extract_features(g, p, left)?;
        let fr = self.backbone.extract_features(g, p, right)?;

        g.set_scope("stage1");
        let ul = self.backbone.stage1_unary(g, p, fl.f16)?;
        let ur = self.backbone.stage1_unary(g, p, fr.f16)?;
        let vol = build_full_volume(g, ul, ur, cfg.coarse_levels())?;
        let (c11, c12) = self.stage1.forward(g, p, vol)?;
        let d11 = soft_argmin_full(g, c11)?;
        let d12 = soft_argmin_full(g, c12)?;

        g.set_scope("stage2");
        let coarse_up = upsample_disparity(g, d12, hs, ws)?;
        let offsets = match &self.dop {
            Some(dop) => dop.predict_offsets(g, p, d12, left, hs, ws)?,
            None => g.constant(constant_offset_field(cfg.n, hs, ws)?),
        };
        let cands = make_candidates(g, coarse_up, offsets, cfg.fine_range())?;
        let vol = build_compact_volume(g, fl.f4, fr.f4, cands)?;
        let (c21, c22) = self.stage2.forward(g, p, vol)?;
        let d21 = soft_argmin_candidates(g, c21, cands)?;
        let d22 = soft_argmin_candidates(g, c22, cands)?;
        let full = upsample_disparity(g, d22, h, w)?;
        g.set_scope(prev);

        Ok(Outputs {
            d11,
            d12,
            d21,
            d22,
            offsets,
            cands,
            full,
        })
    }

    /// Inference on raw `[3, H, W]` images in `[0, 1]` of any size.
    pub fn predict(&self, left: &Tensor<f32>, right: &Tensor<f32>, exec: Exec) -> Result<Prediction> {
        let s = left.shape();
        if s.len() != 3 || s[0] != 3 || right.shape() != s {
            return Err(Error::ShapeMismatch {
                op: "predict",
                lhs: s.to_vec(),
                rhs: right.shape().to_vec(),
            });
        }
        let (h, w) = (s[1], s[2]);
        let mut g = Graph::with_exec(exec);
        let p = self.params.bind_frozen(&mut g);
        let l = g.constant(pad_to_multiple(&normalize(left), COARSE_SCALE));
        let r = g.constant(pad_to_multiple(&normalize(right), COARSE_SCALE));
        let out = self.forward(&mut g, &p, l, r)?;
        let heads = out.heads().map(|v| g.value(v).clone());
        Ok(Prediction {
            disparity: unpad(g.value(out.full), h, w),
            heads,
            offsets: g.value(out.offsets).clone(),
            cands: g.value(out.cands).clone(),
            padded: (g.shape(l)[1], g.shape(l)[2]),
            flops: g.flops().iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
    }
}

/// Concrete results of [`Model::predict`].
#[derive(Clone, Debug)]
pub struct Prediction {
    /// `[H, W]` at the input size.
    pub disparity: Tensor<f32>,
    /// `d11, d12, d21, d22` at their own (padded) resolutions.
    pub heads: [Tensor<f32>; 4],
    pub offsets: Tensor<f32>,
    pub cands: Tensor<f32>,
    /// Size the inputs were padded to.
    pub padded: (usize, usize),
    pub flops: Vec<(String, u64)>,
}
