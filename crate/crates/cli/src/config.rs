//! TOML run configuration.

use std::path::{Path, PathBuf};

use adcp::data::{load_dir, synthetic_set, SceneSpec, StereoSample};
use adcp::pipeline::{ModelConfig, Preset, TrainConfig, Variant};
use anyhow::{bail, Context};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub ablate: AblateSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: String,
    pub c: Option<usize>,
    pub c3d: Option<usize>,
    pub c_dop: Option<usize>,
    pub n: usize,
    pub d_max: usize,
    pub dic_width: Option<usize>,
    pub variant: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            preset: "M".into(),
            c: None,
            c3d: None,
            c_dop: None,
            n: 5,
            d_max: 192,
            dic_width: None,
            variant: "dop+dic".into(),
        }
    }
}

impl ModelSection {
    pub fn resolve(&self) -> anyhow::Result<ModelConfig> {
        let preset: Preset = self.preset.parse()?;
        let mut cfg = ModelConfig::preset(preset, self.n);
        cfg.c = self.c.unwrap_or(cfg.c);
        cfg.c3d = self.c3d.unwrap_or(cfg.c3d);
        cfg.c_dop = self.c_dop.unwrap_or(cfg.c_dop);
        cfg.dic_width = self.dic_width.unwrap_or(4 * cfg.c3d);
        cfg.d_max = self.d_max;
        cfg.variant = self.variant.parse::<Variant>()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A directory of `left/`, `right/`, `disp/` or a generated set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub dir: Option<PathBuf>,
    pub synthetic: Option<Synthetic>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synthetic {
    pub count: usize,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub layers: usize,
    pub bars: usize,
    pub bar_width: usize,
    pub max_disparity: u32,
    pub slant: f64,
}

impl Default for Synthetic {
    fn default() -> Self {
        let d = SceneSpec::default();
        Synthetic {
            count: 8,
            seed: d.seed,
            height: d.height,
            width: d.width,
            layers: d.layers,
            bars: d.bars,
            bar_width: d.bar_width,
            max_disparity: d.max_disparity,
            slant: d.slant,
        }
    }
}

impl Source {
    pub fn check(&self, what: &str) -> anyhow::Result<()> {
        match (&self.dir, &self.synthetic) {
            (Some(dir), None) => {
                for sub in ["left", "right", "disp"] {
                    let p = dir.join(sub);
                    if !p.is_dir() {
                        bail!("{what}: missing directory {}", p.display());
                    }
                }
                Ok(())
            }
            (None, Some(_)) => Ok(()),
            _ => bail!("{what}: set exactly one of `dir` or `synthetic`"),
        }
    }

    pub fn load(&self, seed_override: Option<u64>) -> anyhow::Result<Vec<StereoSample>> {
        if let Some(dir) = &self.dir {
            return load_dir(dir).with_context(|| format!("loading {}", dir.display()));
        }
        let s = self.synthetic.clone().unwrap_or_default();
        let spec = SceneSpec {
            seed: seed_override.unwrap_or(s.seed),
            height: s.height,
            width: s.width,
            layers: s.layers,
            bars: s.bars,
            bar_width: s.bar_width,
            max_disparity: s.max_disparity,
            slant: s.slant,
            ..SceneSpec::default()
        };
        Ok(synthetic_set(&spec, s.count)?)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<Source>,
    pub val: Option<Source>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    pub iters: u64,
    pub lr_halving_period: u64,
    pub crop: Option<[usize; 2]>,
    pub seed: u64,
    pub val_every: u64,
    pub loss_weights: [f64; 4],
    /// Written at the end of training.
    pub checkpoint: Option<PathBuf>,
    pub resume: Option<PathBuf>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            lr: d.lr,
            beta1: d.beta1,
            beta2: d.beta2,
            batch: d.batch,
            iters: d.iters,
            lr_halving_period: d.lr_halving_period,
            crop: None,
            seed: d.seed,
            val_every: d.val_every,
            loss_weights: d.weights.as_array(),
            checkpoint: None,
            resume: None,
        }
    }
}

impl TrainSection {
    pub fn resolve(&self, seed: Option<u64>) -> anyhow::Result<TrainConfig> {
        if !(self.lr > 0.0) {
            bail!("train.lr must be positive");
        }
        if self.batch == 0 {
            bail!("train.batch must be positive");
        }
        let [w11, w12, w21, w22] = self.loss_weights;
        Ok(TrainConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            batch: self.batch,
            iters: self.iters,
            lr_halving_period: self.lr_halving_period,
            crop: self.crop.map(|[h, w]| (h, w)),
            seed: seed.unwrap_or(self.seed),
            val_every: self.val_every,
            weights: adcp::regression::LossWeights { w11, w12, w21, w22 },
            ..TrainConfig::default()
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub checkpoint: Option<PathBuf>,
    pub left: Option<PathBuf>,
    pub right: Option<PathBuf>,
    /// Gray-level multiplier of the exported image.
    pub scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateSection {
    pub variants: Vec<String>,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            variants: Variant::ALL.iter().map(|v| v.to_string()).collect(),
            ns: vec![3, 5],
            seeds: vec![0, 1, 2],
        }
    }
}

pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn require_file(path: &Option<PathBuf>, key: &str) -> anyhow::Result<PathBuf> {
    let p = path.clone().with_context(|| format!("`{key}` is not set"))?;
    if !p.is_file() {
        bail!("{key}: no such file {}", p.display());
    }
    Ok(p)
}

/// Fails early when the directory an output will be written to is missing.
pub fn check_out_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            bail!("output directory {} does not exist", p.display())
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[model]\nwidth = 3").is_err());
        assert!(toml::from_str::<RunConfig>("[nope]").is_err());
    }

    #[test]
    fn defaults_resolve() {
        let c: RunConfig = toml::from_str("").unwrap();
        let m = c.model.resolve().unwrap();
        assert_eq!((m.c, m.c3d, m.n, m.d_max), (4, 8, 5, 192));
        assert_eq!(c.train.resolve(Some(9)).unwrap().seed, 9);
    }

    #[test]
    fn overrides_apply() {
        let c: RunConfig = toml::from_str(
            "[model]\npreset = \"S\"\nn = 3\nd_max = 64\nvariant = \"baseline\"\n[train]\ncrop = [32, 48]\n",
        )
        .unwrap();
        let m = c.model.resolve().unwrap();
        assert_eq!((m.c, m.n, m.d_max, m.variant), (2, 3, 64, Variant::ALL[0]));
        assert_eq!(c.train.resolve(None).unwrap().crop, Some((32, 48)));
        let bad: RunConfig = toml::from_str("[model]\nd_max = 50").unwrap();
        assert!(bad.model.resolve().is_err());
    }
}
