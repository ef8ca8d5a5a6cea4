//! Dataset evaluation of every output head.

use std::fmt::Write as _;
use std::time::Instant;

use super::model::Model;
use crate::data::{unpad, StereoSample};
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::tensor::exec::Exec;
use crate::tensor::{bilinear_resize_forward, Tensor};

pub const HEAD_NAMES: [&str; 4] = ["d11", "d12", "d21", "d22"];

/// Mean metrics over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    /// Final full-resolution output.
    pub full: Metrics,
    /// Each supervised head, upsampled to full resolution.
    pub heads: [Metrics; 4],
    pub seconds_per_image: f64,
}

impl EvalReport {
    pub fn to_kv(&self) -> String {
        let mut out = format!("count={}\n", self.count);
        out.push_str(&self.full.to_kv(""));
        for (name, m) in HEAD_NAMES.iter().zip(&self.heads) {
            out.push_str(&m.to_kv(name));
        }
        let _ = writeln!(out, "seconds_per_image={}", self.seconds_per_image);
        out
    }
}

/// Bilinear upsampling of an `[h, w]` map to `[out_h, out_w]` with values
/// scaled by the width ratio.
pub fn upsample_map(map: &Tensor<f32>, out_h: usize, out_w: usize) -> Result<Tensor<f32>> {
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let up = bilinear_resize_forward(&map.reshaped(&[1, h, w])?, out_h, out_w)?;
    let s = out_w as f32 / w as f32;
    up.map(|v| v * s).reshaped(&[out_h, out_w])
}

fn evaluate_one(model: &Model, s: &StereoSample, exec: Exec) -> Result<(Metrics, [Metrics; 4])> {
    let pred = model.predict(&s.left, &s.right, exec)?;
    let gt = s.gt.data();
    let full = Metrics::compute(pred.disparity.data(), gt, &s.valid)?;
    let (ph, pw) = pred.padded;
    let mut heads = [Metrics::default(); 4];
    for (m, head) in heads.iter_mut().zip(&pred.heads) {
        let up = unpad(&upsample_map(head, ph, pw)?, s.height(), s.width());
        *m = Metrics::compute(up.data(), gt, &s.valid)?;
    }
    Ok((full, heads))
}

/// Evaluates every sample (in parallel across samples when `exec` allows)
/// and averages the per-image metrics.
pub fn evaluate(model: &Model, data: &[StereoSample], exec: Exec) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    let start = Instant::now();
    let results = exec.map_range(data.len(), |i| evaluate_one(model, &data[i], Exec::Sequential));
    let seconds_per_image = start.elapsed().as_secs_f64() / data.len() as f64;
    let mut fulls = Vec::with_capacity(data.len());
    let mut per_head: [Vec<Metrics>; 4] = Default::default();
    for r in results {
        let (full, heads) = r?;
        fulls.push(full);
        for (acc, m) in per_head.iter_mut().zip(heads) {
            acc.push(m);
        }
    }
    let mean = |v: &[Metrics]| Metrics::mean(v).expect("nonempty");
    Ok(EvalReport {
        count: data.len(),
        full: mean(&fulls),
        heads: std::array::from_fn(|i| mean(&per_head[i])),
        seconds_per_image,
    })
}
