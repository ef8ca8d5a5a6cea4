//! Disparity error metrics over a validity mask.
//!
//! * EPE: mean absolute error in pixels.
//! * `px(t)`: percentage of pixels with error above `t`.
//! * D1: percentage with error above 3 px *and* above 5% of the true value.
//! * A95: largest error among the best 95% of pixels (nearest rank).

use std::fmt;

use crate::error::{Error, Result};
use crate::regression::ValidityMask;

fn errors(pred: &[f32], gt: &[f32], mask: &ValidityMask) -> Result<Vec<(f64, f64)>> {
    if pred.len() != gt.len() || gt.len() != mask.bits().len() {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            lhs: vec![pred.len(), gt.len()],
            rhs: vec![mask.height(), mask.width()],
        });
    }
    let errs: Vec<(f64, f64)> = pred
        .iter()
        .zip(gt)
        .zip(mask.bits())
        .filter(|(_, &m)| m)
        .map(|((&p, &t), _)| ((p as f64 - t as f64).abs(), t as f64))
        .collect();
    if errs.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(errs)
}

fn percent(hits: usize, total: usize) -> f64 {
    100.0 * hits as f64 / total as f64
}

pub fn epe(pred: &[f32], gt: &[f32], mask: &ValidityMask) -> Result<f64> {
    let e = errors(pred, gt, mask)?;
    Ok(e.iter().map(|(err, _)| err).sum::<f64>() / e.len() as f64)
}

pub fn bad_pixel(pred: &[f32], gt: &[f32], mask: &ValidityMask, threshold: f64) -> Result<f64> {
    let e = errors(pred, gt, mask)?;
    Ok(percent(e.iter().filter(|(err, _)| *err > threshold).count(), e.len()))
}

pub fn is_d1_outlier(err: f64, gt: f64) -> bool {
    err > 3.0 && err > 0.05 * gt.abs()
}

pub fn d1(pred: &[f32], gt: &[f32], mask: &ValidityMask) -> Result<f64> {
    let e = errors(pred, gt, mask)?;
    Ok(percent(e.iter().filter(|&&(err, t)| is_d1_outlier(err, t)).count(), e.len()))
}

pub fn a95(pred: &[f32], gt: &[f32], mask: &ValidityMask) -> Result<f64> {
    let mut e: Vec<f64> = errors(pred, gt, mask)?.into_iter().map(|(err, _)| err).collect();
    e.sort_by(f64::total_cmp);
    let rank = (95 * e.len()).div_ceil(100).max(1);
    Ok(e[rank - 1])
}

/// One evaluation record.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub epe: f64,
    pub d1: f64,
    pub px2: f64,
    pub px3: f64,
    pub a95: f64,
}

impl Metrics {
    pub const KEYS: [&'static str; 5] = ["epe", "d1", "px2", "px3", "a95"];

    pub fn compute(pred: &[f32], gt: &[f32], mask: &ValidityMask) -> Result<Self> {
        Ok(Metrics {
            epe: epe(pred, gt, mask)?,
            d1: d1(pred, gt, mask)?,
            px2: bad_pixel(pred, gt, mask, 2.0)?,
            px3: bad_pixel(pred, gt, mask, 3.0)?,
            a95: a95(pred, gt, mask)?,
        })
    }

    pub fn values(&self) -> [f64; 5] {
        [self.epe, self.d1, self.px2, self.px3, self.a95]
    }

    /// Element-wise mean of several records.
    pub fn mean(records: &[Metrics]) -> Option<Metrics> {
        if records.is_empty() {
            return None;
        }
        let n = records.len() as f64;
        let mut acc = [0.0; 5];
        for r in records {
            for (a, v) in acc.iter_mut().zip(r.values()) {
                *a += v;
            }
        }
        Some(Metrics {
            epe: acc[0] / n,
            d1: acc[1] / n,
            px2: acc[2] / n,
            px3: acc[3] / n,
            a95: acc[4] / n,
        })
    }

    /// `key=value` lines, optionally prefixed (`prefix.key=value`).
    pub fn to_kv(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in Self::KEYS.iter().zip(self.values()) {
            if prefix.is_empty() {
                out.push_str(&format!("{k}={v}\n"));
            } else {
                out.push_str(&format!("{prefix}.{k}={v}\n"));
            }
        }
        out
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epe={:.4} d1={:.2}% 2px={:.2}% 3px={:.2}% a95={:.3}",
            self.epe, self.d1, self.px2, self.px3, self.a95
        )
    }
}
