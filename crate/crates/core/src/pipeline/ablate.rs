//! Paired training runs over module variants, candidate counts and seeds.

use std::fmt::Write as _;

use super::eval::evaluate;
use super::model::{Model, ModelConfig, Variant, STAGE2_SCALE};
use super::train::{TrainConfig, Trainer};
use crate::data::StereoSample;
use crate::error::{Error, Result};
use crate::regression::ValidityMask;
use crate::tensor::exec::Exec;

#[derive(Clone, Debug)]
pub struct AblationPlan {
    /// Widths and disparity range shared by every run; `n` and `variant`
    /// are overridden per row.
    pub base: ModelConfig,
    pub variants: Vec<Variant>,
    pub ns: Vec<usize>,
    pub seeds: Vec<u64>,
    /// `seed` is overridden per row.
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub n: usize,
    pub seed: u64,
    pub epe: f64,
    pub d1: f64,
    /// Forward op count of the fine stage on the first validation image.
    pub stage2_flops: u64,
    /// Largest `|offset|` (fine-stage pixels) on thin-structure pixels of the
    /// validation set, when the set marks them.
    pub thin_offset_range: Option<f64>,
    /// The same over all other pixels.
    pub flat_offset_range: Option<f64>,
}

/// Whether any full-resolution pixel of each fine-stage block is marked.
fn downsample_mask(m: &ValidityMask, hs: usize, ws: usize) -> Vec<bool> {
    let mut out = vec![false; hs * ws];
    for y in 0..m.height() {
        for x in 0..m.width() {
            if m.get(y, x) {
                let (qy, qx) = (y / STAGE2_SCALE, x / STAGE2_SCALE);
                if qy < hs && qx < ws {
                    out[qy * ws + qx] = true;
                }
            }
        }
    }
    out
}

/// `(thin, flat)` offset magnitudes of `model` over `data`.
pub fn offset_ranges(model: &Model, data: &[StereoSample]) -> Result<(Option<f64>, Option<f64>)> {
    let (mut thin, mut flat) = (None::<f64>, None::<f64>);
    for s in data {
        let Some(mask) = &s.thin else { continue };
        let pred = model.predict(&s.left, &s.right, Exec::default())?;
        let k = &pred.offsets;
        let (n, hs, ws) = (k.shape()[0], k.shape()[1], k.shape()[2]);
        let q = downsample_mask(mask, hs, ws);
        for c in 0..n {
            for (p, &is_thin) in q.iter().enumerate() {
                let v = (k.data()[c * hs * ws + p] as f64).abs();
                let slot = if is_thin { &mut thin } else { &mut flat };
                *slot = Some(slot.map_or(v, |m| m.max(v)));
            }
        }
    }
    Ok((thin, flat))
}

pub fn run_row(
    plan: &AblationPlan,
    variant: Variant,
    n: usize,
    seed: u64,
    train: &[StereoSample],
    val: &[StereoSample],
) -> Result<AblationRow> {
    let config = ModelConfig {
        n,
        variant,
        ..plan.base.clone()
    };
    let model = Model::new(config, seed)?;
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            seed,
            ..plan.train.clone()
        },
    );
    trainer.run(train, &[], |_| {})?;
    let model = trainer.model;
    let report = evaluate(&model, val, plan.train.exec)?;
    let first = &val[0];
    let pred = model.predict(&first.left, &first.right, plan.train.exec)?;
    let stage2_flops = pred.flops.iter().find(|(k, _)| k == "stage2").map_or(0, |(_, v)| *v);
    let (thin, flat) = offset_ranges(&model, val)?;
    Ok(AblationRow {
        variant,
        n,
        seed,
        epe: report.full.epe,
        d1: report.full.d1,
        stage2_flops,
        thin_offset_range: thin,
        flat_offset_range: flat,
    })
}

/// Trains and evaluates every `(variant, n, seed)` combination with the
/// same data, calling `on_row` as rows finish.
pub fn run_ablation(
    plan: &AblationPlan,
    train: &[StereoSample],
    val: &[StereoSample],
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InvalidArgument("ablation needs training and validation data".into()));
    }
    let mut rows = Vec::new();
    for &n in &plan.ns {
        for &variant in &plan.variants {
            for &seed in &plan.seeds {
                let row = run_row(plan, variant, n, seed, train, val)?;
                on_row(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Median EPE over seeds for one `(variant, n)` cell.
pub fn median_epe(rows: &[AblationRow], variant: Variant, n: usize) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.variant == variant && r.n == n)
        .map(|r| r.epe)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

fn fmt_range(r: Option<f64>) -> String {
    r.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

/// Aligned-column table of the rows.
pub fn format_table(rows: &[AblationRow]) -> String {
    let mut out = format!(
        "{:<12} {:>3} {:>6} {:>9} {:>8} {:>14} {:>10} {:>10}\n",
        "variant", "n", "seed", "epe", "d1", "stage2_flops", "thin_k", "flat_k"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<12} {:>3} {:>6} {:>9.4} {:>8.3} {:>14} {:>10} {:>10}",
            r.variant.to_string(),
            r.n,
            r.seed,
            r.epe,
            r.d1,
            r.stage2_flops,
            fmt_range(r.thin_offset_range),
            fmt_range(r.flat_offset_range),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: Variant, n: usize, epe: f64) -> AblationRow {
        AblationRow {
            variant,
            n,
            seed: 0,
            epe,
            d1: 0.0,
            stage2_flops: 0,
            thin_offset_range: None,
            flat_offset_range: Some(1.0),
        }
    }

    #[test]
    fn medians_per_cell() {
        let v = Variant::ALL[3];
        let rows = vec![row(v, 3, 3.0), row(v, 3, 1.0), row(v, 3, 2.0), row(v, 5, 9.0), row(Variant::ALL[1], 3, 0.0)];
        assert_eq!(median_epe(&rows, v, 3), Some(2.0));
        assert_eq!(median_epe(&rows, v, 5), Some(9.0));
        assert_eq!(median_epe(&rows, v, 7), None);
        let table = format_table(&rows);
        assert_eq!(table.lines().count(), 6);
        assert!(table.contains("dop+dic"));
    }

    #[test]
    fn block_mask_downsampling() {
        let mut bits = vec![false; 8 * 8];
        bits[5 * 8 + 6] = true;
        let m = ValidityMask::new(8, 8, bits).unwrap();
        let q = downsample_mask(&m, 2, 2);
        assert_eq!(q, vec![false, false, false, true]);
    }
}
