//! DOP versus constant offsets on thin-structure scenes.
//!
//! `cargo run --release -p adcp-core --example ablation -- [iters] [n...]`

use adcp::data::{synthetic_set, SceneSpec};
use adcp::pipeline::{
    format_table, median_epe, run_ablation, AblationPlan, ModelConfig, OffsetMode, Stage2Mode, TrainConfig, Variant,
};

fn main() -> adcp::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(800);
    let ns: Vec<usize> = args.filter_map(|s| s.parse().ok()).collect();
    let ns = if ns.is_empty() { vec![3, 5] } else { ns };
    let spec = SceneSpec {
        seed: 11,
        height: 64,
        width: 96,
        layers: 2,
        bars: 3,
        bar_width: 7,
        max_disparity: 24,
        slant: 0.1,
        ..SceneSpec::default()
    };
    let train = synthetic_set(&spec, 32)?;
    let val = synthetic_set(&SceneSpec { seed: 12, ..spec }, 8)?;
    let dop = Variant::new(OffsetMode::Dop, Stage2Mode::Dic);
    let constant = Variant::new(OffsetMode::Constant, Stage2Mode::Dic);
    let plan = AblationPlan {
        base: ModelConfig {
            c: 2,
            c3d: 4,
            c_dop: 8,
            n: 3,
            d_max: 64,
            dic_width: 16,
            variant: dop,
        },
        variants: vec![constant, dop],
        ns: ns.clone(),
        seeds: vec![0, 1, 2],
        train: TrainConfig {
            iters,
            lr: 0.002,
            lr_halving_period: iters / 4,
            ..TrainConfig::default()
        },
    };
    let start = std::time::Instant::now();
    let rows = run_ablation(&plan, &train, &val, |r| {
        eprintln!("{} n={} seed={} epe={:.4} t={:.0}s", r.variant, r.n, r.seed, r.epe, start.elapsed().as_secs_f64())
    })?;
    print!("{}", format_table(&rows));
    for n in ns {
        println!(
            "n={n} median const={:.4} dop={:.4}",
            median_epe(&rows, constant, n).unwrap_or(f64::NAN),
            median_epe(&rows, dop, n).unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
