//! Overfits the tiny configuration on a handful of synthetic pairs and
//! prints the training log.
//!
//! `cargo run --release -p adcp-core --example overfit -- [iters] [pairs] [layers] [bars] [max_disparity] [lr]`

use adcp::data::{synthetic_set, SceneSpec};
use adcp::pipeline::{evaluate, Model, ModelConfig, OffsetMode, Stage2Mode, TrainConfig, Trainer, Variant};

fn main() -> adcp::Result<()> {
    let mut args = std::env::args().skip(1);
    let iters: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(2000);
    let pairs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(8);
    let config = ModelConfig {
        c: 2,
        c3d: 4,
        c_dop: 8,
        n: 5,
        d_max: 64,
        dic_width: 16,
        variant: Variant::new(OffsetMode::Dop, Stage2Mode::Dic),
    };
    let layers: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let bars: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let max_disparity: u32 = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let lr: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.002);
    let spec = SceneSpec {
        seed: 7,
        layers,
        bars,
        max_disparity,
        slant: 0.1,
        height: 64,
        width: 96,
        ..SceneSpec::default()
    };
    let data = synthetic_set(&spec, pairs)?;
    let mut trainer = Trainer::new(
        Model::new(config, 1)?,
        TrainConfig {
            iters,
            lr,
            lr_halving_period: iters / 4,
            seed: 3,
            ..TrainConfig::default()
        },
    );
    let start = std::time::Instant::now();
    let mut window = Vec::new();
    while trainer.iteration < iters {
        let st = trainer.step(&data)?;
        window.push(st.epe);
        if st.iter % 100 == 0 {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            println!("iter={} loss={:.4} epe100={mean:.4} t={:.1}s", st.iter, st.loss, start.elapsed().as_secs_f64());
            window.clear();
        }
    }
    let r = evaluate(&trainer.model, &data, Default::default())?;
    print!("{}", r.to_kv());
    Ok(())
}
