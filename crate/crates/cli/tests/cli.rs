use std::path::Path;
use std::process::{Command, Output};

use adcp::data::{synthetic_set, write_dir, SceneSpec};

fn adcp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_adcp"))
        .args(args)
        .env("ADCP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_model() -> &'static str {
    "[model]\npreset = \"S\"\nc = 1\nc3d = 2\nc_dop = 2\nn = 3\nd_max = 32\ndic_width = 4\n"
}

fn synthetic(section: &str, seed: u64) -> String {
    format!(
        "[data.{section}.synthetic]\ncount = 2\nseed = {seed}\nheight = 32\nwidth = 48\nmax_disparity = 20\n"
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn selftest_passes() {
    let o = adcp(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.lines().count() >= 6);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ck = d.join("model.ckpt");
    let cfg = format!(
        "{}{}{}[train]\niters = 2\nlr = 0.001\n[eval]\ncheckpoint = {:?}\n",
        tiny_model(),
        synthetic("train", 1),
        synthetic("val", 2),
        ck
    );
    let cfg = write(d, "run.toml", &cfg);
    let o = adcp(&["train", "--config", &cfg, "--seed", "4", "--out", ck.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("iter=2 "));
    assert!(ck.is_file());

    let o = adcp(&["eval", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for key in ["count=2", "epe=", "d1=", "d22.epe=", "seconds_per_image="] {
        assert!(text.contains(key), "missing {key} in {text}");
    }

    let pair = d.join("pair");
    let samples = synthetic_set(&SceneSpec { height: 32, width: 48, max_disparity: 20, ..SceneSpec::default() }, 1).unwrap();
    write_dir(&pair, &samples).unwrap();
    let pcfg = format!(
        "[predict]\ncheckpoint = {:?}\nleft = {:?}\nright = {:?}\n",
        ck,
        pair.join("left/0000.png"),
        pair.join("right/0000.png")
    );
    let pcfg = write(d, "predict.toml", &pcfg);
    let stem = d.join("out");
    let o = adcp(&["predict", "--config", &pcfg, "--out", stem.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let pfm = adcp::data::formats::load_pfm(&d.join("out.pfm")).unwrap();
    assert_eq!((pfm.height(), pfm.width()), (32, 48));
    assert!(std::fs::read(d.join("out.pgm")).unwrap().starts_with(b"P5"));
}

#[test]
fn bad_configs_fail_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unknown = write(d, "a.toml", "[model]\nwidht = 4\n");
    let o = adcp(&["train", "--config", &unknown]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("widht"));

    let missing = write(d, "b.toml", "[data.train]\ndir = \"/nonexistent/set\"\n");
    let o = adcp(&["train", "--config", &missing]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/set"));

    let no_ck = write(d, "c.toml", "[predict]\ncheckpoint = \"/nonexistent/x.ckpt\"\n");
    let o = adcp(&["predict", "--config", &no_ck]);
    assert_eq!(o.status.code(), Some(2));

    let o = adcp(&["eval", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ablation_table_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!(
        "{}{}{}[train]\niters = 1\n[ablate]\nvariants = [\"baseline\", \"dop+dic\"]\nns = [3]\nseeds = [0]\n",
        tiny_model(),
        synthetic("train", 1),
        synthetic("val", 2)
    );
    let cfg = write(dir.path(), "ab.toml", &cfg);
    let a = adcp(&["ablate", "--config", &cfg]);
    let b = adcp(&["ablate", "--config", &cfg]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 3);
    assert!(text.contains("baseline") && text.contains("dop+dic"));
    let widths: Vec<usize> = text.lines().map(str::len).collect();
    assert!(widths.windows(2).all(|w| w[0] == w[1]), "{text}");
}
