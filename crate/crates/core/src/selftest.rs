//! Quick runtime self-checks: gradients, kernels against loop oracles,
//! regression invariants, metrics, and detection of a broken backward rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregation::{dic_oracle, Dic};
use crate::error::Result;
use crate::metrics;
use crate::nn::{Builder, ParamStore};
use crate::regression::{soft_argmin_full, ValidityMask};
use crate::tensor::exec::Exec;
use crate::tensor::gradcheck::spot_check;
use crate::tensor::{conv2d_forward, conv3d_forward, Function, Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {:<22} {}", self.name, self.detail)
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn all_coords(xs: &[Tensor<f64>]) -> Vec<(usize, usize)> {
    xs.iter()
        .enumerate()
        .flat_map(|(i, x)| (0..x.len()).map(move |j| (i, j)))
        .collect()
}

/// Direct nested-loop 2D cross-correlation with zero padding.
pub fn conv2d_loops(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[co, oh, ow]);
    for o in 0..co {
        for y in 0..oh {
            for xx in 0..ow {
                let mut acc = b.data()[o];
                for c in 0..ci {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (y * stride + ky) as isize - pad as isize;
                            let ix = (xx * stride + kx) as isize - pad as isize;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                acc += w.at(&[o, c, ky, kx]) * x.at(&[c, iy as usize, ix as usize]);
                            }
                        }
                    }
                }
                let i = out.offset(&[o, y, xx]);
                out.data_mut()[i] = acc;
            }
        }
    }
    out
}

/// Direct nested-loop 3D cross-correlation with zero padding.
pub fn conv3d_loops(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let s = x.shape();
    let (ci, d, h, wd) = (s[0], s[1], s[2], s[3]);
    let (co, k) = (w.shape()[0], w.shape()[2]);
    let ext = |n: usize| (n + 2 * pad - k) / stride + 1;
    let (od, oh, ow) = (ext(d), ext(h), ext(wd));
    let inside = |v: isize, n: usize| v >= 0 && (v as usize) < n;
    let mut out = Tensor::zeros(&[co, od, oh, ow]);
    for o in 0..co {
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b.data()[o];
                    for c in 0..ci {
                        for kz in 0..k {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iz = (z * stride + kz) as isize - pad as isize;
                                    let iy = (y * stride + ky) as isize - pad as isize;
                                    let ix = (xx * stride + kx) as isize - pad as isize;
                                    if inside(iz, d) && inside(iy, h) && inside(ix, wd) {
                                        acc += w.at(&[o, c, kz, ky, kx])
                                            * x.at(&[c, iz as usize, iy as usize, ix as usize]);
                                    }
                                }
                            }
                        }
                    }
                    let i = out.offset(&[o, z, y, xx]);
                    out.data_mut()[i] = acc;
                }
            }
        }
    }
    out
}

fn gradients(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let xs = vec![rand_tensor(rng, &[2, 5, 6]), rand_tensor(rng, &[3, 2, 3, 3]), rand_tensor(rng, &[3])];
    worst = worst.max(
        spot_check(
            |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], 1, 1)?;
                let y = g.leaky_relu(y, 0.1);
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            &xs,
            &all_coords(&xs),
            1e-6,
        )?
        .max_rel_err,
    );
    let xs = vec![rand_tensor(rng, &[2, 3, 4, 4]), rand_tensor(rng, &[2, 2, 3, 3, 3]), rand_tensor(rng, &[2])];
    worst = worst.max(
        spot_check(
            |g, v| {
                let y = g.conv3d(v[0], v[1], v[2], 1, 1)?;
                let y = g.mul(y, y)?;
                Ok(g.sum(y))
            },
            &xs,
            &all_coords(&xs),
            1e-6,
        )?
        .max_rel_err,
    );
    let xs = vec![rand_tensor(rng, &[5, 3, 4]), rand_tensor(rng, &[3, 4])];
    worst = worst.max(
        spot_check(
            |g, v| {
                let d = soft_argmin_full(g, v[0])?;
                let y = g.mul(d, v[1])?;
                Ok(g.sum(y))
            },
            &xs,
            &all_coords(&xs),
            1e-6,
        )?
        .max_rel_err,
    );
    Ok(Check {
        name: "gradients",
        passed: worst < 1e-4,
        detail: format!("max_rel_err={worst:.3e}"),
    })
}

fn conv_oracles(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for case in 0..6 {
        let (stride, pad) = (1 + case % 2, case % 2);
        let x = rand_tensor(rng, &[2, 6, 7]);
        let w = rand_tensor(rng, &[3, 2, 3, 3]);
        let b = rand_tensor(rng, &[3]);
        let got = conv2d_forward(&x, &w, &b, stride, pad, Exec::default())?;
        worst = worst.max(got.max_abs_diff(&conv2d_loops(&x, &w, &b, stride, pad)));
        let x = rand_tensor(rng, &[2, 4, 5, 5]);
        let w = rand_tensor(rng, &[2, 2, 3, 3, 3]);
        let b = rand_tensor(rng, &[2]);
        let got = conv3d_forward(&x, &w, &b, stride, pad, Exec::default())?;
        worst = worst.max(got.max_abs_diff(&conv3d_loops(&x, &w, &b, stride, pad)));
    }
    Ok(Check {
        name: "conv oracles",
        passed: worst <= 1e-9,
        detail: format!("max_abs_diff={worst:.3e}"),
    })
}

fn dic_equivalence(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut worst: f64 = 0.0;
    for n in 1..=4 {
        let mut store = ParamStore::<f64>::new();
        let dic = Dic::new(&mut Builder::new(&mut store, rng), 2, n, 3);
        for t in store.tensors_mut() {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
        let vol = rand_tensor(rng, &[2, n, 4, 5]);
        let mut g = Graph::new();
        let p = store.bind_frozen(&mut g);
        let v = g.constant(vol.clone());
        let (a, b) = dic.forward(&mut g, &p, v)?;
        let (oa, ob) = dic_oracle(&dic, &store, &vol)?;
        worst = worst.max(g.value(a).max_abs_diff(&oa)).max(g.value(b).max_abs_diff(&ob));
    }
    Ok(Check {
        name: "dic equivalence",
        passed: worst <= 1e-9,
        detail: format!("max_abs_diff={worst:.3e}"),
    })
}

fn regression_invariants(rng: &mut ChaCha8Rng) -> Result<Check> {
    let mut g = Graph::<f64>::new();
    let c = g.constant(Tensor::full(&[7, 2, 2], 0.3));
    let d = soft_argmin_full(&mut g, c)?;
    let uniform = g.value(d).data().iter().fold(0.0f64, |m, v| m.max((v - 3.0).abs()));
    let mut hull = true;
    for _ in 0..50 {
        let costs = rand_tensor(rng, &[6, 1, 3]).map(|v| 4.0 * v);
        let mut g = Graph::<f64>::new();
        let c = g.constant(costs);
        let d = soft_argmin_full(&mut g, c)?;
        hull &= g.value(d).data().iter().all(|&v| (0.0..=5.0).contains(&v));
    }
    Ok(Check {
        name: "soft-argmin",
        passed: uniform <= 1e-12 && hull,
        detail: format!("uniform_err={uniform:.1e} hull={hull}"),
    })
}

fn metric_oracles() -> Result<Check> {
    let boundary = !metrics::is_d1_outlier(3.0, 100.0)
        && metrics::is_d1_outlier(3.01, 10.0)
        && !metrics::is_d1_outlier(5.0, 100.0)
        && metrics::is_d1_outlier(5.01, 100.0);
    let gt = [10.0f32, 20.0, 30.0, 40.0];
    let pred = [10.5f32, 26.0, 30.0, 0.0];
    let mask = ValidityMask::new(2, 2, vec![true, true, true, false])?;
    let epe = metrics::epe(&pred, &gt, &mask)?;
    let d1 = metrics::d1(&pred, &gt, &mask)?;
    let ok = boundary && (epe - 6.5 / 3.0).abs() < 1e-9 && (d1 - 100.0 / 3.0).abs() < 1e-9;
    Ok(Check {
        name: "metrics",
        passed: ok,
        detail: format!("epe={epe:.4} d1={d1:.3}"),
    })
}

/// Square with a backward rule that is off by a factor of two.
struct BrokenSquare;

impl Function<f64> for BrokenSquare {
    fn name(&self) -> &'static str {
        "broken_square"
    }

    fn backward(&self, grad: &Tensor<f64>, inputs: &[&Tensor<f64>], _: &Tensor<f64>, _: Exec) -> Vec<Option<Tensor<f64>>> {
        let data = grad.data().iter().zip(inputs[0].data()).map(|(g, x)| g * 4.0 * x).collect();
        vec![Some(Tensor::new(grad.shape(), data).expect("same shape"))]
    }
}

fn fault_injection(rng: &mut ChaCha8Rng) -> Result<Check> {
    let x = rand_tensor(rng, &[6]);
    let r = spot_check(
        |g, v| {
            let value = g.value(v[0]).map(|a| a * a);
            let y = g.apply(BrokenSquare, &[v[0]], value);
            Ok(g.sum(y))
        },
        std::slice::from_ref(&x),
        &all_coords(std::slice::from_ref(&x)),
        1e-6,
    )?;
    Ok(Check {
        name: "fault injection",
        passed: r.max_rel_err > 1e-2,
        detail: format!("broken rule flagged with rel_err={:.3}", r.max_rel_err),
    })
}

/// Runs every check; errors inside a check count as failures.
pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<Check>| {
        out.push(r.unwrap_or_else(|e| Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        }))
    };
    push("gradients", gradients(&mut rng));
    push("conv oracles", conv_oracles(&mut rng));
    push("dic equivalence", dic_equivalence(&mut rng));
    push("soft-argmin", regression_invariants(&mut rng));
    push("metrics", metric_oracles());
    push("fault injection", fault_injection(&mut rng));
    out
}
