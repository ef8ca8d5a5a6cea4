//! Deterministic training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, RngState};
use super::eval::{evaluate, EvalReport};
use super::model::Model;
use super::optim::Adam;
use crate::data::{preprocess, StereoSample};
use crate::error::{Error, Result};
use crate::metrics;
use crate::regression::{total_loss, LossWeights};
use crate::tensor::exec::Exec;
use crate::tensor::{Graph, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    /// Total number of optimizer steps (including resumed ones).
    pub iters: u64,
    pub lr_halving_period: u64,
    /// Random crop size; `None` trains on whole images.
    pub crop: Option<(usize, usize)>,
    pub seed: u64,
    /// Validate every this many steps; 0 only validates at the end.
    pub val_every: u64,
    pub weights: LossWeights,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            batch: 1,
            iters: 1000,
            lr_halving_period: 1000,
            crop: None,
            seed: 0,
            val_every: 0,
            weights: LossWeights::default(),
            exec: Exec::default(),
        }
    }
}

/// Loss and training-crop EPE of one optimizer step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub iter: u64,
    pub loss: f64,
    pub epe: f64,
    pub lr: f64,
}

impl StepStats {
    pub fn to_kv(&self) -> String {
        format!("iter={} loss={} epe={} lr={}", self.iter, self.loss, self.epe, self.lr)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub steps: Vec<StepStats>,
    pub val: Option<EvalReport>,
}

pub struct Trainer {
    pub model: Model,
    pub adam: Adam,
    pub iteration: u64,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Self {
        let adam = Adam::new(&model.params, config.lr, config.beta1, config.beta2, config.lr_halving_period);
        Trainer {
            model,
            adam,
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
        }
    }

    /// Continues from a checkpoint, restoring optimizer moments, the step
    /// counter and the data-sampling stream.
    pub fn resume(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let model = ckpt.model()?;
        let mut t = Trainer::new(model, config);
        if let Some(state) = &ckpt.optimizer {
            if state.m.len() != t.model.params.len() {
                return Err(Error::Checkpoint("optimizer state does not match the parameters".into()));
            }
            t.adam.state = state.clone();
        }
        t.iteration = ckpt.iteration;
        t.rng = ckpt.rng.restore();
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.model.config.clone(),
            params: self.model.params.clone(),
            optimizer: Some(self.adam.state.clone()),
            iteration: self.iteration,
            rng: RngState::capture(&self.rng),
        }
    }

    /// Gradient of the batch-mean loss for one preprocessed sample, plus
    /// its loss and EPE.
    fn sample_grads(&self, s: &StereoSample, scale: f64) -> Result<(Vec<Tensor<f32>>, f64, f64)> {
        let mut g = Graph::with_exec(self.config.exec);
        let p = self.model.params.bind(&mut g);
        let l = g.constant(s.left.clone());
        let r = g.constant(s.right.clone());
        let out = self.model.forward(&mut g, &p, l, r)?;
        let loss = total_loss(&mut g, out.heads(), &s.gt.values, &s.valid, &self.config.weights)?;
        let loss_value = g.value(loss).data()[0] as f64;
        let epe = metrics::epe(g.value(out.full).data(), s.gt.data(), &s.valid)?;
        if !loss_value.is_finite() {
            return Err(Error::Diverged {
                iter: self.iteration,
                loss: loss_value,
            });
        }
        let loss = g.scale(loss, scale);
        g.backward(loss)?;
        let grads = p
            .vars()
            .iter()
            .zip(self.model.params.tensors())
            .map(|(&v, t)| g.take_grad(v).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        Ok((grads, loss_value, epe))
    }

    /// One optimizer step on a batch drawn from `data`.
    pub fn step(&mut self, data: &[StereoSample]) -> Result<StepStats> {
        if data.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let batch = self.config.batch.max(1);
        let mut prepared = Vec::with_capacity(batch);
        for _ in 0..batch {
            let s = &data[self.rng.gen_range(0..data.len())];
            let (ch, cw) = self.config.crop.unwrap_or((s.height(), s.width()));
            prepared.push(preprocess(s, ch, cw, &mut self.rng)?);
        }
        let scale = 1.0 / batch as f64;
        let mut total: Option<Vec<Tensor<f32>>> = None;
        let (mut loss, mut epe) = (0.0, 0.0);
        for s in &prepared {
            let (grads, l, e) = self.sample_grads(s, scale)?;
            loss += l * scale;
            epe += e * scale;
            match &mut total {
                None => total = Some(grads),
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grads) {
                        a.add_assign(g);
                    }
                }
            }
        }
        let grads = total.expect("batch is nonempty");
        if grads.iter().any(|g| !g.all_finite()) {
            return Err(Error::Diverged {
                iter: self.iteration,
                loss: f64::NAN,
            });
        }
        let lr = self.adam.step(&mut self.model.params, &grads)?;
        self.iteration += 1;
        Ok(StepStats {
            iter: self.iteration,
            loss,
            epe,
            lr,
        })
    }

    /// Steps until `config.iters`, logging one `key=value` line per step and
    /// per validation.
    pub fn run(&mut self, train: &[StereoSample], val: &[StereoSample], mut log: impl FnMut(&str)) -> Result<TrainReport> {
        let mut steps = Vec::new();
        let mut last_val = None;
        while self.iteration < self.config.iters {
            let st = self.step(train)?;
            log(&st.to_kv());
            steps.push(st);
            let every = self.config.val_every;
            if !val.is_empty() && every > 0 && self.iteration % every == 0 {
                let r = evaluate(&self.model, val, self.config.exec)?;
                log(&format!("iter={} val.epe={} val.d1={}", self.iteration, r.full.epe, r.full.d1));
                last_val = Some(r);
            }
        }
        if !val.is_empty() && last_val.is_none() {
            let r = evaluate(&self.model, val, self.config.exec)?;
            log(&format!("iter={} val.epe={} val.d1={}", self.iteration, r.full.epe, r.full.d1));
            last_val = Some(r);
        }
        Ok(TrainReport { steps, val: last_val })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_set, SceneSpec};
    use crate::pipeline::model::{ModelConfig, Variant};

    fn setup() -> (Model, Vec<StereoSample>) {
        let cfg = ModelConfig {
            c: 1,
            c3d: 2,
            c_dop: 2,
            n: 3,
            d_max: 32,
            dic_width: 4,
            variant: Variant::ALL[3],
        };
        let spec = SceneSpec {
            height: 32,
            width: 48,
            max_disparity: 20,
            ..SceneSpec::default()
        };
        (Model::new(cfg, 1).unwrap(), synthetic_set(&spec, 3).unwrap())
    }

    fn config() -> TrainConfig {
        TrainConfig {
            iters: 4,
            batch: 2,
            crop: Some((32, 32)),
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn identical_seeds_give_identical_runs() {
        let (model, data) = setup();
        let run = || {
            let mut t = Trainer::new(model.clone(), config());
            let r = t.run(&data, &[], |_| {}).unwrap();
            (r.steps, t.model.params)
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        assert_eq!(pa, pb);
        assert_ne!(pa, model.params);
    }

    #[test]
    fn resuming_matches_an_uninterrupted_run() {
        let (model, data) = setup();
        let mut full = Trainer::new(model.clone(), config());
        let all = full.run(&data, &[], |_| {}).unwrap().steps;

        let mut first = Trainer::new(model, TrainConfig { iters: 2, ..config() });
        first.run(&data, &[], |_| {}).unwrap();
        let ck = Checkpoint::from_bytes(&first.checkpoint().to_bytes()).unwrap();
        let mut second = Trainer::resume(&ck, config()).unwrap();
        let rest = second.run(&data, &[], |_| {}).unwrap().steps;
        assert_eq!(rest.len(), 2);
        assert_eq!(rest[..], all[2..]);
        assert_eq!(second.model.params, full.model.params);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut model, data) = setup();
        for t in model.params.tensors_mut() {
            t.data_mut().fill(f32::NAN);
        }
        let mut t = Trainer::new(model, config());
        assert!(matches!(t.step(&data), Err(Error::Diverged { .. })));
    }
}
