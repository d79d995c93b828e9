//! Teacher-forced training with Adam.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Schedule, TrainConfig};
use crate::model::SolverModel;
use crate::params::ParameterStore;
use crate::tape::Tape;
use crate::ModelError;

/// Inverse-square-root warmup on step `n` (from 1), times `gamma` for every
/// `step_size` completed epochs.
pub fn lr_schedule(n: u64, epoch: usize, d: usize, warmup: u64, gamma: f64, step_size: usize) -> f64 {
    let n = n.max(1) as f64;
    let w = warmup.max(1) as f64;
    let base = (d as f64).powf(-0.5) * n.powf(-0.5).min(n * w.powf(-1.5));
    let decays = epoch.checked_div(step_size).unwrap_or(0);
    base * gamma.powi(decays as i32)
}

/// One source/target pair in token ids; `tgt` is `<s> … </s>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
}

/// Optimizer moments, step counter, dropout/shuffle RNG and loss log.
#[derive(Debug, Clone)]
pub struct TrainState {
    /// Completed optimizer steps.
    pub step: u64,
    pub epoch: usize,
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub rng: ChaCha8Rng,
    /// Mean batch loss per step.
    pub losses: Vec<f64>,
}

impl TrainState {
    pub fn new(params: &ParameterStore, seed: u64) -> Self {
        let zeros = || {
            (0..params.len())
                .map(|i| Array2::zeros(params.value(i).raw_dim()))
                .collect::<Vec<_>>()
        };
        TrainState {
            step: 0,
            epoch: 0,
            m: zeros(),
            v: zeros(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            losses: Vec::new(),
        }
    }

    /// Rate for the next step.
    pub fn learning_rate(&self, cfg: &TrainConfig, d: usize) -> f64 {
        match cfg.schedule {
            Schedule::Fixed { lr } => lr,
            Schedule::Warmup {
                warmup,
                gamma,
                step_size,
                factor,
            } => factor * lr_schedule(self.step + 1, self.epoch, d, warmup, gamma, step_size),
        }
    }
}

/// Adam with bias correction on the gradients held in `params`.
pub fn optimizer_step(
    params: &mut ParameterStore,
    state: &mut TrainState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<(), ModelError> {
    for i in 0..params.len() {
        if params.grad(i).iter().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFiniteGradient(params.name(i).to_string()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = params.grad(i).clone();
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        m.zip_mut_with(&g, |m, &g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
        v.zip_mut_with(&g, |v, &g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
        let (m, v) = (&state.m[i], &state.v[i]);
        let p = params.value_mut(i);
        ndarray::Zip::from(p).and(m).and(v).for_each(|p, &m, &v| {
            *p -= lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        });
    }
    Ok(())
}

fn clip_gradients(params: &mut ParameterStore, max_norm: f64) {
    let norm = (0..params.len())
        .map(|i| params.grad(i).iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for i in 0..params.len() {
            params.grad_mut(i).mapv_inplace(|g| g * s);
        }
    }
}

/// Mean teacher-forced NLL over the batch, one Adam step. Returns the loss.
pub fn train_step(
    model: &mut SolverModel,
    batch: &[Example],
    state: &mut TrainState,
    cfg: &TrainConfig,
) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    model.params.zero_grads();
    let weight = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for ex in batch {
        let mut tape = Tape::new();
        let loss = model.loss(&mut tape, &ex.src, &ex.tgt, Some(&mut state.rng))?;
        let value = tape.value(loss)[[0, 0]];
        if !value.is_finite() {
            return Err(ModelError::NonFiniteLoss {
                step: state.step + 1,
                loss: value,
            });
        }
        total += value * weight;
        let grads = tape.backward(loss);
        tape.accumulate(&grads, &mut model.params, weight);
    }
    if let Some(c) = cfg.clip_norm {
        clip_gradients(&mut model.params, c);
    }
    let lr = state.learning_rate(cfg, model.config.d);
    optimizer_step(&mut model.params, state, lr, cfg)?;
    state.losses.push(total);
    Ok(total)
}

/// Runs `cfg.epochs` shuffled epochs; `on_epoch(epoch, mean loss)` is called
/// after each.
pub fn fit(
    model: &mut SolverModel,
    examples: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainState, ModelError> {
    let mut state = TrainState::new(&model.params, cfg.seed);
    if examples.is_empty() {
        return Ok(state);
    }
    let batch_size = cfg.batch_size.max(1);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        order.shuffle(&mut state.rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<Example> = chunk.iter().map(|&i| examples[i].clone()).collect();
            sum += train_step(model, &batch, &mut state, cfg)?;
            batches += 1;
        }
        on_epoch(epoch, sum / batches as f64);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert!((lr_schedule(1500, 0, 64, 1500, 1.0, 5) - 0.125 / 1500f64.sqrt()).abs() < 1e-15);
        assert!((lr_schedule(1500, 0, 64, 1500, 1.0, 5) - 3.227e-3).abs() < 1e-6);
        assert!((lr_schedule(750, 0, 64, 1500, 1.0, 5) - 1.614e-3).abs() < 1e-6);
        let base = lr_schedule(750, 0, 64, 1500, 0.5, 5);
        assert!((lr_schedule(750, 10, 64, 1500, 0.5, 5) - base * 0.25).abs() < 1e-18);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = ParameterStore::new();
        p.add("w", Array2::zeros((2, 3)));
        p.grad_mut(0).fill(1.0);
        let mut st = TrainState::new(&p, 0);
        let cfg = TrainConfig::default();
        optimizer_step(&mut p, &mut st, 0.01, &cfg).unwrap();
        for &w in p.value(0) {
            assert!((w + 0.01).abs() < 1e-8);
        }
        p.zero_grads();
        let before = p.value(0).clone();
        let mut st = TrainState::new(&p, 0);
        optimizer_step(&mut p, &mut st, 0.01, &cfg).unwrap();
        assert_eq!(p.value(0), &before);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut p = ParameterStore::new();
        p.add("w", Array2::zeros((1, 1)));
        p.grad_mut(0)[[0, 0]] = f64::NAN;
        let mut st = TrainState::new(&p, 0);
        let err = optimizer_step(&mut p, &mut st, 0.01, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, ModelError::NonFiniteGradient(n) if n == "w"));
    }
}
