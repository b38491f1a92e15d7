//! Multi-task training for the renderer.
//!
//! The loss is a weighted sum of per-feature cross-entropies. Task weights
//! are tuned every step with GradNorm against the input projection (the
//! first layer every head shares), and parameters are updated with Adam
//! behind a linear warm-up.

use std::fmt::Write as _;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::align::{matched_notes, AlignmentMap};
use crate::error::{Error, Result};
use crate::midi::{resample_grid, NoteSequence};
use crate::model::{layers::softmax_rows, M2MModel, OutputDistributions, Params, OUTPUT_FEATURES};
use crate::tokenizer::{segment, tokenize_notes, TokenSegment, SCORE_VELOCITY, TICKS_PER_BEAT};

pub const N_TASKS: usize = 3;
/// Weights never drop below this before renormalization.
pub const MIN_TASK_WEIGHT: f64 = 1e-3;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Seeds the dropout stream apart from the shuffling stream.
const DROPOUT_SEED_SALT: u64 = 0x5eed_d80f_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskWeights {
    /// Velocity, IOI, duration. Always positive and summing to 3.
    pub weights: [f64; N_TASKS],
    pub initial_losses: Option<[f64; N_TASKS]>,
    pub alpha: f64,
}

impl TaskWeights {
    pub fn new(alpha: f64) -> Self {
        Self {
            weights: [1.0; N_TASKS],
            initial_losses: None,
            alpha,
        }
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// GradNorm restoring-force exponent.
    pub alpha: f64,
    pub seed: u64,
    /// Step size of the task-weight update.
    pub gradnorm_lr: f64,
    /// Stop after this many optimizer steps even if epochs remain.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            warmup_steps: 40,
            max_epochs: 2000,
            batch_size: 8,
            alpha: 1.5,
            seed: 0,
            gradnorm_lr: 0.025,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.gradnorm_lr > 0.0 && self.alpha >= 0.0) {
            return Err(Error::Config("learning rates must be positive and alpha non-negative".into()));
        }
        if self.batch_size == 0 || self.warmup_steps == 0 {
            return Err(Error::Config("batch size and warm-up steps must be positive".into()));
        }
        Ok(())
    }

    /// Learning rate at a 0-based step: linear ramp over the warm-up, then flat.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.learning_rate * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
    }
}

fn target_tokens(target: &TokenSegment, n: usize, task: usize) -> Vec<usize> {
    target.tuples[..n]
        .iter()
        .map(|t| t.get(OUTPUT_FEATURES[task]) as usize)
        .collect()
}

fn check_target(dist: &OutputDistributions, target: &TokenSegment) -> Result<usize> {
    let n = dist.n_valid;
    if target.n_notes() != n {
        return Err(Error::LengthMismatch(format!(
            "prediction covers {n} notes but the target has {}",
            target.n_notes()
        )));
    }
    if n == 0 {
        return Err(Error::EmptySegment);
    }
    for k in 0..N_TASKS {
        let vocab = dist.logits(k).ncols();
        for (position, tok) in target_tokens(target, n, k).into_iter().enumerate() {
            if tok < 4 || tok >= vocab {
                return Err(Error::TokenOutOfRange {
                    feature: OUTPUT_FEATURES[k].name(),
                    position,
                    token: tok as u32,
                    vocab,
                });
            }
        }
    }
    Ok(n)
}

/// Summed cross-entropy of one head over the first `n` rows, and the
/// gradient of that sum with respect to those logit rows.
fn cross_entropy_sum(logits: &Array2<f64>, targets: &[usize]) -> (f64, Array2<f64>) {
    let n = targets.len();
    let mut probs = logits.slice(s![..n, ..]).to_owned();
    softmax_rows(&mut probs);
    let mut loss = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        loss -= probs[[i, t]].max(f64::MIN_POSITIVE).ln();
        probs[[i, t]] -= 1.0;
    }
    (loss, probs)
}

/// Mean cross-entropy per feature over the non-pad positions of `target`.
pub fn feature_loss(dist: &OutputDistributions, target: &TokenSegment) -> Result<[f64; N_TASKS]> {
    let n = check_target(dist, target)?;
    let mut out = [0.0; N_TASKS];
    for (k, slot) in out.iter_mut().enumerate() {
        let logits = dist.logits(k).slice(s![..n, ..]).to_owned();
        let mut total = 0.0;
        for (i, t) in target_tokens(target, n, k).into_iter().enumerate() {
            let row = logits.row(i);
            let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = max + row.mapv(|v| (v - max).exp()).sum().ln();
            total += lse - row[t];
        }
        *slot = total / n as f64;
    }
    Ok(out)
}

/// Losses and per-task gradients of one batch.
pub struct BatchGradients {
    /// Mean cross-entropy per task over all non-pad positions of the batch.
    pub losses: [f64; N_TASKS],
    /// Gradient of each unweighted task loss.
    pub task_grads: [Params; N_TASKS],
    pub n_positions: usize,
}

impl BatchGradients {
    /// Norm of each task's gradient with respect to the input projection weight.
    pub fn shared_grad_norms(&self) -> [f64; N_TASKS] {
        std::array::from_fn(|k| {
            self.task_grads[k]
                .input_proj
                .w
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
    }

    /// `Σ_k w_k ∇L_k`
    pub fn combined(&self, weights: &[f64; N_TASKS]) -> Params {
        let mut total = self.task_grads[0].clone();
        total.tensors_mut().into_iter().for_each(|t| *t *= weights[0]);
        for k in 1..N_TASKS {
            total.add_scaled(&self.task_grads[k], weights[k]);
        }
        total
    }
}

/// Forward and backward over a batch of (score, target) segment pairs.
pub fn batch_gradients(
    model: &M2MModel,
    batch: &[(&TokenSegment, &TokenSegment)],
    mut dropout_rng: Option<&mut ChaCha8Rng>,
) -> Result<BatchGradients> {
    let n_positions: usize = batch.iter().map(|(_, t)| t.n_notes()).sum();
    if n_positions == 0 {
        return Err(Error::EmptySegment);
    }
    let scale = 1.0 / n_positions as f64;
    let mut task_grads: [Params; N_TASKS] = std::array::from_fn(|_| Params::zeros(&model.config));
    let mut sums = [0.0; N_TASKS];
    for (score, target) in batch {
        let (dist, cache) = model.forward_cached(score, dropout_rng.as_deref_mut())?;
        let n = check_target(&dist, target)?;
        let mut d_logits = Vec::with_capacity(N_TASKS);
        for (k, sum) in sums.iter_mut().enumerate() {
            let (loss, mut d) = cross_entropy_sum(dist.logits(k), &target_tokens(target, n, k));
            *sum += loss;
            d *= scale;
            d_logits.push(d);
        }
        model.accumulate_gradients(
            &cache,
            [&d_logits[0], &d_logits[1], &d_logits[2]],
            &mut task_grads,
        );
    }
    Ok(BatchGradients {
        losses: sums.map(|s| s * scale),
        task_grads,
        n_positions,
    })
}

/// Weighted total loss of a batch without dropout.
pub fn batch_loss(
    model: &M2MModel,
    batch: &[(&TokenSegment, &TokenSegment)],
    weights: &[f64; N_TASKS],
) -> Result<f64> {
    let n_positions: usize = batch.iter().map(|(_, t)| t.n_notes()).sum();
    let mut total = 0.0;
    for (score, target) in batch {
        let dist = model.forward(score)?;
        let per = feature_loss(&dist, target)?;
        let n = target.n_notes() as f64;
        total += (0..N_TASKS).map(|k| weights[k] * per[k] * n).sum::<f64>();
    }
    Ok(total / n_positions as f64)
}

/// One GradNorm update of the task weights.
///
/// `grad_norms[k]` is `‖∇_W L_k‖` for the shared weight `W`, so the weighted
/// norm is `G_k = w_k · grad_norms[k]`. Targets `mean(G) · r_k^alpha` are held
/// constant, the weights take one subgradient step on `Σ |G_k − T_k|`, are
/// floored at [`MIN_TASK_WEIGHT`] and then rescaled to sum to 3.
pub fn gradnorm_step(
    weights: &TaskWeights,
    losses: [f64; N_TASKS],
    grad_norms: [f64; N_TASKS],
    lr: f64,
) -> Result<TaskWeights> {
    let initial = weights
        .initial_losses
        .ok_or_else(|| Error::Config("initial losses not recorded".into()))?;
    if let Some(task) = initial.iter().position(|&l| l == 0.0) {
        return Err(Error::ZeroInitialLoss { task });
    }
    let ratios: [f64; N_TASKS] = std::array::from_fn(|k| losses[k] / initial[k]);
    let mean_ratio = ratios.iter().sum::<f64>() / N_TASKS as f64;
    let g: [f64; N_TASKS] = std::array::from_fn(|k| weights.weights[k] * grad_norms[k]);
    let mean_g = g.iter().sum::<f64>() / N_TASKS as f64;
    let mut next = weights.weights;
    for k in 0..N_TASKS {
        let target = mean_g * (ratios[k] / mean_ratio).powf(weights.alpha);
        let diff = g[k] - target;
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        next[k] = (next[k] - lr * sign * grad_norms[k]).max(MIN_TASK_WEIGHT);
    }
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|w| *w *= N_TASKS as f64 / total);
    Ok(TaskWeights {
        weights: next,
        ..*weights
    })
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(like: &M2MModel) -> Self {
        Self {
            m: Params::zeros(&like.config),
            v: Params::zeros(&like.config),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Params, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut());
        for (((p, g), m), v) in tensors {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub lr: f64,
    /// Weights used for this step's update.
    pub weights: [f64; N_TASKS],
    pub losses: [f64; N_TASKS],
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,lr,w_vel,w_ioi,w_dur,L_vel,L_ioi,L_dur,total\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{},{:e},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                e.step,
                e.lr,
                e.weights[0],
                e.weights[1],
                e.weights[2],
                e.losses[0],
                e.losses[1],
                e.losses[2],
                e.total
            );
        }
        out
    }
}

/// Training state that can be advanced in chunks of steps.
pub struct Trainer {
    pub model: M2MModel,
    pub config: TrainConfig,
    pub weights: TaskWeights,
    pub log: TrainLog,
    adam: Adam,
    shuffle_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    step: usize,
}

impl Trainer {
    pub fn new(model: M2MModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            adam: Adam::new(&model),
            weights: TaskWeights::new(config.alpha),
            shuffle_rng: ChaCha8Rng::seed_from_u64(config.seed),
            dropout_rng: ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_SEED_SALT),
            model,
            config,
            log: TrainLog::default(),
            order: Vec::new(),
            cursor: 0,
            epoch: 0,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    fn budget_left(&self) -> bool {
        self.config.max_steps.is_none_or(|m| self.step < m)
    }

    /// Runs up to `steps` optimizer steps; returns how many were taken.
    pub fn run_steps(&mut self, dataset: &[(TokenSegment, TokenSegment)], steps: usize) -> Result<usize> {
        if dataset.is_empty() {
            return Err(Error::Config("training dataset is empty".into()));
        }
        let mut taken = 0;
        while taken < steps && self.budget_left() {
            if self.cursor >= self.order.len() {
                if self.epoch >= self.config.max_epochs {
                    break;
                }
                self.order = (0..dataset.len()).collect();
                self.order.shuffle(&mut self.shuffle_rng);
                self.cursor = 0;
                self.epoch += 1;
            }
            let end = (self.cursor + self.config.batch_size).min(self.order.len());
            let batch: Vec<(&TokenSegment, &TokenSegment)> = self.order[self.cursor..end]
                .iter()
                .map(|&i| (&dataset[i].0, &dataset[i].1))
                .collect();
            self.cursor = end;
            self.train_batch(&batch)?;
            taken += 1;
        }
        Ok(taken)
    }

    fn train_batch(&mut self, batch: &[(&TokenSegment, &TokenSegment)]) -> Result<()> {
        let step = self.step;
        let grads = batch_gradients(&self.model, batch, Some(&mut self.dropout_rng))?;
        if grads.losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        if self.weights.initial_losses.is_none() {
            self.weights.initial_losses = Some(grads.losses);
        }
        let w = self.weights.weights;
        let lr = self.config.lr_at(step);
        let total_grad = grads.combined(&w);
        self.adam.step(&mut self.model.params, &total_grad, lr);
        if !self.model.params.all_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        self.log.entries.push(LogEntry {
            step,
            lr,
            weights: w,
            losses: grads.losses,
            total: (0..N_TASKS).map(|k| w[k] * grads.losses[k]).sum(),
        });
        self.weights = gradnorm_step(
            &self.weights,
            grads.losses,
            grads.shared_grad_norms(),
            self.config.gradnorm_lr,
        )?;
        self.step += 1;
        Ok(())
    }
}

/// Trains until the epoch or step budget runs out.
pub fn train(
    model: M2MModel,
    dataset: &[(TokenSegment, TokenSegment)],
    cfg: &TrainConfig,
) -> Result<(M2MModel, TrainLog)> {
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    let mut trainer = Trainer::new(model, cfg.clone())?;
    while trainer.run_steps(dataset, usize::MAX)? > 0 {}
    Ok((trainer.model, trainer.log))
}

/// Greedy predictions and targets for every non-pad position, per task.
pub fn greedy_predictions(
    model: &M2MModel,
    dataset: &[(TokenSegment, TokenSegment)],
) -> Result<[(Vec<u32>, Vec<u32>); N_TASKS]> {
    let mut out: [(Vec<u32>, Vec<u32>); N_TASKS] = Default::default();
    for (score, target) in dataset {
        let dist = model.forward(score)?;
        let greedy = crate::model::sample(&dist, 0.0, 1.0, 0);
        let n = dist.n_valid;
        for (k, slot) in out.iter_mut().enumerate() {
            slot.0.extend_from_slice(greedy.task(k));
            slot.1.extend(target_tokens(target, n, k).into_iter().map(|t| t as u32));
        }
    }
    Ok(out)
}

/// Fraction of non-pad positions where the greedy token equals the target.
pub fn token_accuracy(model: &M2MModel, dataset: &[(TokenSegment, TokenSegment)]) -> Result<[f64; N_TASKS]> {
    let preds = greedy_predictions(model, dataset)?;
    Ok(preds.map(|(p, t)| {
        let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
        hits as f64 / t.len().max(1) as f64
    }))
}

/// Builds aligned training pairs from a score, a performance and their
/// alignment: score tokens (constant velocity) as inputs, the matched
/// performance notes in score order as targets.
pub fn aligned_segments(
    score: &NoteSequence,
    perf: &NoteSequence,
    alignment: &AlignmentMap,
    performer_id: usize,
) -> Result<Vec<(TokenSegment, TokenSegment)>> {
    let score = resample_grid(score, TICKS_PER_BEAT);
    let perf = resample_grid(perf, TICKS_PER_BEAT);
    alignment.validate(&score.notes, &perf.notes)?;
    let (s_notes, p_notes) = matched_notes(&score, &perf, alignment);
    let s_toks = tokenize_notes(&s_notes, &score.time_signatures, TICKS_PER_BEAT, Some(SCORE_VELOCITY))?;
    let p_toks = tokenize_notes(&p_notes, &perf.time_signatures, TICKS_PER_BEAT, None)?;
    Ok(segment(&s_toks, performer_id)
        .into_iter()
        .zip(segment(&p_toks, performer_id))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::M2MConfig;
    use crate::tokenizer::TokenTuple;

    fn dist_with(n: usize, fill: impl Fn(usize, usize, usize) -> f64) -> OutputDistributions {
        let mk = |k: usize, v: usize| Array2::from_shape_fn((8, v), |(i, j)| if i < n { fill(k, i, j) } else { 0.0 });
        OutputDistributions {
            velocity: mk(0, 68),
            ioi: mk(1, 772),
            duration: mk(2, 1156),
            n_valid: n,
        }
    }

    fn target(tokens: &[(u32, u32, u32)]) -> TokenSegment {
        let tuples: Vec<TokenTuple> = tokens
            .iter()
            .map(|&(velocity, ioi, duration)| TokenTuple {
                pitch: 40,
                velocity,
                duration,
                ioi,
                position: 4,
                bar: 4,
            })
            .collect();
        crate::tokenizer::segment_with_len(&tuples, 0, 8).remove(0)
    }

    #[test]
    fn confident_correct_logits_give_zero_loss() {
        let t = target(&[(10, 20, 30), (11, 21, 31)]);
        let d = dist_with(2, |k, i, j| {
            let want = [[10, 20, 30], [11, 21, 31]][i][k];
            if j == want {
                0.0
            } else {
                -1e4
            }
        });
        assert!(feature_loss(&d, &t).unwrap().iter().all(|&l| l.abs() < 1e-12));
    }

    #[test]
    fn uniform_logits_give_log_vocab() {
        let t = target(&[(10, 20, 30), (11, 21, 31), (12, 22, 32)]);
        let l = feature_loss(&dist_with(3, |_, _, _| 0.7), &t).unwrap();
        assert!((l[0] - 68f64.ln()).abs() < 1e-12);
        assert!((l[0] - 4.219_507_705).abs() < 1e-9);
        assert!((l[1] - 772f64.ln()).abs() < 1e-12);
        assert!((l[2] - 1156f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_position_hand_case() {
        // velocity logits: position 0 puts ln 3 on token 4, others 0;
        // position 1 puts 1.0 on the target token 5, others 0
        let t = target(&[(4, 4, 4), (5, 4, 4)]);
        let d = dist_with(2, |k, i, j| match (k, i, j) {
            (0, 0, 4) => 3f64.ln(),
            (0, 1, 5) => 1.0,
            _ => 0.0,
        });
        let l = feature_loss(&d, &t).unwrap();
        let p0: f64 = 3.0 / (3.0 + 67.0);
        let p1 = 1f64.exp() / (1f64.exp() + 67.0);
        let hand = -(p0.ln() + p1.ln()) / 2.0;
        assert!((l[0] - hand).abs() < 1e-9);
    }

    #[test]
    fn loss_requires_real_positions() {
        let t = TokenSegment {
            tuples: vec![TokenTuple::PADDING; 8],
            pad_mask: vec![true; 8],
            performer_id: 0,
            source_offset: 0,
        };
        assert!(matches!(
            feature_loss(&dist_with(0, |_, _, _| 0.0), &t),
            Err(Error::EmptySegment)
        ));
    }

    fn recorded(initial: [f64; 3], alpha: f64) -> TaskWeights {
        TaskWeights {
            initial_losses: Some(initial),
            ..TaskWeights::new(alpha)
        }
    }

    #[test]
    fn symmetric_tasks_are_a_fixed_point() {
        let w = recorded([2.0, 2.0, 2.0], 1.5);
        let next = gradnorm_step(&w, [1.0, 1.0, 1.0], [0.3, 0.3, 0.3], 0.025).unwrap();
        assert_eq!(next.weights, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_hand_executed_steps() {
        // step 1: L/L0 = (1, 0.5, 0.75) -> r = (4/3, 2/3, 1); norms (1, 2, 3)
        // G = (1, 2, 3), mean 2, targets (8/3, 4/3, 2): signs (-, +, +)
        // w = (1 + 0.1, 1 - 0.2, 1 - 0.3) = (1.1, 0.8, 0.7), sum 2.6
        let w0 = recorded([4.0, 4.0, 4.0], 1.0);
        let w1 = gradnorm_step(&w0, [4.0, 2.0, 3.0], [1.0, 2.0, 3.0], 0.1).unwrap();
        let s = 3.0 / 2.6;
        let expect1 = [1.1 * s, 0.8 * s, 0.7 * s];
        for k in 0..3 {
            assert!((w1.weights[k] - expect1[k]).abs() < 1e-12);
        }
        // step 2: equal ratios -> targets = mean(G); norms (2, 1, 1)
        let g: Vec<f64> = (0..3).map(|k| expect1[k] * [2.0, 1.0, 1.0][k]).collect();
        let mean_g = g.iter().sum::<f64>() / 3.0;
        let signs: Vec<f64> = g.iter().map(|&x| (x - mean_g).signum()).collect();
        let raw: Vec<f64> = (0..3)
            .map(|k| expect1[k] - 0.1 * signs[k] * [2.0, 1.0, 1.0][k])
            .collect();
        let total: f64 = raw.iter().sum();
        let w2 = gradnorm_step(&w1, [2.0, 2.0, 2.0], [2.0, 1.0, 1.0], 0.1).unwrap();
        for k in 0..3 {
            assert!((w2.weights[k] - raw[k] * 3.0 / total).abs() < 1e-12);
        }
        assert!((w2.sum() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn gradnorm_needs_nonzero_initial_losses() {
        let w = recorded([1.0, 0.0, 1.0], 1.0);
        assert!(matches!(
            gradnorm_step(&w, [1.0; 3], [1.0; 3], 0.1),
            Err(Error::ZeroInitialLoss { task: 1 })
        ));
        assert!(gradnorm_step(&TaskWeights::new(1.0), [1.0; 3], [1.0; 3], 0.1).is_err());
    }

    #[test]
    fn weights_stay_positive_under_large_steps() {
        let w = recorded([1.0, 1.0, 1.0], 1.0);
        let next = gradnorm_step(&w, [5.0, 1.0, 1.0], [100.0, 100.0, 1.0], 1.0).unwrap();
        assert!(next.weights.iter().all(|&x| x > 0.0));
        assert!((next.sum() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn warmup_schedule() {
        let cfg = TrainConfig::default();
        assert!((cfg.lr_at(0) - 2e-5 / 40.0).abs() < 1e-18);
        assert!((cfg.lr_at(19) - 1e-5).abs() < 1e-18);
        assert_eq!(cfg.lr_at(39), 2e-5);
        assert_eq!(cfg.lr_at(500), 2e-5);
    }

    fn tiny_dataset() -> Vec<(TokenSegment, TokenSegment)> {
        (0..2)
            .map(|s| {
                let tuples: Vec<TokenTuple> = (0..6u32)
                    .map(|i| TokenTuple {
                        pitch: 30 + i + s,
                        velocity: 34,
                        duration: 40 + i,
                        ioi: 4 + 24 * (i % 2),
                        position: 4 + i * 12,
                        bar: 4,
                    })
                    .collect();
                let mut targets = tuples.clone();
                for (i, t) in targets.iter_mut().enumerate() {
                    t.velocity = 20 + i as u32 + s;
                }
                (
                    segment(&tuples, s as usize).remove(0),
                    segment(&targets, s as usize).remove(0),
                )
            })
            .collect()
    }

    fn small_model() -> M2MModel {
        M2MModel::new(M2MConfig {
            seed: 3,
            ..M2MConfig::with_shape(1, 16, 2, 32, 2)
        })
        .unwrap()
    }

    #[test]
    fn zero_epochs_leave_model_unchanged() {
        let model = small_model();
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, log) = train(model.clone(), &tiny_dataset(), &cfg).unwrap();
        assert_eq!(trained, model);
        assert!(log.entries.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_keeps_weights_normalized() {
        let cfg = TrainConfig {
            learning_rate: 1e-3,
            warmup_steps: 2,
            max_epochs: 5,
            batch_size: 1,
            seed: 11,
            ..TrainConfig::default()
        };
        let (a, log_a) = train(small_model(), &tiny_dataset(), &cfg).unwrap();
        let (b, log_b) = train(small_model(), &tiny_dataset(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert_eq!(log_a.entries.len(), 10);
        for e in &log_a.entries {
            assert!((e.weights.iter().sum::<f64>() - 3.0).abs() < 1e-9);
        }
        assert!(log_a.to_csv().starts_with("step,lr,w_vel,w_ioi,w_dur,L_vel,L_ioi,L_dur,total\n"));
    }

    #[test]
    fn duplicated_batch_has_the_same_loss() {
        let model = small_model();
        let data = tiny_dataset();
        let once: Vec<_> = data.iter().map(|(a, b)| (a, b)).collect();
        let twice: Vec<_> = once.iter().chain(once.iter()).copied().collect();
        let w = [1.2, 0.9, 0.9];
        let l1 = batch_loss(&model, &once, &w).unwrap();
        let l2 = batch_loss(&model, &twice, &w).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        let g1 = batch_gradients(&model, &once, None).unwrap();
        let g2 = batch_gradients(&model, &twice, None).unwrap();
        for k in 0..3 {
            assert!((g1.losses[k] - g2.losses[k]).abs() < 1e-12);
        }
    }
}
