//! Mini-batch Adam over augmented patches with periodic held-out evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::data::{build_training_set, Pair};
use super::loss::{loss_fast, record_loss, LossConfig, LossKind};
use super::metrics::{metrics, MetricsReport};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::net::{hsrnet_forward, init_params, Hsrnet, HsrnetConfig, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_epsilon: f32,
    pub batch_size: usize,
    pub max_steps: usize,
    pub patch_size: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Expand each patch into its eight flips and rotations.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_epsilon: adam.epsilon,
            batch_size: 8,
            max_steps: 1000,
            patch_size: 32,
            seed: 0,
            eval_every: 100,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.patch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size, patch_size and eval_every must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Held-out evaluation at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub loss: f64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub train_loss: f64,
    pub eval: Option<EvalRecord>,
}

pub const HISTORY_HEADER: &str = "step,train_loss,eval_cc,eval_psnr,eval_ssim,eval_sam";

/// History as CSV; steps without evaluation leave the metric columns empty.
pub fn history_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for row in history {
        let _ = write!(out, "{},{:e}", row.step, row.train_loss);
        match &row.eval {
            Some(e) => {
                let r = &e.report;
                let _ = writeln!(out, ",{:e},{:e},{:e},{:e}", r.cc, r.psnr_db, r.ssim, r.sam_degrees);
            }
            None => out.push_str(",,,,\n"),
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest held-out loss (the final ones without a held-out split).
    pub params: ParamStore,
    pub best_step: usize,
    pub final_params: ParamStore,
    pub history: Vec<HistoryRow>,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss or gradient at step {step}")]
    Diverged {
        step: usize,
        /// Parameters before the step that diverged.
        last_good: Box<ParamStore>,
        history: Vec<HistoryRow>,
    },
    #[error(transparent)]
    Other(#[from] Error),
}

/// Training data plus the optional held-out scenes.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub train: &'a [Pair],
    pub eval: &'a [Pair],
}

/// Loss and parameter gradients of one sample.
pub fn sample_loss_and_grads(
    pair: &Pair,
    hcfg: &HsrnetConfig,
    params: &ParamStore,
    lcfg: &LossConfig,
    kind: LossKind,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::new();
    let net = Hsrnet::bind(&mut tape, hcfg, params)?;
    let out = net.forward(&mut tape, &pair.msi)?;
    let loss = record_loss(&mut tape, out, &pair.hsi.to_tensor(), lcfg, kind)?;
    let value = tape.value(loss).data()[0] as f64;
    let grads = tape.backward(loss)?;
    Ok((value, grads.named()))
}

/// Mean loss and gradients over a batch, summed in batch order.
pub fn batch_loss_and_grads(
    batch: &[&Pair],
    hcfg: &HsrnetConfig,
    params: &ParamStore,
    lcfg: &LossConfig,
    kind: LossKind,
) -> Result<(f64, BTreeMap<String, Tensor>)> {
    let mut total = 0.0;
    let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
    for pair in batch {
        let (loss, grads) = sample_loss_and_grads(pair, hcfg, params, lcfg, kind)?;
        total += loss;
        for (name, g) in grads {
            match acc.get_mut(&name) {
                Some(a) => a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y),
                None => {
                    acc.insert(name, g);
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f32;
    for g in acc.values_mut() {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    Ok((total / batch.len() as f64, acc))
}

/// Held-out loss (bulk form, unclamped output) and metrics (clamped output), averaged over scenes.
pub fn evaluate(pairs: &[Pair], hcfg: &HsrnetConfig, params: &ParamStore, lcfg: &LossConfig) -> Result<EvalRecord> {
    let mut loss = 0.0;
    let mut reports = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let out = hsrnet_forward(&pair.msi, hcfg, params)?;
        loss += loss_fast(&out.to_tensor(), &pair.hsi.to_tensor(), lcfg)?;
        reports.push(metrics(&out.map(|v| v.clamp(0.0, 1.0)), &pair.hsi)?);
    }
    let report = MetricsReport::mean(&reports).ok_or_else(|| Error::Contract("no evaluation scenes".into()))?;
    Ok(EvalRecord {
        loss: loss / pairs.len() as f64,
        report,
    })
}

/// Endless epoch-shuffled index stream.
struct Schedule {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl Schedule {
    fn new(n: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn all_finite(grads: &BTreeMap<String, Tensor>) -> bool {
    grads.values().all(Tensor::is_finite)
}

/// Trains from freshly initialized parameters.
pub fn train(
    data: Dataset<'_>,
    hcfg: &HsrnetConfig,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    kind: LossKind,
) -> std::result::Result<TrainOutcome, TrainError> {
    let params = init_params(hcfg)?;
    train_from(params, data, hcfg, tcfg, lcfg, kind)
}

/// Row `s` of the history records the batch loss at parameters `θ_s`;
/// `max_steps` updates are applied, so rows run from 0 to `max_steps`.
pub fn train_from(
    mut params: ParamStore,
    data: Dataset<'_>,
    hcfg: &HsrnetConfig,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    kind: LossKind,
) -> std::result::Result<TrainOutcome, TrainError> {
    hcfg.validate()?;
    tcfg.validate()?;
    params.check_against(hcfg)?;
    if lcfg.alpha < 0.0 {
        return Err(Error::Config(format!("loss alpha must be >= 0, got {}", lcfg.alpha)).into());
    }
    let pool = build_training_set(data.train, tcfg.patch_size, tcfg.augment)?;
    if pool.is_empty() {
        return Err(Error::Config("training set is empty".into()).into());
    }
    log::info!("training on {} patches, {} held-out scenes", pool.len(), data.eval.len());
    let mut schedule = Schedule::new(pool.len(), tcfg.seed);
    let adam = tcfg.adam();
    let mut state = AdamState::new();
    let mut history = Vec::with_capacity(tcfg.max_steps + 1);
    let mut best: Option<(f64, usize, ParamStore)> = None;

    for step in 0..=tcfg.max_steps {
        let batch: Vec<&Pair> = schedule.next_batch(tcfg.batch_size).into_iter().map(|i| &pool[i]).collect();
        let (loss, grads) = batch_loss_and_grads(&batch, hcfg, &params, lcfg, kind)?;
        if !loss.is_finite() || !all_finite(&grads) {
            return Err(TrainError::Diverged {
                step,
                last_good: Box::new(params),
                history,
            });
        }
        let eval = if !data.eval.is_empty() && (step % tcfg.eval_every == 0 || step == tcfg.max_steps) {
            let e = evaluate(data.eval, hcfg, &params, lcfg)?;
            log::info!(
                "step {step}: train {loss:.5}, eval {:.5}, psnr {:.2} dB, sam {:.2} deg",
                e.loss,
                e.report.psnr_db,
                e.report.sam_degrees
            );
            if e.loss.is_finite() && best.as_ref().is_none_or(|(l, _, _)| e.loss < *l) {
                best = Some((e.loss, step, params.clone()));
            }
            Some(e)
        } else {
            log::debug!("step {step}: train {loss:.5}");
            None
        };
        history.push(HistoryRow {
            step,
            train_loss: loss,
            eval,
        });
        if step < tcfg.max_steps {
            adam_step(&mut params, &grads, &mut state, &adam)?;
        }
    }

    let (best_step, best_params) = match best {
        Some((_, s, p)) => (s, p),
        None => (tcfg.max_steps, params.clone()),
    };
    Ok(TrainOutcome {
        params: best_params,
        best_step,
        final_params: params,
        history,
    })
}
