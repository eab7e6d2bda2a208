//! Mini-batch training with Adam, gradient clipping and early stopping.
//!
//! Each epoch draws `batches_per_epoch × batch_size` fixed-length segments
//! at random offsets from the training recordings. A batch is split into
//! chunks of `chunk_size` segments that are processed in parallel; chunk
//! gradients are summed in chunk order, so results do not depend on the
//! number of worker threads.

use ndarray::{s, Array2};
use rayon::prelude::*;

use super::adam::{adam_step, AdamState};
use super::model::{DeepLstmModel, Mode, SequenceBatch};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// One normalized recording: EEG input (`N_c × T`) and EOG target (`2 × T`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: Array2<f64>,
    pub target: Array2<f64>,
}

impl TrainingExample {
    pub fn new(input: Array2<f64>, target: Array2<f64>) -> Result<Self> {
        if input.ncols() != target.ncols() {
            return Err(Error::LengthMismatch {
                left: input.ncols(),
                right: target.ncols(),
            });
        }
        Ok(Self { input, target })
    }

    pub fn len(&self) -> usize {
        self.input.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.input.ncols() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Segments per optimization step.
    pub batch_size: usize,
    pub patience: usize,
    /// Share of training subjects held out for validation (used by callers
    /// that split subjects, see [`split_subjects`]).
    pub validation_fraction: f64,
    /// Samples per training segment.
    pub segment_len: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    /// Global L2 norm above which gradients are rescaled.
    pub clip_norm: f64,
    /// Segments per parallel work unit.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 250,
            patience: 2,
            validation_fraction: 0.2,
            segment_len: 200,
            batches_per_epoch: 8,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            chunk_size: 25,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 || self.batches_per_epoch == 0 || self.chunk_size == 0 {
            return bad("batch sizes must be >= 1");
        }
        if self.segment_len < 2 {
            return bad("segment_len must be >= 2");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning_rate and clip_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean train-mode (dropout on) minibatch loss.
    pub train_loss: f64,
    /// Eval-mode loss over the full validation recordings.
    pub val_loss: f64,
    /// Largest pre-clipping gradient norm seen this epoch.
    pub max_grad_norm: f64,
    pub clipped_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Eval-mode losses of the initial parameters.
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub clip_norm: f64,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> f64 {
        self.epochs[self.best_epoch - 1].val_loss
    }
}

/// Outcome of feeding one validation loss to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waited: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            waited: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.waited = 0;
            StopDecision::Improved
        } else {
            self.waited += 1;
            if self.waited >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// Shuffle `0..n` and split off `round(fraction · n)` indices (at least one
/// when `fraction > 0` and `n > 1`). Returns `(kept, held_out)`, each sorted.
pub fn split_subjects(n: usize, fraction: f64, rng: &mut SeededRng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut k = (fraction * n as f64).round() as usize;
    if fraction > 0.0 && n > 1 {
        k = k.clamp(1, n - 1);
    }
    let mut held: Vec<usize> = idx[..k].to_vec();
    let mut kept: Vec<usize> = idx[k..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    (kept, held)
}

/// Eval-mode MSE over whole recordings, pooled over all entries.
pub fn evaluate_loss(model: &DeepLstmModel, set: &[TrainingExample]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::NoData("empty evaluation set".into()));
    }
    let mut rng = SeededRng::new(0);
    let mut sse = 0.0;
    let mut count = 0usize;
    // batch recordings of equal length together
    let mut lengths: Vec<usize> = set.iter().map(|e| e.len()).collect();
    lengths.sort_unstable();
    lengths.dedup();
    for len in lengths {
        let group: Vec<&TrainingExample> = set.iter().filter(|e| e.len() == len).collect();
        let inputs: Vec<_> = group.iter().map(|e| e.input.view()).collect();
        let targets: Vec<_> = group.iter().map(|e| e.target.view()).collect();
        let xb = SequenceBatch::from_sequences(&inputs)?;
        let yb = SequenceBatch::from_sequences(&targets)?;
        let (out, _) = model.forward_batch(&xb, Mode::Eval, &mut rng)?;
        if out.data.dim() != yb.data.dim() {
            return Err(Error::Dimension("target rows do not match model outputs".into()));
        }
        sse += out
            .data
            .iter()
            .zip(yb.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
        count += out.data.len();
    }
    Ok(sse / count as f64)
}

pub fn train(
    model: DeepLstmModel,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(DeepLstmModel, TrainHistory)> {
    train_with_observer(model, train_set, val_set, config, rng, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_observer(
    mut model: DeepLstmModel,
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    config: &TrainConfig,
    rng: &mut SeededRng,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<(DeepLstmModel, TrainHistory)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::NoData("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::NoData("validation set is empty".into()));
    }
    for e in train_set.iter().chain(val_set) {
        if e.input.nrows() != model.n_inputs() {
            return Err(Error::InputWidth {
                expected: model.n_inputs(),
                got: e.input.nrows(),
            });
        }
        if e.target.nrows() != model.n_outputs() {
            return Err(Error::Dimension(format!(
                "target has {} rows, model outputs {}",
                e.target.nrows(),
                model.n_outputs()
            )));
        }
    }
    let shortest = train_set.iter().map(|e| e.len()).min().unwrap_or(0);
    let seg_len = config.segment_len.min(shortest);
    if seg_len < 2 {
        return Err(Error::NoData("training recordings shorter than 2 samples".into()));
    }

    let initial_train_loss = evaluate_loss(&model, train_set)?;
    let initial_val_loss = evaluate_loss(&model, val_set)?;

    let mut adam = AdamState::with_lr(&model, config.learning_rate);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_model = model.clone();
    let mut records = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut max_norm = 0.0_f64;
        let mut clipped = 0;
        for _ in 0..config.batches_per_epoch {
            let positions = draw_segments(train_set, seg_len, config.batch_size, rng);
            let (mut grads, loss) =
                batch_gradient(&model, train_set, &positions, seg_len, config.chunk_size, rng)?;
            let norm = grads.l2_norm();
            max_norm = max_norm.max(norm);
            if norm > config.clip_norm {
                grads.scale(config.clip_norm / norm);
                clipped += 1;
            }
            adam_step(&mut model, &grads, &mut adam);
            loss_sum += loss;
        }
        if !model.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "parameters diverged in epoch {epoch}"
            )));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / config.batches_per_epoch as f64,
            val_loss: evaluate_loss(&model, val_set)?,
            max_grad_norm: max_norm,
            clipped_steps: clipped,
        };
        observer(&record);
        let decision = stopper.observe(epoch, record.val_loss);
        records.push(record);
        match decision {
            StopDecision::Improved => best_model = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = epoch < config.epochs;
                break;
            }
        }
    }

    let history = TrainHistory {
        epochs: records,
        initial_train_loss,
        initial_val_loss,
        best_epoch: stopper.best_epoch(),
        stopped_early,
        clip_norm: config.clip_norm,
    };
    Ok((best_model, history))
}

/// `(example index, offset)` pairs; examples are chosen in proportion to the
/// number of valid offsets they offer.
fn draw_segments(
    set: &[TrainingExample],
    seg_len: usize,
    count: usize,
    rng: &mut SeededRng,
) -> Vec<(usize, usize)> {
    let slots: Vec<usize> = set.iter().map(|e| e.len() + 1 - seg_len).collect();
    let total: usize = slots.iter().sum();
    (0..count)
        .map(|_| {
            let mut k = rng.int_range(0, total - 1);
            for (i, &n) in slots.iter().enumerate() {
                if k < n {
                    return (i, k);
                }
                k -= n;
            }
            unreachable!("slot index within total")
        })
        .collect()
}

fn batch_gradient(
    model: &DeepLstmModel,
    set: &[TrainingExample],
    positions: &[(usize, usize)],
    seg_len: usize,
    chunk_size: usize,
    rng: &mut SeededRng,
) -> Result<(DeepLstmModel, f64)> {
    let normalizer = (positions.len() * seg_len * model.n_outputs()) as f64;
    let chunks: Vec<(&[(usize, usize)], SeededRng)> = positions
        .chunks(chunk_size)
        .map(|c| (c, rng.fork()))
        .collect();
    let results: Vec<Result<(DeepLstmModel, f64)>> = chunks
        .into_par_iter()
        .map(|(chunk, mut chunk_rng)| {
            let inputs: Vec<_> = chunk
                .iter()
                .map(|&(i, o)| set[i].input.slice(s![.., o..o + seg_len]))
                .collect();
            let targets: Vec<_> = chunk
                .iter()
                .map(|&(i, o)| set[i].target.slice(s![.., o..o + seg_len]))
                .collect();
            let xb = SequenceBatch::from_sequences(&inputs)?;
            let yb = SequenceBatch::from_sequences(&targets)?;
            let (_, cache) = model.forward_batch(&xb, Mode::Train, &mut chunk_rng)?;
            model.backprop_scaled(cache.as_ref(), &yb, normalizer)
        })
        .collect();
    let mut total = model.zeros_like();
    let mut loss = 0.0;
    for r in results {
        let (g, l) = r?;
        total.add_assign(&g);
        loss += l;
    }
    Ok((total, loss))
}
