use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::model::argmax;
use super::{Model, ModelParams};
use crate::corpus::ClassWeights;
use crate::embedding::EncodedDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSchedule {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub plateau_patience: usize,
    pub plateau_factor: f64,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub class_weights: ClassWeights,
    pub seed: u64,
}

impl TrainingSchedule {
    /// Batch 64, learning rate 1e-4, halving after 5 and stopping after 15
    /// epochs without a lower test loss.
    pub fn new(max_epochs: usize, class_weights: ClassWeights, seed: u64) -> Self {
        TrainingSchedule {
            batch_size: 64,
            initial_lr: 1e-4,
            plateau_patience: 5,
            plateau_factor: 0.5,
            early_stop_patience: 15,
            max_epochs,
            class_weights,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be at least 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return bad("plateau_factor must lie in (0, 1)");
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return bad("initial_lr must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    /// Learning rate used during this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochDecision {
    Improved,
    Continue,
    Stop,
}

/// Plateau learning-rate halving and early stopping on test loss. Only a
/// strictly lower loss counts as an improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauState {
    pub lr: f64,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub plateau_wait: usize,
    pub stop_wait: usize,
    factor: f64,
    plateau_patience: usize,
    early_stop_patience: usize,
}

impl PlateauState {
    pub fn new(schedule: &TrainingSchedule) -> Self {
        PlateauState {
            lr: schedule.initial_lr,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            plateau_wait: 0,
            stop_wait: 0,
            factor: schedule.plateau_factor,
            plateau_patience: schedule.plateau_patience,
            early_stop_patience: schedule.early_stop_patience,
        }
    }

    pub fn observe(&mut self, epoch: usize, test_loss: f64) -> EpochDecision {
        if test_loss < self.best_loss {
            self.best_loss = test_loss;
            self.best_epoch = epoch;
            self.plateau_wait = 0;
            self.stop_wait = 0;
            return EpochDecision::Improved;
        }
        self.plateau_wait += 1;
        self.stop_wait += 1;
        if self.plateau_wait >= self.plateau_patience {
            self.lr *= self.factor;
            self.plateau_wait = 0;
        }
        if self.stop_wait >= self.early_stop_patience {
            EpochDecision::Stop
        } else {
            EpochDecision::Continue
        }
    }
}

/// What [`run_schedule`] drives: one training epoch, one test evaluation, and
/// parameter snapshots for restoring the best epoch.
pub trait EpochRunner {
    type Snapshot;

    /// Returns (train loss, train accuracy).
    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<(f64, f64)>;
    /// Returns (test loss, test accuracy).
    fn evaluate(&mut self) -> Result<(f64, f64)>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
}

/// Runs epochs until early stopping or `max_epochs`, then restores the
/// parameters of the epoch with the lowest test loss.
pub fn run_schedule<R: EpochRunner>(runner: &mut R, schedule: &TrainingSchedule) -> Result<TrainingHistory> {
    run_schedule_until(runner, schedule, |_| false)
}

/// [`run_schedule`] that also ends after any epoch for which `stop` returns true.
pub fn run_schedule_until<R: EpochRunner>(
    runner: &mut R,
    schedule: &TrainingSchedule,
    mut stop: impl FnMut(&EpochRecord) -> bool,
) -> Result<TrainingHistory> {
    schedule.validate()?;
    let mut state = PlateauState::new(schedule);
    let mut epochs = Vec::new();
    let mut best = None;
    let mut stopped_early = false;
    for epoch in 1..=schedule.max_epochs {
        let lr = state.lr;
        let (train_loss, train_accuracy) = runner.train_epoch(epoch, lr)?;
        let (test_loss, test_accuracy) = runner.evaluate()?;
        if !test_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: 0 });
        }
        log::info!(
            "epoch {epoch}: loss {train_loss:.4} acc {train_accuracy:.4} test loss {test_loss:.4} test acc {test_accuracy:.4} lr {lr:.3e}"
        );
        let record = EpochRecord { epoch, train_loss, train_accuracy, test_loss, test_accuracy, learning_rate: lr };
        let requested = stop(&record);
        epochs.push(record);
        match state.observe(epoch, test_loss) {
            EpochDecision::Improved => best = Some(runner.snapshot()),
            EpochDecision::Continue => {}
            EpochDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
        if requested {
            break;
        }
    }
    if let Some(best) = best {
        runner.restore(best);
    }
    Ok(TrainingHistory { epochs, best_epoch: state.best_epoch, stopped_early })
}

struct ModelRunner<'a> {
    model: &'a mut Model,
    adam: AdamState,
    data: &'a EncodedDataset,
    train: Vec<usize>,
    test: &'a [usize],
    batch_size: usize,
    weights: &'a ClassWeights,
    rng: ChaCha8Rng,
}

impl EpochRunner for ModelRunner<'_> {
    type Snapshot = ModelParams;

    fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<(f64, f64)> {
        self.train.shuffle(&mut self.rng);
        let (mut loss, mut correct) = (0.0, 0);
        for (b, batch) in self.train.chunks(self.batch_size).enumerate() {
            let inputs = self.data.batch_inputs(batch);
            let labels: Vec<usize> = batch.iter().map(|&i| self.data.samples[i].label).collect();
            let g = self.model.loss_and_gradients(&inputs, &labels, self.weights)?;
            if !g.loss.is_finite() || !g.grads.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adam_step(&mut self.model.params, &g.grads, &mut self.adam, lr);
            loss += g.loss * batch.len() as f64;
            correct += count_correct(&g.probs, &labels);
        }
        let n = self.train.len() as f64;
        Ok((loss / n, correct as f64 / n))
    }

    fn evaluate(&mut self) -> Result<(f64, f64)> {
        evaluate_indices(self.model, self.data, self.test, self.batch_size)
    }

    fn snapshot(&self) -> ModelParams {
        self.model.params.clone()
    }

    fn restore(&mut self, snapshot: ModelParams) {
        self.model.params = snapshot;
    }
}

fn count_correct(probs: &Array2<f64>, labels: &[usize]) -> usize {
    probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p.iter().copied()) == y)
        .count()
}

/// Class probabilities for `indices` of `data`, computed `batch_size` at a time.
pub fn predict_indices(model: &Model, data: &EncodedDataset, indices: &[usize], batch_size: usize) -> Result<(Vec<usize>, Array2<f64>)> {
    let mut parts = Vec::new();
    for batch in indices.chunks(batch_size.max(1)) {
        parts.push(model.forward_batch(&data.batch_inputs(batch))?);
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let probs = if views.is_empty() {
        Array2::zeros((0, model.config.num_classes))
    } else {
        concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?
    };
    let labels = probs.rows().into_iter().map(|p| argmax(p.iter().copied())).collect();
    Ok((labels, probs))
}

/// Unweighted mean cross-entropy and accuracy on `indices`.
pub fn evaluate_indices(model: &Model, data: &EncodedDataset, indices: &[usize], batch_size: usize) -> Result<(f64, f64)> {
    let (_, probs) = predict_indices(model, data, indices, batch_size)?;
    let labels: Vec<usize> = indices.iter().map(|&i| data.samples[i].label).collect();
    let uniform = ClassWeights::uniform(model.config.num_classes);
    let loss: f64 = probs
        .rows()
        .into_iter()
        .zip(&labels)
        .map(|(p, &y)| super::weighted_cross_entropy(p, y, &uniform))
        .sum();
    let n = indices.len() as f64;
    Ok((loss / n, count_correct(&probs, &labels) as f64 / n))
}

/// Trains `model` in place on `train` with `test` as the monitored set.
pub fn fit(model: &mut Model, data: &EncodedDataset, train: &[usize], test: &[usize], schedule: &TrainingSchedule) -> Result<TrainingHistory> {
    fit_until(model, data, train, test, schedule, |_| false)
}

/// [`fit`] with an extra stopping rule checked after every epoch.
pub fn fit_until(
    model: &mut Model,
    data: &EncodedDataset,
    train: &[usize],
    test: &[usize],
    schedule: &TrainingSchedule,
    stop: impl FnMut(&EpochRecord) -> bool,
) -> Result<TrainingHistory> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("training and test sets must be nonempty".into()));
    }
    if data.num_classes != model.config.num_classes || schedule.class_weights.weights.len() != model.config.num_classes {
        return Err(Error::Shape(format!(
            "model has {} classes, dataset {} and class weights {}",
            model.config.num_classes,
            data.num_classes,
            schedule.class_weights.weights.len()
        )));
    }
    if data.seq_len != model.config.seq_len || data.dim() != model.config.input_dim {
        return Err(Error::Shape(format!(
            "model expects {}x{} inputs, dataset holds {}x{}",
            model.config.seq_len,
            model.config.input_dim,
            data.seq_len,
            data.dim()
        )));
    }
    let adam = AdamState::new(&model.params);
    let mut runner = ModelRunner {
        model,
        adam,
        data,
        train: train.to_vec(),
        test,
        batch_size: schedule.batch_size,
        weights: &schedule.class_weights,
        rng: ChaCha8Rng::seed_from_u64(schedule.seed),
    };
    run_schedule_until(&mut runner, schedule, stop)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Replays a fixed test-loss sequence; parameters are the epoch number.
    struct Scripted {
        losses: Vec<f64>,
        seen: usize,
        params: usize,
        lrs: Vec<f64>,
    }

    impl Scripted {
        fn new(losses: Vec<f64>) -> Self {
            Scripted { losses, seen: 0, params: 0, lrs: Vec::new() }
        }
    }

    impl EpochRunner for Scripted {
        type Snapshot = usize;

        fn train_epoch(&mut self, epoch: usize, lr: f64) -> Result<(f64, f64)> {
            self.params = epoch;
            self.lrs.push(lr);
            Ok((0.0, 0.0))
        }

        fn evaluate(&mut self) -> Result<(f64, f64)> {
            self.seen += 1;
            Ok((self.losses[self.seen - 1], 0.0))
        }

        fn snapshot(&self) -> usize {
            self.params
        }

        fn restore(&mut self, snapshot: usize) {
            self.params = snapshot;
        }
    }

    fn schedule(max_epochs: usize) -> TrainingSchedule {
        TrainingSchedule::new(max_epochs, ClassWeights::uniform(2), 0)
    }

    #[test]
    fn plateau_halves_after_five() {
        let mut r = Scripted::new(vec![1.0, 1.0, 1.2, 1.0, 3.0, 1.1, 1.0, 1.0]);
        let h = run_schedule(&mut r, &schedule(8)).unwrap();
        let lrs: Vec<f64> = h.epochs.iter().map(|e| e.learning_rate).collect();
        assert_eq!(lrs, [1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 1e-4, 5e-5, 5e-5]);
        assert_eq!(r.lrs, lrs);
    }

    #[test]
    fn improvement_resets_plateau_counter() {
        let losses = vec![1.0, 2.0, 2.0, 2.0, 2.0, 0.5, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0];
        let h = run_schedule(&mut Scripted::new(losses), &schedule(12)).unwrap();
        assert!(h.epochs[..11].iter().all(|e| e.learning_rate == 1e-4));
        assert_eq!(h.epochs[11].learning_rate, 5e-5);
    }

    #[test]
    fn early_stop_after_fifteen_restores_best() {
        let mut losses = vec![3.0, 2.0, 1.0];
        losses.extend(std::iter::repeat_n(1.5, 40));
        let mut r = Scripted::new(losses);
        let h = run_schedule(&mut r, &schedule(100)).unwrap();
        assert!(h.stopped_early);
        assert_eq!(h.epochs.len(), 3 + 15);
        assert_eq!(h.best_epoch, 3);
        assert_eq!(r.params, 3);
        let lrs: Vec<f64> = h.epochs.iter().map(|e| e.learning_rate).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(lrs[17], 1e-4 / 4.0);
    }

    #[test]
    fn equal_loss_is_not_an_improvement() {
        let h = run_schedule(&mut Scripted::new(vec![1.0; 30]), &schedule(30)).unwrap();
        assert_eq!(h.best_epoch, 1);
        assert_eq!(h.epochs.len(), 16);
    }

    #[test]
    fn max_epochs_restores_best() {
        let mut r = Scripted::new(vec![2.0, 1.0, 1.5, 1.7]);
        let h = run_schedule(&mut r, &schedule(4)).unwrap();
        assert!(!h.stopped_early);
        assert_eq!(r.params, 2);
    }

    #[test]
    fn stop_callback_ends_training() {
        let mut r = Scripted::new(vec![5.0, 4.0, 3.0, 2.0, 1.0]);
        let h = run_schedule_until(&mut r, &schedule(5), |e| e.epoch == 3).unwrap();
        assert_eq!(h.epochs.len(), 3);
        assert!(!h.stopped_early);
        assert_eq!(r.params, 3);
    }

    #[test]
    fn non_finite_test_loss_aborts() {
        assert!(matches!(
            run_schedule(&mut Scripted::new(vec![1.0, f64::NAN]), &schedule(5)),
            Err(Error::NonFiniteLoss { epoch: 2, .. })
        ));
    }

    #[test]
    fn schedule_validation() {
        let s = schedule(1);
        s.validate().unwrap();
        assert!(TrainingSchedule { plateau_factor: 1.0, ..s.clone() }.validate().is_err());
        assert!(TrainingSchedule { early_stop_patience: 0, ..s.clone() }.validate().is_err());
        assert!(TrainingSchedule { batch_size: 0, ..s }.validate().is_err());
    }
}
