//! Minibatch training with per-epoch loss tracing and best-snapshot
//! selection on validation loss.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use super::{batch_gradient_indexed, batch_loss, AdamOptions, AdamState, LstmParams, Workspace};
use crate::data::SequenceSample;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Knobs of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

/// One row of the loss trace. The train entry is the sample-weighted mean
/// of minibatch losses as they were visited; the validation entry is a full
/// pass after the epoch, absent when no validation set was given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss<F> {
    pub train: F,
    pub valid: Option<F>,
}

/// Trained parameters plus the trace that produced them.
#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    pub params: LstmParams<F>,
    pub trace: Vec<EpochLoss<F>>,
    /// Epoch (0-based) whose snapshot was returned; `None` without a
    /// validation set, in which case the final parameters are returned.
    pub best_epoch: Option<usize>,
}

/// Runs minibatch Adam from `start`, reshuffling each epoch from the seed.
/// With a validation set, the returned parameters are the snapshot with the
/// lowest validation loss; otherwise the final parameters.
pub fn train<F: Scalar>(
    start: &LstmParams<F>,
    train_set: &[SequenceSample<F>],
    valid_set: &[SequenceSample<F>],
    opts: &TrainOptions,
) -> Result<TrainOutcome<F>> {
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if opts.batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    let mut params = start.clone();
    if opts.epochs == 0 {
        return Ok(TrainOutcome { params, trace: Vec::new(), best_epoch: None });
    }

    let dims = start.dims();
    let mut ws = Workspace::new(dims);
    let mut grads = vec![F::zero(); dims.param_count()];
    let mut adam = AdamState::new(
        dims.param_count(),
        AdamOptions::with_learning_rate(F::of(opts.learning_rate)),
    )?;
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut trace = Vec::with_capacity(opts.epochs);
    let mut best: Option<(F, usize, LstmParams<F>)> = None;
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = F::zero();
        for chunk in order.chunks(opts.batch_size) {
            let loss = batch_gradient_indexed(&params, train_set, chunk, &mut ws, &mut grads)?;
            adam.apply(params.theta_mut(), &grads)?;
            loss_sum += loss * F::of(chunk.len() as f64);
        }
        let train_loss = loss_sum / F::of(train_set.len() as f64);
        let valid_loss = if valid_set.is_empty() {
            None
        } else {
            let v = batch_loss(&params, valid_set, &mut ws)?;
            let better = match &best {
                Some((b, _, _)) => v < *b,
                None => true,
            };
            if better {
                best = Some((v, epoch, params.clone()));
            }
            Some(v)
        };
        trace.push(EpochLoss { train: train_loss, valid: valid_loss });
    }

    match best {
        Some((_, epoch, snapshot)) => {
            Ok(TrainOutcome { params: snapshot, trace, best_epoch: Some(epoch) })
        }
        None => Ok(TrainOutcome { params, trace, best_epoch: None }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_samples, synthesize_stream, Normalizer};
    use crate::nnet::LstmDims;
    use chrono::NaiveDate;

    fn synthetic_samples(days: usize, seed: u64) -> Vec<SequenceSample<f64>> {
        let start = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
        let records = synthesize_stream::<f64>(days, start, seed, None).unwrap();
        let norm = Normalizer::fit(&records).unwrap();
        make_samples(&norm.normalize_all(&records), 4).unwrap()
    }

    #[test]
    fn zero_epochs_return_the_start_parameters_unchanged() {
        let dims = LstmDims::new(4).unwrap();
        let start = LstmParams::<f64>::init(dims, 5);
        let samples = synthetic_samples(2, 5);
        let opts = TrainOptions { epochs: 0, batch_size: 8, learning_rate: 1e-3, seed: 1 };
        let out = train(&start, &samples, &[], &opts).unwrap();
        assert_eq!(out.params, start);
        assert!(out.trace.is_empty());
        assert_eq!(out.best_epoch, None);
    }

    #[test]
    fn same_seed_reproduces_traces_and_parameters_bit_for_bit() {
        let dims = LstmDims::new(4).unwrap();
        let start = LstmParams::<f64>::init(dims, 7);
        let samples = synthetic_samples(4, 8);
        let (train_set, valid_set) = samples.split_at(64);
        let opts = TrainOptions { epochs: 4, batch_size: 16, learning_rate: 1e-3, seed: 9 };
        let a = train(&start, train_set, valid_set, &opts).unwrap();
        let b = train(&start, train_set, valid_set, &opts).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace.len(), 4);
        for (x, y) in a.trace.iter().zip(&b.trace) {
            assert_eq!(x.train, y.train);
            assert_eq!(x.valid, y.valid);
        }

        let other = TrainOptions { seed: 10, ..opts };
        let c = train(&start, train_set, valid_set, &other).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn returned_snapshot_attains_the_lowest_traced_validation_loss() {
        let dims = LstmDims::new(3).unwrap();
        let start = LstmParams::<f64>::init(dims, 3);
        let samples = synthetic_samples(4, 12);
        let (train_set, valid_set) = samples.split_at(60);
        let opts = TrainOptions { epochs: 6, batch_size: 16, learning_rate: 5e-3, seed: 4 };
        let out = train(&start, train_set, valid_set, &opts).unwrap();
        let best_epoch = out.best_epoch.unwrap();
        let best_traced = out
            .trace
            .iter()
            .filter_map(|e| e.valid)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(out.trace[best_epoch].valid.unwrap(), best_traced);
        let mut ws = Workspace::new(dims);
        let recomputed = batch_loss(&out.params, valid_set, &mut ws).unwrap();
        assert_eq!(recomputed, best_traced);
    }

    #[test]
    fn long_run_cuts_the_training_loss_by_an_order_of_magnitude() {
        let dims = LstmDims::new(4).unwrap();
        let start = LstmParams::<f64>::init(dims, 42);
        let samples = synthetic_samples(60, 42);
        let opts = TrainOptions { epochs: 500, batch_size: 256, learning_rate: 1e-3, seed: 42 };
        let out = train(&start, &samples, &[], &opts).unwrap();
        let first = out.trace.first().unwrap().train;
        let last = out.trace.last().unwrap().train;
        assert!(
            last < 0.1 * first,
            "train loss went from {} to {}, expected a 10x cut",
            first,
            last
        );
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let dims = LstmDims::new(2).unwrap();
        let start = LstmParams::<f64>::init(dims, 1);
        let samples = synthetic_samples(2, 2);
        let opts = TrainOptions { epochs: 1, batch_size: 0, learning_rate: 1e-3, seed: 1 };
        assert!(train(&start, &samples, &[], &opts).is_err());
        let opts = TrainOptions { epochs: 1, batch_size: 8, learning_rate: 1e-3, seed: 1 };
        assert!(matches!(train(&start, &[], &[], &opts), Err(Error::Empty(_))));
        let opts = TrainOptions { epochs: 1, batch_size: 8, learning_rate: -1.0, seed: 1 };
        assert!(train(&start, &samples, &[], &opts).is_err());
    }
}
