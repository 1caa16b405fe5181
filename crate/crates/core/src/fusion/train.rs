//! Mini-batch training with seeded shuffling and early stopping on dev
//! micro-F. The best-scoring parameters are restored before returning.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::config::TrainConfig;
use crate::dataset::EncodedInstance;
use crate::error::{Error, Result};
use crate::eval::micro_prf;
use crate::fusion::Model;
use crate::numerics::{ops, AdamState, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Dev-set micro P/R/F under the current parameters.
pub fn evaluate_micro(model: &Model, dev_set: &[EncodedInstance]) -> Result<(f64, f64, f64)> {
    let labels = model.labels();
    let mut preds = Vec::with_capacity(dev_set.len());
    let mut golds = Vec::with_capacity(dev_set.len());
    for x in dev_set {
        let out = model.forward(x, None)?;
        let name = labels.name(out.predicted()).ok_or_else(|| {
            Error::validation(x.instance_id.clone(), "prediction outside label set")
        })?;
        preds.push(name.to_string());
        golds.push(x.label.clone());
    }
    let prf = micro_prf(&preds, &golds, labels.positive_names())?;
    Ok((prf.precision, prf.recall, prf.f1))
}

pub fn train(
    train_set: &[EncodedInstance],
    dev_set: &[EncodedInstance],
    cfg: &TrainConfig,
    vocab_size: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let model = Model::new(cfg.model_config(vocab_size), &mut rng)?;
    let params = model.params();
    // Learning rate zero is a sanctioned no-op schedule: the forward and
    // backward passes still run but no optimizer step is taken.
    let mut adam = if cfg.optimizer.lr > 0.0 {
        Some(AdamState::new(cfg.optimizer, &params)?)
    } else {
        None
    };

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    let mut since_best = 0usize;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            for (_, p) in &params {
                p.zero_grad();
            }
            let mut batch_loss: Option<Tensor> = None;
            for &i in batch {
                let x = &train_set[i];
                let out = model.forward(x, Some(&mut rng))?;
                let loss = model.loss(&out, x.gold)?;
                batch_loss = Some(match batch_loss {
                    Some(acc) => ops::add(&acc, &loss)?,
                    None => loss,
                });
            }
            let mean = ops::scale(&batch_loss.unwrap(), 1.0 / batch.len() as f64)?;
            loss_sum += mean.to_vec()[0] * batch.len() as f64;
            if let Some(adam) = adam.as_mut() {
                mean.backward()?;
                adam.step(&params)?;
            }
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let (dev_precision, dev_recall, dev_f1) = evaluate_micro(&model, dev_set)?;
        log.push(EpochRecord {
            epoch,
            train_loss,
            dev_precision,
            dev_recall,
            dev_f1,
        });
        log::info!(
            "epoch {epoch}: train_loss {train_loss:.4} dev P {dev_precision:.4} R {dev_recall:.4} F {dev_f1:.4}"
        );

        if best.as_ref().map_or(true, |(_, f, _)| dev_f1 > *f) {
            let snapshot = params.iter().map(|(_, p)| p.to_vec()).collect();
            best = Some((epoch, dev_f1, snapshot));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (best_epoch, best_dev_f1, snapshot) = best.unwrap();
    for ((_, p), data) in params.iter().zip(snapshot) {
        p.set_data(data)?;
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_dev_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{InstanceKind, Task};
    use crate::encoder::EncoderConfig;

    // A vocabulary-free fixture: ids chosen directly, with token 4 carrying
    // the class signal. Instances with the cue token inside get CPR:4,
    // the rest are False.
    fn fixture(n: usize) -> Vec<EncodedInstance> {
        (0..n)
            .map(|i| {
                let positive = i % 2 == 0;
                let cue = if positive { 4 } else { 5 };
                EncodedInstance {
                    instance_id: format!("d.s{i}.T1.T2"),
                    kind: if i % 3 == 0 {
                        InstanceKind::Overlapping
                    } else {
                        InstanceKind::Normal
                    },
                    label: if positive { "CPR:4".into() } else { "False".into() },
                    gold: if positive { 1 } else { 5 },
                    instance_ids: vec![2, 6 + (i % 2), cue, 7, 3],
                    dist1: vec![0, 1, 2],
                    dist2: vec![-2, -1, 0],
                    title_ids: vec![2, cue, 3],
                    knowledge_ids: vec![2, 3],
                }
            })
            .collect()
    }

    fn tiny_config(seed: u64, lr: f64) -> TrainConfig {
        TrainConfig {
            seed,
            task: Task::Cpi,
            batch_size: 4,
            max_epochs: 8,
            patience: 3,
            encoder: EncoderConfig {
                layers: 1,
                hidden: 16,
                heads: 2,
                feed_forward: 32,
                max_len: 16,
                dropout: 0.0,
                vocab_size: 0,
            },
            optimizer: crate::numerics::AdamConfig {
                lr,
                ..Default::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_decreases_on_a_small_fixture() {
        let data = fixture(10);
        let out = train(&data, &data, &tiny_config(3, 0.01), 16).unwrap();
        let first = out.log.first().unwrap().train_loss;
        let last = out.log.last().unwrap().train_loss;
        assert!(
            last < first,
            "loss did not decrease: {first} -> {last}"
        );
        assert_eq!(out.log[0].epoch, 1);
    }

    #[test]
    fn same_seed_reproduces_the_dev_curve() {
        let data = fixture(8);
        let a = train(&data, &data, &tiny_config(11, 0.01), 16).unwrap();
        let b = train(&data, &data, &tiny_config(11, 0.01), 16).unwrap();
        let curve = |o: &TrainOutcome| -> Vec<(f64, f64)> {
            o.log.iter().map(|r| (r.train_loss, r.dev_f1)).collect()
        };
        assert_eq!(curve(&a), curve(&b));
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let data = fixture(6);
        let cfg = tiny_config(5, 0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
        let reference = Model::new(cfg.model_config(16), &mut rng).unwrap();
        let out = train(&data, &data, &cfg, 16).unwrap();
        for ((name, trained), (_, fresh)) in
            out.model.params().iter().zip(reference.params())
        {
            assert_eq!(trained.to_vec(), fresh.to_vec(), "{name} moved");
        }
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let err = train(&[], &fixture(2), &tiny_config(1, 0.01), 16);
        assert!(err.is_err());
    }

    #[test]
    fn restored_parameters_match_the_best_epoch() {
        let data = fixture(10);
        let out = train(&data, &data, &tiny_config(9, 0.01), 16).unwrap();
        let (_, _, f) = evaluate_micro(&out.model, &data).unwrap();
        assert!(
            (f - out.best_dev_f1).abs() < 1e-12,
            "restored model scores {f}, log says {}",
            out.best_dev_f1
        );
        let logged_best = out
            .log
            .iter()
            .map(|r| r.dev_f1)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((logged_best - out.best_dev_f1).abs() < 1e-12);
    }

    #[test]
    fn patience_caps_the_epoch_count() {
        let data = fixture(6);
        let mut cfg = tiny_config(2, 0.0);
        cfg.max_epochs = 30;
        cfg.patience = 2;
        // Frozen parameters never improve after the first epoch, so the
        // run must stop at exactly 1 + patience epochs.
        let out = train(&data, &data, &cfg, 16).unwrap();
        assert_eq!(out.log.len(), 3);
        assert_eq!(out.best_epoch, 1);
    }
}
