//! The classification model: shared (or per-input) encoders, the fused
//! representation, and the softmax head, with checkpoint round-tripping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, Task};
use crate::dataset::EncodedInstance;
use crate::encoder::{EncodedSequence, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::fusion::{fusion_attention, Ablation, Component, FusedRepresentations};
use crate::gaussian::{target_aware_pool, GaussianConfig};
use crate::numerics::{init, ops, Checkpoint, ParamRecord, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub gaussian: GaussianConfig,
    pub ablation: Ablation,
    /// One encoder for all three inputs (the default) or separate weights
    /// for title and knowledge sequences.
    pub share_encoder: bool,
    pub task: Task,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            gaussian: GaussianConfig::default(),
            ablation: Ablation::full(),
            share_encoder: true,
            task: Task::Cpi,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.gaussian.validate()
    }
}

pub struct Model {
    cfg: ModelConfig,
    labels: LabelSet,
    encoder: Encoder,
    title_encoder: Option<Encoder>,
    knowledge_encoder: Option<Encoder>,
    w_out: Tensor,
    b_out: Tensor,
}

/// Forward result for one instance.
pub struct ModelOutput {
    pub fused: FusedRepresentations,
    pub logits: Tensor,
    pub probs: Tensor,
}

impl ModelOutput {
    /// Argmax label index; ties resolve to the lowest index.
    pub fn predicted(&self) -> usize {
        let data = self.probs.to_vec();
        let mut best = 0;
        for (i, &p) in data.iter().enumerate() {
            if p > data[best] {
                best = i;
            }
        }
        best
    }
}

impl Model {
    pub fn new<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let labels = LabelSet::for_task(cfg.task);
        let encoder = Encoder::new(cfg.encoder.clone(), rng)?;
        let title_encoder = if !cfg.share_encoder && cfg.ablation.uses(Component::Title) {
            Some(Encoder::new(cfg.encoder.clone(), rng)?)
        } else {
            None
        };
        let knowledge_encoder = if !cfg.share_encoder && cfg.ablation.uses(Component::Knowledge) {
            Some(Encoder::new(cfg.encoder.clone(), rng)?)
        } else {
            None
        };
        let width = cfg.encoder.hidden * cfg.ablation.slot_multiplier();
        let w_out = Tensor::param(
            &[width, labels.len()],
            init::projection(width, labels.len(), rng),
        )?;
        let b_out = Tensor::param(&[labels.len()], init::zeros(labels.len()))?;
        Ok(Model {
            cfg,
            labels,
            encoder,
            title_encoder,
            knowledge_encoder,
            w_out,
            b_out,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    /// Named parameter handles in a stable order.
    pub fn params(&self) -> Vec<(String, Tensor)> {
        let mut out = self.encoder.params();
        if let Some(enc) = &self.title_encoder {
            out.extend(prefixed(enc, "title_encoder."));
        }
        if let Some(enc) = &self.knowledge_encoder {
            out.extend(prefixed(enc, "knowledge_encoder."));
        }
        out.push(("classifier.weight".to_string(), self.w_out.clone()));
        out.push(("classifier.bias".to_string(), self.b_out.clone()));
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.numel()).sum()
    }

    fn title_enc(&self) -> &Encoder {
        self.title_encoder.as_ref().unwrap_or(&self.encoder)
    }

    fn knowledge_enc(&self) -> &Encoder {
        self.knowledge_encoder.as_ref().unwrap_or(&self.encoder)
    }

    /// Run one instance through the model. `rng` enables dropout; pass
    /// `None` for deterministic inference.
    pub fn forward(
        &self,
        x: &EncodedInstance,
        mut rng: Option<&mut ChaCha20Rng>,
    ) -> Result<ModelOutput> {
        if x.instance_ids.len() < 3 {
            return Err(Error::validation(
                x.instance_id.clone(),
                "instance has no sentence tokens".to_string(),
            ));
        }
        let inner_len = x.inner_len();
        if x.dist1.len() != inner_len || x.dist2.len() != inner_len {
            return Err(Error::validation(
                x.instance_id.clone(),
                format!(
                    "distance lists ({}, {}) do not cover the {} sentence tokens",
                    x.dist1.len(),
                    x.dist2.len(),
                    inner_len
                ),
            ));
        }
        let d = self.cfg.encoder.hidden;

        let enc_ins = run(&self.encoder, &x.instance_ids, &mut rng)?;
        let inner = ops::narrow(&enc_ins.token_reps, 0, 1, inner_len)?;
        let inner_mask = vec![true; inner_len];
        let r_ins = enc_ins.seq_rep;

        let r_title = if self.cfg.ablation.uses(Component::Title) {
            let q_t = run(self.title_enc(), &x.title_ids, &mut rng)?.seq_rep;
            Some(fusion_attention(&q_t, &inner, &inner_mask)?)
        } else {
            None
        };
        let r_know = if self.cfg.ablation.uses(Component::Knowledge) {
            let q_k = run(self.knowledge_enc(), &x.knowledge_ids, &mut rng)?.seq_rep;
            Some(fusion_attention(&q_k, &inner, &inner_mask)?)
        } else {
            None
        };
        let (r_tar1, r_tar2) = if self.cfg.ablation.uses(Component::Gaussian) {
            let pool = |dist: &[i64]| -> Result<Tensor> {
                ops::reshape(&target_aware_pool(&inner, dist, &self.cfg.gaussian)?, &[d])
            };
            (Some(pool(&x.dist1)?), Some(pool(&x.dist2)?))
        } else {
            (None, None)
        };

        let mut slots: Vec<Tensor> = Vec::with_capacity(5);
        slots.extend(r_title.iter().cloned());
        slots.push(r_ins.clone());
        slots.extend(r_tar1.iter().cloned());
        slots.extend(r_tar2.iter().cloned());
        slots.extend(r_know.iter().cloned());
        let h = ops::concat(&slots, 1)?;

        let logits = ops::add_bias(&ops::matmul(&h, &self.w_out)?, &self.b_out)?;
        let probs = ops::softmax(&logits)?;
        Ok(ModelOutput {
            fused: FusedRepresentations {
                r_title,
                r_ins,
                r_tar1,
                r_tar2,
                r_know,
                h,
            },
            logits,
            probs,
        })
    }

    /// Cross-entropy against a gold label index, fused with the softmax.
    pub fn loss(&self, out: &ModelOutput, gold: usize) -> Result<Tensor> {
        ops::cross_entropy_with_logits(&out.logits, gold)
    }

    pub fn to_checkpoint(&self, vocab_hash: u64) -> Result<Checkpoint> {
        let config_json = serde_json::to_string(&self.cfg)
            .map_err(|e| Error::Checkpoint(format!("config serialization: {e}")))?;
        let params = self
            .params()
            .into_iter()
            .map(|(name, t)| ParamRecord {
                name,
                dims: t.shape(),
                data: t.to_vec(),
            })
            .collect();
        Ok(Checkpoint {
            config_json,
            vocab_hash,
            params,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Model> {
        let cfg: ModelConfig = serde_json::from_str(&ckpt.config_json)
            .map_err(|e| Error::Checkpoint(format!("config deserialization: {e}")))?;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let model = Model::new(cfg, &mut rng)?;
        let handles: std::collections::BTreeMap<String, Tensor> =
            model.params().into_iter().collect();
        if handles.len() != ckpt.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                ckpt.params.len(),
                handles.len()
            )));
        }
        for record in &ckpt.params {
            let Some(t) = handles.get(&record.name) else {
                return Err(Error::Checkpoint(format!(
                    "checkpoint parameter {:?} not in model",
                    record.name
                )));
            };
            if t.shape() != record.dims {
                return Err(Error::Checkpoint(format!(
                    "parameter {:?} has dims {:?}, model expects {:?}",
                    record.name,
                    record.dims,
                    t.shape()
                )));
            }
            t.set_data(record.data.clone())?;
        }
        Ok(model)
    }
}

fn run(enc: &Encoder, ids: &[usize], rng: &mut Option<&mut ChaCha20Rng>) -> Result<EncodedSequence> {
    let mask = vec![true; ids.len()];
    match rng {
        Some(r) => enc.encode_train(ids, &mask, &mut **r),
        None => enc.encode(ids, &mask),
    }
}

fn prefixed(enc: &Encoder, prefix: &str) -> Vec<(String, Tensor)> {
    enc.params()
        .into_iter()
        .map(|(name, t)| (format!("{prefix}{}", name.trim_start_matches("encoder.")), t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::{RESERVED_TAGS, SPECIALS};
    use crate::corpus::InstanceKind;

    fn tiny_config(ablation: Ablation) -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                layers: 1,
                hidden: 8,
                heads: 2,
                feed_forward: 16,
                max_len: 16,
                dropout: 0.0,
                vocab_size: 24,
            },
            gaussian: GaussianConfig::default(),
            ablation,
            share_encoder: true,
            task: Task::Cpi,
        }
    }

    fn sample_input() -> EncodedInstance {
        EncodedInstance {
            instance_id: "t.s0.C1.P1".into(),
            kind: InstanceKind::Overlapping,
            label: "CPR:4".into(),
            gold: 1,
            // [SEQ_START] @CHEMICAL$ w @GENE$ w [SEQ_END]
            instance_ids: vec![2, 4, 13, 5, 14, 3],
            dist1: vec![0, 1, 2, 3],
            dist2: vec![-2, -1, 0, 1],
            title_ids: vec![2, 15, 16, 3],
            knowledge_ids: vec![2, 7, 3],
        }
    }

    fn model(ablation: Ablation) -> Model {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        Model::new(tiny_config(ablation), &mut rng).unwrap()
    }

    #[test]
    fn probabilities_sum_to_one_with_full_width() {
        let m = model(Ablation::full());
        let out = m.forward(&sample_input(), None).unwrap();
        let p = out.probs.to_vec();
        assert_eq!(p.len(), 6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v >= 0.0));
        assert_eq!(out.fused.h.numel(), 5 * 8);
        assert!(out.fused.r_title.is_some());
        assert!(out.fused.r_tar1.is_some());
    }

    #[test]
    fn zeroed_head_gives_uniform_prediction() {
        let m = model(Ablation::full());
        m.w_out.set_data(vec![0.0; m.w_out.numel()]).unwrap();
        m.b_out.set_data(vec![0.0; 6]).unwrap();
        let out = m.forward(&sample_input(), None).unwrap();
        for p in out.probs.to_vec() {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ablations_shrink_h_and_reuse_slot_values() {
        let full = model(Ablation::full());
        let no_g = model(Ablation::parse("gaussian").unwrap());
        let x = sample_input();
        assert_eq!(no_g.forward(&x, None).unwrap().fused.h.numel(), 3 * 8);
        let bare = model(Ablation::parse("all").unwrap());
        let out = bare.forward(&x, None).unwrap();
        assert_eq!(out.fused.h.numel(), 8);
        assert!(out.fused.r_title.is_none());
        assert_eq!(out.fused.h.to_vec(), out.fused.r_ins.to_vec());
        // Same encoder weights -> the instance slot matches the full model's.
        let _ = full;
    }

    #[test]
    fn removed_slots_do_not_change_surviving_values() {
        // Build two models over identical encoder weights by checkpointing
        // the full model and loading its encoder into the ablated config.
        let full = model(Ablation::full());
        let x = sample_input();
        let full_out = full.forward(&x, None).unwrap();

        let ckpt = full.to_checkpoint(0).unwrap();
        let mut cfg: ModelConfig = serde_json::from_str(&ckpt.config_json).unwrap();
        cfg.ablation = Ablation::parse("gaussian").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        let ablated = Model::new(cfg, &mut rng).unwrap();
        let enc_params: std::collections::BTreeMap<String, Tensor> =
            ablated.params().into_iter().collect();
        for rec in &ckpt.params {
            if rec.name.starts_with("encoder.") {
                enc_params[&rec.name].set_data(rec.data.clone()).unwrap();
            }
        }
        let ab_out = ablated.forward(&x, None).unwrap();
        assert_eq!(
            ab_out.fused.r_ins.to_vec(),
            full_out.fused.r_ins.to_vec()
        );
        assert_eq!(
            ab_out.fused.r_title.unwrap().to_vec(),
            full_out.fused.r_title.unwrap().to_vec()
        );
        assert!(ab_out.fused.r_tar1.is_none());
    }

    #[test]
    fn separate_encoders_add_parameters() {
        let shared = model(Ablation::full());
        let mut cfg = tiny_config(Ablation::full());
        cfg.share_encoder = false;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let separate = Model::new(cfg, &mut rng).unwrap();
        assert!(separate.param_count() > shared.param_count());
        let names: Vec<String> = separate.params().into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().any(|n| n.starts_with("title_encoder.")));
        assert!(names.iter().any(|n| n.starts_with("knowledge_encoder.")));
        // Forward still works and differs across the two query encoders.
        let out = separate.forward(&sample_input(), None).unwrap();
        assert_eq!(out.probs.numel(), 6);
    }

    #[test]
    fn argmax_ignores_constant_logit_shifts() {
        let m = model(Ablation::full());
        let out = m.forward(&sample_input(), None).unwrap();
        let logits = out.logits.to_vec();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 100.0).collect();
        let base = Tensor::from_vec(&[6], shifted).unwrap();
        let probs2 = ops::softmax(&base).unwrap();
        let data2 = probs2.to_vec();
        let arg2 = (0..6).max_by(|&a, &b| data2[a].partial_cmp(&data2[b]).unwrap()).unwrap();
        assert_eq!(out.predicted(), arg2);
    }

    #[test]
    fn empty_instance_is_rejected() {
        let m = model(Ablation::full());
        let mut x = sample_input();
        x.instance_ids = vec![2, 3];
        x.dist1.clear();
        x.dist2.clear();
        assert!(m.forward(&x, None).is_err());
        let mut y = sample_input();
        y.dist1.pop();
        assert!(m.forward(&y, None).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_outputs() {
        let m = model(Ablation::parse("title").unwrap());
        let x = sample_input();
        let before = m.forward(&x, None).unwrap().probs.to_vec();
        let ckpt = m.to_checkpoint(77).unwrap();
        let bytes = ckpt.to_bytes().unwrap();
        let restored = Model::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        let after = restored.forward(&x, None).unwrap().probs.to_vec();
        assert_eq!(before, after);
        assert_eq!(ckpt.vocab_hash, 77);
    }

    #[test]
    fn checkpoint_with_missing_param_is_rejected() {
        let m = model(Ablation::full());
        let mut ckpt = m.to_checkpoint(0).unwrap();
        ckpt.params.pop();
        assert!(Model::from_checkpoint(&ckpt).is_err());
        let mut ckpt2 = m.to_checkpoint(0).unwrap();
        ckpt2.params[0].name = "nonsense".into();
        assert!(Model::from_checkpoint(&ckpt2).is_err());
    }

    #[test]
    fn vocab_layout_matches_test_ids() {
        // The hand-built ids in sample_input assume the reserved layout.
        assert_eq!(SPECIALS.len(), 6);
        assert_eq!(RESERVED_TAGS.len(), 7);
        assert_eq!(SPECIALS[2], "[SEQ_START]");
        assert_eq!(SPECIALS[4], "@CHEMICAL$");
        assert_eq!(RESERVED_TAGS[1], "CPR:4");
    }
}
