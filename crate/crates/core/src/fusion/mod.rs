//! Fusing the instance encoding with title, target-position, and knowledge
//! signals: sequence-query attention, the concatenated representation, the
//! classifier, and the training loop.

pub mod model;
pub mod train;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ops, Tensor};

pub use model::{Model, ModelConfig, ModelOutput};
pub use train::{evaluate_micro, train, EpochRecord, TrainOutcome};

/// A removable part of the architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Gaussian,
    Title,
    Knowledge,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Gaussian, Component::Title, Component::Knowledge];

    fn name(self) -> &'static str {
        match self {
            Component::Gaussian => "gaussian",
            Component::Title => "title",
            Component::Knowledge => "knowledge",
        }
    }
}

/// The set of components removed from the model. Empty = full model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Ablation(BTreeSet<Component>);

impl Ablation {
    pub fn full() -> Self {
        Ablation::default()
    }

    pub fn removing(parts: &[Component]) -> Self {
        Ablation(parts.iter().copied().collect())
    }

    /// Parse a removal list: comma/ampersand-separated component names,
    /// or `all`; an empty string removes nothing.
    pub fn parse(s: &str) -> Result<Self> {
        let mut set = BTreeSet::new();
        for part in s.split([',', '&', ' ']).map(str::trim).filter(|p| !p.is_empty()) {
            match part.to_ascii_lowercase().as_str() {
                "gaussian" => set.insert(Component::Gaussian),
                "title" => set.insert(Component::Title),
                "knowledge" => set.insert(Component::Knowledge),
                "all" => {
                    set.extend(Component::ALL);
                    true
                }
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown component {other:?}, expected gaussian, title, knowledge, or all"
                    )))
                }
            };
        }
        Ok(Ablation(set))
    }

    pub fn uses(&self, c: Component) -> bool {
        !self.0.contains(&c)
    }

    pub fn removed(&self) -> impl Iterator<Item = Component> + '_ {
        self.0.iter().copied()
    }

    /// Width of the concatenated representation in units of the hidden
    /// size: one slot per surviving signal, two for the target pair.
    pub fn slot_multiplier(&self) -> usize {
        1 + usize::from(self.uses(Component::Title))
            + 2 * usize::from(self.uses(Component::Gaussian))
            + usize::from(self.uses(Component::Knowledge))
    }

    pub fn label(&self) -> String {
        if self.0.is_empty() {
            return "full".to_string();
        }
        let parts: Vec<&str> = self.0.iter().map(|c| c.name()).collect();
        format!("-{}", parts.join("&"))
    }
}

/// The model's fused view of one instance. Slots removed by ablation are
/// `None`; `h` concatenates the surviving slots in the fixed order title,
/// instance, target 1, target 2, knowledge.
pub struct FusedRepresentations {
    pub r_title: Option<Tensor>,
    pub r_ins: Tensor,
    pub r_tar1: Option<Tensor>,
    pub r_tar2: Option<Tensor>,
    pub r_know: Option<Tensor>,
    pub h: Tensor,
}

/// Attention of a whole-sequence query over token representations:
/// scores are plain dot products (no scaling), weights a softmax over
/// unmasked positions, output the weighted sum of the rows.
pub fn fusion_attention(query_rep: &Tensor, token_reps: &Tensor, mask: &[bool]) -> Result<Tensor> {
    Ok(fusion_attention_with_weights(query_rep, token_reps, mask)?.0)
}

/// As [`fusion_attention`], also returning the `[1, N]` weight row.
pub fn fusion_attention_with_weights(
    query_rep: &Tensor,
    token_reps: &Tensor,
    mask: &[bool],
) -> Result<(Tensor, Tensor)> {
    let shape = token_reps.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "fusion_attention",
            lhs: shape,
            rhs: query_rep.shape(),
        });
    }
    let (_, d) = (shape[0], shape[1]);
    if query_rep.numel() != d {
        return Err(Error::ShapeMismatch {
            op: "fusion_attention",
            lhs: shape,
            rhs: query_rep.shape(),
        });
    }
    let q_col = ops::reshape(query_rep, &[d, 1])?;
    let scores = ops::transpose(&ops::matmul(token_reps, &q_col)?)?;
    let alpha = ops::masked_softmax_rows(&scores, mask)?;
    let pooled = ops::reshape(&ops::matmul(&alpha, token_reps)?, &[d])?;
    Ok((pooled, alpha))
}

/// Gradient audit of the complete forward pass plus loss on a 3-token
/// instance: every parameter of a freshly initialised model is compared
/// against central differences, sampling large tensors at an even stride.
pub fn model_grad_check(seed: u64) -> Result<crate::numerics::GradCheckReport> {
    use crate::corpus::InstanceKind;
    use crate::dataset::EncodedInstance;
    use crate::encoder::EncoderConfig;
    use crate::numerics::{grad_check, GradCheckOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    let cfg = ModelConfig {
        encoder: EncoderConfig {
            layers: 2,
            hidden: 32,
            heads: 4,
            feed_forward: 64,
            max_len: 8,
            dropout: 0.0,
            vocab_size: 14,
        },
        ..ModelConfig::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let model = Model::new(cfg, &mut rng)?;
    let x = EncodedInstance {
        instance_id: "audit.s0.T1.T2".into(),
        kind: InstanceKind::Overlapping,
        label: "CPR:4".into(),
        gold: 1,
        instance_ids: vec![2, 4, 13, 5, 3],
        dist1: vec![0, 1, 2],
        dist2: vec![-2, -1, 0],
        title_ids: vec![2, 13, 3],
        knowledge_ids: vec![2, 7, 3],
    };
    let params = model.params();
    // A smaller step than the per-op default: the composed model has enough
    // curvature that h = 1e-4 leaves visible truncation error on embedding
    // rows shared between the instance and the title.
    let opts = GradCheckOptions {
        h: 1e-5,
        max_entries_per_param: 256,
    };
    grad_check(
        &params,
        || {
            let out = model.forward(&x, None)?;
            model.loss(&out, x.gold)
        },
        &opts,
    )
}
