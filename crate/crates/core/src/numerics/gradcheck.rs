//! Central-difference gradient verification.
//!
//! Compares analytic gradients from the reverse pass against
//! `(f(θ+h) - f(θ-h)) / 2h` one parameter entry at a time. The loss closure
//! must be deterministic: rebuild the graph from the same tensors on every
//! call and keep any RNG-driven pieces (dropout) disabled.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Perturbation size. Values much below 1e-6 drown in rounding noise,
    /// much above 1e-3 in truncation error.
    pub h: f64,
    /// Cap on entries checked per parameter; larger tensors are sampled at
    /// an even stride so the check stays deterministic.
    pub max_entries_per_param: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-4,
            max_entries_per_param: usize::MAX,
        }
    }
}

impl GradCheckOptions {
    fn validate(&self) -> Result<()> {
        if !(1e-6..=1e-3).contains(&self.h) {
            return Err(Error::InvalidArgument(format!(
                "grad check step {} outside [1e-6, 1e-3]",
                self.h
            )));
        }
        if self.max_entries_per_param == 0 {
            return Err(Error::InvalidArgument(
                "max_entries_per_param must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// Relative error with an absolute floor, so near-zero gradients compare
/// on an absolute scale instead of blowing up the ratio. The floor matters
/// for structurally cancelled parameters (an attention key bias shifts every
/// score in a row equally, so the softmax erases it): both sides are then
/// rounding dust around 1e-12 and any tighter floor amplifies that dust
/// into a spurious failure.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Verify analytic gradients of `loss_fn` with respect to `params`.
///
/// `loss_fn` must return a scalar tensor computed from the *current* data
/// of the given parameter tensors.
pub fn grad_check<F>(
    params: &[(String, Tensor)],
    mut loss_fn: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut() -> Result<Tensor>,
{
    opts.validate()?;
    for (name, p) in params {
        if !p.requires_grad() {
            return Err(Error::InvalidArgument(format!(
                "parameter {name} does not require gradients"
            )));
        }
    }

    for (_, p) in params {
        p.zero_grad();
    }
    let loss = loss_fn()?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|(_, p)| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for ((name, p), grads) in params.iter().zip(&analytic) {
        let n = p.numel();
        let step = if n <= opts.max_entries_per_param {
            1
        } else {
            n.div_ceil(opts.max_entries_per_param)
        };
        let base = p.to_vec();
        let mut idx = 0;
        while idx < n {
            let mut plus = base.clone();
            plus[idx] += opts.h;
            p.set_data(plus)?;
            let f_plus = loss_fn()?.item()?;

            let mut minus = base.clone();
            minus[idx] -= opts.h;
            p.set_data(minus)?;
            let f_minus = loss_fn()?.item()?;

            let numeric = (f_plus - f_minus) / (2.0 * opts.h);
            let rel = relative_error(grads[idx], numeric);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((name.clone(), idx));
            }
            report.entries_checked += 1;
            idx += step;
        }
        p.set_data(base)?;
    }
    Ok(report)
}

/// Gradient audit of every differentiable op against central differences,
/// one small fixed case each. Returns (op name, report) pairs.
pub fn op_grad_suite() -> Result<Vec<(&'static str, GradCheckReport)>> {
    use crate::numerics::ops;

    let opts = GradCheckOptions::default();
    let mut out = Vec::new();
    // Weights with distinct nonzero entries turn an op's output into a
    // scalar while keeping every output element in play.
    let weigh = |t: &Tensor| -> Result<Tensor> {
        let w: Vec<f64> = (0..t.numel()).map(|i| 0.31 + 0.17 * i as f64).collect();
        ops::sum(&ops::mul(t, &Tensor::from_vec(&t.shape(), w)?)?)
    };
    let values = |n: usize, offset: f64| -> Vec<f64> {
        (0..n).map(|i| offset + 0.23 * i as f64 - 0.4).collect()
    };

    let a = Tensor::param(&[2, 3], values(6, 0.1))?;
    let b = Tensor::param(&[2, 3], values(6, -0.2))?;
    let m = Tensor::param(&[3, 2], values(6, 0.3))?;
    let bias = Tensor::param(&[3], values(3, 0.5))?;
    let wide = Tensor::param(&[2, 4], values(8, 0.2))?;
    let gain = Tensor::param(&[4], vec![1.1, 0.9, 1.3, 0.7])?;
    let shift = Tensor::param(&[4], vec![0.1, -0.2, 0.05, 0.3])?;
    let table = Tensor::param(&[5, 3], values(15, 0.05))?;
    let logits = Tensor::param(&[1, 4], vec![0.2, -0.7, 1.1, 0.4])?;

    type Case<'c> = (
        &'static str,
        Vec<(String, Tensor)>,
        Box<dyn FnMut() -> Result<Tensor> + 'c>,
    );
    let named = |ts: &[(&str, &Tensor)]| -> Vec<(String, Tensor)> {
        ts.iter().map(|(n, t)| (n.to_string(), (*t).clone())).collect()
    };
    let cases: Vec<Case> = vec![
        (
            "add",
            named(&[("a", &a), ("b", &b)]),
            Box::new(|| weigh(&ops::add(&a, &b)?)),
        ),
        (
            "mul",
            named(&[("a", &a), ("b", &b)]),
            Box::new(|| weigh(&ops::mul(&a, &b)?)),
        ),
        (
            "scale",
            named(&[("a", &a)]),
            Box::new(|| weigh(&ops::scale(&a, 1.7)?)),
        ),
        (
            "matmul",
            named(&[("a", &a), ("m", &m)]),
            Box::new(|| weigh(&ops::matmul(&a, &m)?)),
        ),
        (
            "add_bias",
            named(&[("a", &a), ("bias", &bias)]),
            Box::new(|| weigh(&ops::add_bias(&a, &bias)?)),
        ),
        (
            "transpose",
            named(&[("a", &a)]),
            Box::new(|| weigh(&ops::transpose(&a)?)),
        ),
        (
            "reshape",
            named(&[("a", &a)]),
            Box::new(|| weigh(&ops::reshape(&a, &[3, 2])?)),
        ),
        (
            "narrow",
            named(&[("wide", &wide)]),
            Box::new(|| weigh(&ops::narrow(&wide, 1, 1, 2)?)),
        ),
        (
            "concat",
            named(&[("a", &a), ("b", &b)]),
            Box::new(|| weigh(&ops::concat(&[a.clone(), b.clone()], 0)?)),
        ),
        (
            "softmax",
            named(&[("a", &a)]),
            Box::new(|| weigh(&ops::softmax(&a)?)),
        ),
        (
            "masked_softmax_rows",
            named(&[("wide", &wide)]),
            Box::new(|| weigh(&ops::masked_softmax_rows(&wide, &[true, true, false, true])?)),
        ),
        (
            "layer_norm",
            named(&[("wide", &wide), ("gain", &gain), ("shift", &shift)]),
            Box::new(|| weigh(&ops::layer_norm(&wide, &gain, &shift, 1e-8)?)),
        ),
        (
            "gelu",
            named(&[("a", &a)]),
            Box::new(|| weigh(&ops::gelu(&a)?)),
        ),
        (
            "embedding",
            named(&[("table", &table)]),
            Box::new(|| weigh(&ops::embedding(&table, &[2, 0, 4, 2])?)),
        ),
        ("mean", named(&[("a", &a)]), Box::new(|| ops::mean(&a))),
        ("sum", named(&[("a", &a)]), Box::new(|| ops::sum(&a))),
        (
            "cross_entropy",
            named(&[("logits", &logits)]),
            Box::new(|| ops::cross_entropy(&ops::softmax(&logits)?, 2)),
        ),
        (
            "cross_entropy_with_logits",
            named(&[("logits", &logits)]),
            Box::new(|| ops::cross_entropy_with_logits(&logits, 1)),
        ),
    ];

    for (name, params, mut loss_fn) in cases {
        let report = grad_check(&params, &mut loss_fn, &opts)?;
        out.push((name, report));
    }
    Ok(out)
}
