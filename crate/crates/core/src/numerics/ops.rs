//! Differentiable operations over [`Tensor`].
//!
//! Shapes are row-major and at most rank 2; a `[d]` vector and a `[1, d]`
//! row are interchangeable where noted. Every op validates shapes up front
//! and returns `Error::ShapeMismatch` rather than panicking.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => panic!("rank > 2 unsupported"),
    }
}

fn check_rank(op: &'static str, t: &Tensor) -> Result<()> {
    let s = t.shape();
    if s.is_empty() || s.len() > 2 {
        return Err(Error::ShapeMismatch {
            op,
            lhs: s,
            rhs: vec![],
        });
    }
    Ok(())
}

/// Elementwise sum; shapes must match exactly.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "add",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x + y)
        .collect();
    Ok(Tensor::from_op(
        a.shape(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|_, grad, parents| {
            parents[0].accumulate_grad(grad);
            parents[1].accumulate_grad(grad);
        }),
    ))
}

/// Elementwise product; shapes must match exactly.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op: "mul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(x, y)| x * y)
        .collect();
    Ok(Tensor::from_op(
        a.shape(),
        data,
        vec![a.clone(), b.clone()],
        Box::new(|_, grad, parents| {
            let a_data = parents[0].to_vec();
            let b_data = parents[1].to_vec();
            let ga: Vec<f64> = grad.iter().zip(&b_data).map(|(g, y)| g * y).collect();
            let gb: Vec<f64> = grad.iter().zip(&a_data).map(|(g, x)| g * x).collect();
            parents[0].accumulate_grad(&ga);
            parents[1].accumulate_grad(&gb);
        }),
    ))
}

/// Multiply by a compile-time constant.
pub fn scale(a: &Tensor, k: f64) -> Result<Tensor> {
    check_rank("scale", a)?;
    let data = a.data().iter().map(|x| x * k).collect();
    Ok(Tensor::from_op(
        a.shape(),
        data,
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            let g: Vec<f64> = grad.iter().map(|g| g * k).collect();
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// `a @ b` for `a: [m, k]`, `b: [k, n]`. A rank-1 `a` is treated as `[1, k]`
/// and the result keeps rank 1.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    check_rank("matmul", a)?;
    check_rank("matmul", b)?;
    let a_shape = a.shape();
    let b_shape = b.shape();
    let (m, k) = rows_cols(&a_shape);
    if b_shape.len() != 2 || b_shape[0] != k {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            lhs: a_shape,
            rhs: b_shape,
        });
    }
    let n = b_shape[1];
    let a_data = a.data();
    let b_data = b.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a_data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b_data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    drop(a_data);
    drop(b_data);
    let out_shape = if a_shape.len() == 1 {
        vec![n]
    } else {
        vec![m, n]
    };
    Ok(Tensor::from_op(
        out_shape,
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |_, grad, parents| {
            let a_data = parents[0].to_vec();
            let b_data = parents[1].to_vec();
            // dL/dA = G @ B^T
            let mut ga = vec![0.0; m * k];
            for i in 0..m {
                for j in 0..n {
                    let g = grad[i * n + j];
                    if g == 0.0 {
                        continue;
                    }
                    for p in 0..k {
                        ga[i * k + p] += g * b_data[p * n + j];
                    }
                }
            }
            // dL/dB = A^T @ G
            let mut gb = vec![0.0; k * n];
            for i in 0..m {
                for p in 0..k {
                    let av = a_data[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        gb[p * n + j] += av * grad[i * n + j];
                    }
                }
            }
            parents[0].accumulate_grad(&ga);
            parents[1].accumulate_grad(&gb);
        }),
    ))
}

/// Add a `[n]` (or `[1, n]`) bias to every row of `a: [m, n]`.
pub fn add_bias(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check_rank("add_bias", a)?;
    let a_shape = a.shape();
    let (m, n) = rows_cols(&a_shape);
    if bias.numel() != n {
        return Err(Error::ShapeMismatch {
            op: "add_bias",
            lhs: a_shape,
            rhs: bias.shape(),
        });
    }
    let bias_data = bias.to_vec();
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, x)| x + bias_data[i % n])
        .collect();
    Ok(Tensor::from_op(
        a_shape,
        data,
        vec![a.clone(), bias.clone()],
        Box::new(move |_, grad, parents| {
            parents[0].accumulate_grad(grad);
            let mut gb = vec![0.0; n];
            for i in 0..m {
                for j in 0..n {
                    gb[j] += grad[i * n + j];
                }
            }
            parents[1].accumulate_grad(&gb);
        }),
    ))
}

/// Transpose a `[m, n]` matrix.
pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let shape = a.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "transpose",
            lhs: shape,
            rhs: vec![],
        });
    }
    let (m, n) = (shape[0], shape[1]);
    let a_data = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a_data[i * n + j];
        }
    }
    drop(a_data);
    Ok(Tensor::from_op(
        vec![n, m],
        out,
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            let mut g = vec![0.0; m * n];
            for i in 0..m {
                for j in 0..n {
                    g[i * n + j] = grad[j * m + i];
                }
            }
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Reinterpret the same elements under a new shape (rank ≤ 2).
pub fn reshape(a: &Tensor, shape: &[usize]) -> Result<Tensor> {
    check_rank("reshape", a)?;
    if shape.is_empty() || shape.len() > 2 {
        return Err(Error::InvalidArgument(format!(
            "reshape target rank {} unsupported",
            shape.len()
        )));
    }
    if shape.iter().product::<usize>() != a.numel() {
        return Err(Error::ShapeMismatch {
            op: "reshape",
            lhs: a.shape(),
            rhs: shape.to_vec(),
        });
    }
    Ok(Tensor::from_op(
        shape.to_vec(),
        a.to_vec(),
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            parents[0].accumulate_grad(grad);
        }),
    ))
}

/// Rows `[start, start + len)` of a `[m, n]` matrix, or elements of a
/// vector. The inverse of `concat` along axis 0.
pub fn narrow(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    check_rank("narrow", a)?;
    let shape = a.shape();
    let (m, n) = rows_cols(&shape);
    let (size, stride, other) = match axis {
        0 => (m, n, n),
        1 => (n, 1, m),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "narrow axis {axis} out of range"
            )))
        }
    };
    if start + len > size {
        return Err(Error::InvalidArgument(format!(
            "narrow [{start}, {}) exceeds axis size {size}",
            start + len
        )));
    }
    let a_data = a.data();
    let mut out = Vec::with_capacity(len * other);
    match axis {
        0 => out.extend_from_slice(&a_data[start * n..(start + len) * n]),
        _ => {
            for i in 0..m {
                out.extend_from_slice(&a_data[i * n + start..i * n + start + len]);
            }
        }
    }
    drop(a_data);
    let _ = stride;
    let out_shape = match (shape.len(), axis) {
        (1, _) => vec![len],
        (_, 0) => vec![len, n],
        _ => vec![m, len],
    };
    let total = m * n;
    Ok(Tensor::from_op(
        out_shape,
        out,
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            let mut g = vec![0.0; total];
            match axis {
                0 => g[start * n..(start + len) * n].copy_from_slice(grad),
                _ => {
                    for i in 0..m {
                        g[i * n + start..i * n + start + len]
                            .copy_from_slice(&grad[i * len..(i + 1) * len]);
                    }
                }
            }
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Concatenate along `axis`. Axis 0 stacks rows, axis 1 widens rows.
pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(Error::InvalidArgument("concat of zero tensors".into()));
    }
    if axis > 1 {
        return Err(Error::InvalidArgument(format!(
            "concat axis {axis} out of range"
        )));
    }
    for p in parts {
        check_rank("concat", p)?;
    }
    let dims: Vec<(usize, usize)> = parts.iter().map(|p| rows_cols(&p.shape())).collect();
    let rank1 = parts.iter().all(|p| p.shape().len() == 1);
    match axis {
        0 => {
            let n = dims[0].1;
            if dims.iter().any(|&(_, c)| c != n) {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: parts[0].shape(),
                    rhs: parts.iter().find(|p| rows_cols(&p.shape()).1 != n).unwrap().shape(),
                });
            }
            let m: usize = dims.iter().map(|&(r, _)| r).sum();
            let mut data = Vec::with_capacity(m * n);
            for p in parts {
                data.extend_from_slice(&p.data());
            }
            let row_counts: Vec<usize> = dims.iter().map(|&(r, _)| r).collect();
            Ok(Tensor::from_op(
                vec![m, n],
                data,
                parts.to_vec(),
                Box::new(move |_, grad, parents| {
                    let mut offset = 0;
                    for (p, &rows) in parents.iter().zip(&row_counts) {
                        let chunk = rows * n;
                        p.accumulate_grad(&grad[offset..offset + chunk]);
                        offset += chunk;
                    }
                }),
            ))
        }
        _ => {
            let m = dims[0].0;
            if dims.iter().any(|&(r, _)| r != m) {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: parts[0].shape(),
                    rhs: parts.iter().find(|p| rows_cols(&p.shape()).0 != m).unwrap().shape(),
                });
            }
            let n: usize = dims.iter().map(|&(_, c)| c).sum();
            let mut data = vec![0.0; m * n];
            let mut offset = 0;
            for (p, &(_, cols)) in parts.iter().zip(&dims) {
                let pdata = p.data();
                for i in 0..m {
                    data[i * n + offset..i * n + offset + cols]
                        .copy_from_slice(&pdata[i * cols..(i + 1) * cols]);
                }
                offset += cols;
            }
            let col_counts: Vec<usize> = dims.iter().map(|&(_, c)| c).collect();
            let out_shape = if rank1 { vec![n] } else { vec![m, n] };
            Ok(Tensor::from_op(
                out_shape,
                data,
                parts.to_vec(),
                Box::new(move |_, grad, parents| {
                    let mut offset = 0;
                    for (p, &cols) in parents.iter().zip(&col_counts) {
                        let mut g = vec![0.0; m * cols];
                        for i in 0..m {
                            g[i * cols..(i + 1) * cols]
                                .copy_from_slice(&grad[i * n + offset..i * n + offset + cols]);
                        }
                        p.accumulate_grad(&g);
                        offset += cols;
                    }
                }),
            ))
        }
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        let e = (x - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn softmax_row_backward(y: &[f64], grad: &[f64], out: &mut [f64]) {
    // dL/dx_i = y_i * (g_i - sum_j g_j y_j)
    let dot: f64 = y.iter().zip(grad).map(|(y, g)| y * g).sum();
    for ((o, &yi), &gi) in out.iter_mut().zip(y).zip(grad) {
        *o = yi * (gi - dot);
    }
}

/// Row-wise softmax (numerically stabilised by max subtraction).
pub fn softmax(a: &Tensor) -> Result<Tensor> {
    check_rank("softmax", a)?;
    let shape = a.shape();
    let (m, n) = rows_cols(&shape);
    if n == 0 {
        return Err(Error::InvalidArgument("softmax over zero columns".into()));
    }
    let a_data = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        softmax_row(&a_data[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
    }
    drop(a_data);
    Ok(Tensor::from_op(
        shape,
        out,
        vec![a.clone()],
        Box::new(move |data, grad, parents| {
            let mut g = vec![0.0; m * n];
            for i in 0..m {
                softmax_row_backward(
                    &data[i * n..(i + 1) * n],
                    &grad[i * n..(i + 1) * n],
                    &mut g[i * n..(i + 1) * n],
                );
            }
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Row-wise softmax restricted to positions where `mask` is true. Masked
/// positions get probability exactly 0.0 and no gradient. Each row must
/// keep at least one live position.
pub fn masked_softmax_rows(a: &Tensor, mask: &[bool]) -> Result<Tensor> {
    check_rank("masked_softmax_rows", a)?;
    let shape = a.shape();
    let (m, n) = rows_cols(&shape);
    if mask.len() != n {
        return Err(Error::InvalidArgument(format!(
            "mask length {} does not match row width {n}",
            mask.len()
        )));
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::InvalidArgument(
            "masked softmax with all positions masked".into(),
        ));
    }
    let mask = mask.to_vec();
    let a_data = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &a_data[i * n..(i + 1) * n];
        let max = row
            .iter()
            .zip(&mask)
            .filter(|(_, &keep)| keep)
            .map(|(&x, _)| x)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for j in 0..n {
            if mask[j] {
                let e = (row[j] - max).exp();
                out[i * n + j] = e;
                sum += e;
            }
        }
        for j in 0..n {
            out[i * n + j] /= sum;
        }
    }
    drop(a_data);
    Ok(Tensor::from_op(
        shape,
        out,
        vec![a.clone()],
        Box::new(move |data, grad, parents| {
            let mut g = vec![0.0; m * n];
            for i in 0..m {
                let y = &data[i * n..(i + 1) * n];
                let gr = &grad[i * n..(i + 1) * n];
                let dot: f64 = (0..n).filter(|&j| mask[j]).map(|j| y[j] * gr[j]).sum();
                for j in 0..n {
                    if mask[j] {
                        g[i * n + j] = y[j] * (gr[j] - dot);
                    }
                }
            }
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Per-row layer normalisation with learned gain and shift:
/// `y = gain * (x - mean) / sqrt(var + eps) + shift`.
pub fn layer_norm(a: &Tensor, gain: &Tensor, shift: &Tensor, eps: f64) -> Result<Tensor> {
    check_rank("layer_norm", a)?;
    let shape = a.shape();
    let (m, n) = rows_cols(&shape);
    if gain.numel() != n || shift.numel() != n {
        return Err(Error::ShapeMismatch {
            op: "layer_norm",
            lhs: shape,
            rhs: gain.shape(),
        });
    }
    let a_data = a.data();
    let g_data = gain.to_vec();
    let s_data = shift.to_vec();
    let mut out = vec![0.0; m * n];
    // Cache per-row statistics for the backward pass.
    let mut means = vec![0.0; m];
    let mut inv_stds = vec![0.0; m];
    for i in 0..m {
        let row = &a_data[i * n..(i + 1) * n];
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / (var + eps).sqrt();
        means[i] = mean;
        inv_stds[i] = inv_std;
        for j in 0..n {
            out[i * n + j] = g_data[j] * (row[j] - mean) * inv_std + s_data[j];
        }
    }
    drop(a_data);
    Ok(Tensor::from_op(
        shape,
        out,
        vec![a.clone(), gain.clone(), shift.clone()],
        Box::new(move |_, grad, parents| {
            let a_data = parents[0].to_vec();
            let g_data = parents[1].to_vec();
            let mut ga = vec![0.0; m * n];
            let mut ggain = vec![0.0; n];
            let mut gshift = vec![0.0; n];
            for i in 0..m {
                let row = &a_data[i * n..(i + 1) * n];
                let gr = &grad[i * n..(i + 1) * n];
                let mean = means[i];
                let inv_std = inv_stds[i];
                let xhat: Vec<f64> = row.iter().map(|x| (x - mean) * inv_std).collect();
                // dL/dxhat_j = g_j * gain_j
                let dxhat: Vec<f64> = gr.iter().zip(&g_data).map(|(g, w)| g * w).collect();
                let sum_dxhat: f64 = dxhat.iter().sum();
                let sum_dxhat_xhat: f64 = dxhat.iter().zip(&xhat).map(|(d, x)| d * x).sum();
                for j in 0..n {
                    ga[i * n + j] = inv_std / n as f64
                        * (n as f64 * dxhat[j] - sum_dxhat - xhat[j] * sum_dxhat_xhat);
                    ggain[j] += gr[j] * xhat[j];
                    gshift[j] += gr[j];
                }
            }
            parents[0].accumulate_grad(&ga);
            parents[1].accumulate_grad(&ggain);
            parents[2].accumulate_grad(&gshift);
        }),
    ))
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)

/// Tanh-approximated GELU. Smooth everywhere, so its analytic derivative
/// matches central differences to full precision.
pub fn gelu(a: &Tensor) -> Result<Tensor> {
    check_rank("gelu", a)?;
    let data = a
        .data()
        .iter()
        .map(|&x| {
            let inner = GELU_C * (x + 0.044715 * x * x * x);
            0.5 * x * (1.0 + inner.tanh())
        })
        .collect();
    Ok(Tensor::from_op(
        a.shape(),
        data,
        vec![a.clone()],
        Box::new(|_, grad, parents| {
            let x_data = parents[0].to_vec();
            let g: Vec<f64> = x_data
                .iter()
                .zip(grad)
                .map(|(&x, &g)| {
                    let u = GELU_C * (x + 0.044715 * x * x * x);
                    let t = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
                    g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                })
                .collect();
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Row lookup into an embedding table `[vocab, d]`. Gradients scatter back
/// into the looked-up rows.
pub fn embedding(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    let shape = table.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "embedding",
            lhs: shape,
            rhs: vec![],
        });
    }
    let (vocab, d) = (shape[0], shape[1]);
    if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
        return Err(Error::InvalidArgument(format!(
            "embedding id {bad} out of range for table with {vocab} rows"
        )));
    }
    let t_data = table.data();
    let mut out = Vec::with_capacity(ids.len() * d);
    for &i in ids {
        out.extend_from_slice(&t_data[i * d..(i + 1) * d]);
    }
    drop(t_data);
    let ids = ids.to_vec();
    Ok(Tensor::from_op(
        vec![ids.len(), d],
        out,
        vec![table.clone()],
        Box::new(move |_, grad, parents| {
            let mut g = vec![0.0; vocab * d];
            for (row, &i) in ids.iter().enumerate() {
                for j in 0..d {
                    g[i * d + j] += grad[row * d + j];
                }
            }
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Mean of all elements (scalar output).
pub fn mean(a: &Tensor) -> Result<Tensor> {
    check_rank("mean", a)?;
    let n = a.numel();
    if n == 0 {
        return Err(Error::InvalidArgument("mean of empty tensor".into()));
    }
    let v = a.data().iter().sum::<f64>() / n as f64;
    Ok(Tensor::from_op(
        vec![1],
        vec![v],
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            let g = vec![grad[0] / n as f64; n];
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Sum of all elements (scalar output).
pub fn sum(a: &Tensor) -> Result<Tensor> {
    check_rank("sum", a)?;
    let n = a.numel();
    let v = a.data().iter().sum::<f64>();
    Ok(Tensor::from_op(
        vec![1],
        vec![v],
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            let g = vec![grad[0]; n];
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Negative log likelihood of `gold` under a probability row that already
/// sums to one: `-ln(p[gold])`.
pub fn cross_entropy(probs: &Tensor, gold: usize) -> Result<Tensor> {
    check_rank("cross_entropy", probs)?;
    let n = probs.numel();
    let shape = probs.shape();
    if rows_cols(&shape).0 != 1 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            lhs: shape,
            rhs: vec![1, n],
        });
    }
    if gold >= n {
        return Err(Error::InvalidArgument(format!(
            "gold index {gold} out of range for {n} classes"
        )));
    }
    let p = probs.data()[gold];
    if p <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "non-positive probability {p} at gold index"
        )));
    }
    Ok(Tensor::from_op(
        vec![1],
        vec![-p.ln()],
        vec![probs.clone()],
        Box::new(move |_, grad, parents| {
            let p = parents[0].to_vec()[gold];
            let mut g = vec![0.0; n];
            g[gold] = -grad[0] / p;
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Fused log-softmax + NLL over a logit row. Numerically safe for large
/// logits where separate softmax then `cross_entropy` would round to zero.
pub fn cross_entropy_with_logits(logits: &Tensor, gold: usize) -> Result<Tensor> {
    check_rank("cross_entropy_with_logits", logits)?;
    let n = logits.numel();
    let shape = logits.shape();
    if rows_cols(&shape).0 != 1 {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy_with_logits",
            lhs: shape,
            rhs: vec![1, n],
        });
    }
    if gold >= n {
        return Err(Error::InvalidArgument(format!(
            "gold index {gold} out of range for {n} classes"
        )));
    }
    let x = logits.to_vec();
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = x.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    let loss = log_sum - x[gold];
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![logits.clone()],
        Box::new(move |_, grad, parents| {
            let x = parents[0].to_vec();
            let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = x.iter().map(|v| (v - max).exp()).sum();
            let mut g: Vec<f64> = x.iter().map(|v| grad[0] * (v - max).exp() / sum).collect();
            g[gold] -= grad[0];
            parents[0].accumulate_grad(&g);
        }),
    ))
}

/// Inverted dropout: keeps each element with probability `1 - rate` and
/// rescales by `1 / (1 - rate)`. The keep mask is sampled by the caller's
/// RNG so runs stay reproducible. `rate == 0` is the identity.
pub fn dropout<R: rand::Rng>(a: &Tensor, rate: f64, rng: &mut R) -> Result<Tensor> {
    check_rank("dropout", a)?;
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!(
            "dropout rate {rate} outside [0, 1)"
        )));
    }
    if rate == 0.0 {
        return Ok(a.clone());
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..a.numel())
        .map(|_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        })
        .collect();
    let data = a.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok(Tensor::from_op(
        a.shape(),
        data,
        vec![a.clone()],
        Box::new(move |_, grad, parents| {
            let g: Vec<f64> = grad.iter().zip(&mask).map(|(g, m)| g * m).collect();
            parents[0].accumulate_grad(&g);
        }),
    ))
}
