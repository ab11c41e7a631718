//! Forward evaluation and vector-Jacobian products for every recorded operation.

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    /// `[m, k] x [k, n] -> [m, n]`
    Matmul,
    /// Sum of all elements, returns a scalar.
    Sum,
    Mean,
    /// `[.., n] + [n]`, the vector repeated over every leading index.
    BroadcastAdd,
    /// `[.., n] * [n]`
    BroadcastMul,
    Clamp {
        lo: f64,
        hi: f64,
    },
    Abs,
    /// Maximum over all elements, returns a scalar.
    MaxReduce,
    /// Multiply by a constant.
    Scale(f64),
    /// Gather flat element indices into a vector.
    Select(Vec<usize>),
    /// Log-softmax along the last dimension.
    LogSoftmax,
}

impl OpKind {
    pub fn arity(&self) -> usize {
        match self {
            OpKind::Add
            | OpKind::Sub
            | OpKind::Mul
            | OpKind::Matmul
            | OpKind::BroadcastAdd
            | OpKind::BroadcastMul => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Neg => "neg",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Matmul => "matmul",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::BroadcastAdd => "broadcast_add",
            OpKind::BroadcastMul => "broadcast_mul",
            OpKind::Clamp { .. } => "clamp",
            OpKind::Abs => "abs",
            OpKind::MaxReduce => "max_reduce",
            OpKind::Scale(_) => "scale",
            OpKind::Select(_) => "select",
            OpKind::LogSoftmax => "log_softmax",
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_shape(kind: &OpKind, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::contract(format!(
            "{}: shape mismatch {:?} vs {:?}",
            kind.name(),
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn broadcast_width(kind: &OpKind, a: &Tensor, b: &Tensor) -> Result<usize> {
    let last = *a.shape().last().unwrap_or(&1);
    if b.shape().len() != 1 || b.shape()[0] != last || a.shape().is_empty() {
        return Err(Error::contract(format!(
            "{}: cannot broadcast {:?} against {:?}",
            kind.name(),
            b.shape(),
            a.shape()
        )));
    }
    Ok(last)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    match (a.shape(), b.shape()) {
        ([m, k], [k2, n]) if k == k2 => Ok((*m, *k, *n)),
        (sa, sb) => Err(Error::contract(format!(
            "matmul: incompatible shapes {sa:?} x {sb:?}"
        ))),
    }
}

/// `out[m,n] += a[m,k] * b[k,n]`
pub(crate) fn gemm(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m,k] = g[m,n] * b[k,n]^T`
fn gemm_nt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `out[k,n] = a[m,k]^T * g[m,n]`
fn gemm_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

/// Evaluate one operation on concrete values.
pub fn forward(kind: &OpKind, inputs: &[&Tensor]) -> Result<Tensor> {
    if inputs.len() != kind.arity() {
        return Err(Error::contract(format!(
            "{} takes {} inputs, got {}",
            kind.name(),
            kind.arity(),
            inputs.len()
        )));
    }
    let a = inputs[0];
    let out = match kind {
        OpKind::Add => {
            same_shape(kind, a, inputs[1])?;
            zip(a, inputs[1], |x, y| x + y)
        }
        OpKind::Sub => {
            same_shape(kind, a, inputs[1])?;
            zip(a, inputs[1], |x, y| x - y)
        }
        OpKind::Mul => {
            same_shape(kind, a, inputs[1])?;
            zip(a, inputs[1], |x, y| x * y)
        }
        OpKind::Neg => map(a, |x| -x),
        OpKind::Exp => map(a, f64::exp),
        OpKind::Log => {
            if let Some(bad) = a.data().iter().find(|&&x| !(x > 0.0)) {
                return Err(Error::Domain(format!("log of non-positive value {bad}")));
            }
            map(a, f64::ln)
        }
        OpKind::Tanh => map(a, f64::tanh),
        OpKind::Sigmoid => map(a, sigmoid),
        OpKind::Matmul => {
            let b = inputs[1];
            let (m, k, n) = matmul_dims(a, b)?;
            let mut out = vec![0.0; m * n];
            gemm(a.data(), b.data(), &mut out, m, k, n);
            Tensor::from_parts(vec![m, n], out)
        }
        OpKind::Sum => Tensor::scalar(a.data().iter().sum()),
        OpKind::Mean => Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64),
        OpKind::BroadcastAdd | OpKind::BroadcastMul => {
            let b = inputs[1];
            let n = broadcast_width(kind, a, b)?;
            let add = matches!(kind, OpKind::BroadcastAdd);
            let data = a
                .data()
                .chunks(n)
                .flat_map(|row| {
                    row.iter()
                        .zip(b.data())
                        .map(move |(&x, &y)| if add { x + y } else { x * y })
                })
                .collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        }
        OpKind::Clamp { lo, hi } => {
            if !(lo <= hi) {
                return Err(Error::contract(format!("clamp: lo {lo} > hi {hi}")));
            }
            map(a, |x| x.clamp(*lo, *hi))
        }
        OpKind::Abs => map(a, f64::abs),
        OpKind::MaxReduce => Tensor::scalar(a.data()[argmax(a.data())]),
        OpKind::Scale(c) => map(a, |x| x * c),
        OpKind::Select(indices) => {
            if indices.is_empty() {
                return Err(Error::contract("select: empty index list"));
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= a.len()) {
                return Err(Error::contract(format!(
                    "select: index {bad} out of range for {} elements",
                    a.len()
                )));
            }
            Tensor::vector(indices.iter().map(|&i| a.data()[i]).collect())
        }
        OpKind::LogSoftmax => {
            if a.shape().is_empty() {
                return Err(Error::contract("log_softmax needs at least one axis"));
            }
            let n = *a.shape().last().unwrap();
            let mut data = Vec::with_capacity(a.len());
            for row in a.data().chunks(n) {
                let lse = log_sum_exp(row);
                data.extend(row.iter().map(|&x| x - lse));
            }
            Tensor::from_parts(a.shape().to_vec(), data)
        }
    };
    Ok(out)
}

/// Index of the first maximal element.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Vector-Jacobian product: given `dL/d(output)`, returns `dL/d(input_i)` for each
/// input whose slot in `wanted` is true.
pub(crate) fn vjp(
    kind: &OpKind,
    inputs: &[&Tensor],
    output: &Tensor,
    grad: &Tensor,
    wanted: &[bool],
) -> Vec<Option<Tensor>> {
    let a = inputs[0];
    let g = grad.data();
    let want = |i: usize| wanted.get(i).copied().unwrap_or(false);
    let unary = |t: Tensor| vec![Some(t)];
    match kind {
        OpKind::Add => vec![
            want(0).then(|| grad.clone()),
            want(1).then(|| grad.clone()),
        ],
        OpKind::Sub => vec![want(0).then(|| grad.clone()), want(1).then(|| map(grad, |x| -x))],
        OpKind::Mul => {
            let b = inputs[1];
            vec![
                want(0).then(|| zip(grad, b, |g, y| g * y)),
                want(1).then(|| zip(grad, a, |g, x| g * x)),
            ]
        }
        OpKind::Neg => unary(map(grad, |x| -x)),
        OpKind::Exp => unary(zip(grad, output, |g, y| g * y)),
        OpKind::Log => unary(zip(grad, a, |g, x| g / x)),
        OpKind::Tanh => unary(zip(grad, output, |g, y| g * (1.0 - y * y))),
        OpKind::Sigmoid => unary(zip(grad, output, |g, y| g * y * (1.0 - y))),
        OpKind::Matmul => {
            let b = inputs[1];
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            vec![
                want(0).then(|| Tensor::from_parts(vec![m, k], gemm_nt(g, b.data(), m, k, n))),
                want(1).then(|| Tensor::from_parts(vec![k, n], gemm_tn(a.data(), g, m, k, n))),
            ]
        }
        OpKind::Sum => unary(Tensor::full(a.shape(), g[0])),
        OpKind::Mean => unary(Tensor::full(a.shape(), g[0] / a.len() as f64)),
        OpKind::BroadcastAdd => {
            let b = inputs[1];
            let n = b.len();
            let db = want(1).then(|| {
                let mut acc = vec![0.0; n];
                for row in g.chunks(n) {
                    for (s, &v) in acc.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                Tensor::from_parts(b.shape().to_vec(), acc)
            });
            vec![want(0).then(|| grad.clone()), db]
        }
        OpKind::BroadcastMul => {
            let b = inputs[1];
            let n = b.len();
            let da = want(0).then(|| {
                let data = g
                    .chunks(n)
                    .flat_map(|row| row.iter().zip(b.data()).map(|(&x, &y)| x * y))
                    .collect();
                Tensor::from_parts(a.shape().to_vec(), data)
            });
            let db = want(1).then(|| {
                let mut acc = vec![0.0; n];
                for (grow, arow) in g.chunks(n).zip(a.data().chunks(n)) {
                    for ((s, &gv), &av) in acc.iter_mut().zip(grow).zip(arow) {
                        *s += gv * av;
                    }
                }
                Tensor::from_parts(b.shape().to_vec(), acc)
            });
            vec![da, db]
        }
        OpKind::Clamp { lo, hi } => unary(zip(grad, a, |g, x| {
            if x >= *lo && x <= *hi {
                g
            } else {
                0.0
            }
        })),
        OpKind::Abs => unary(zip(grad, a, |g, x| {
            if x > 0.0 {
                g
            } else if x < 0.0 {
                -g
            } else {
                0.0
            }
        })),
        OpKind::MaxReduce => {
            let mut d = Tensor::zeros(a.shape());
            d.data_mut()[argmax(a.data())] = g[0];
            unary(d)
        }
        OpKind::Scale(c) => unary(map(grad, |x| x * c)),
        OpKind::Select(indices) => {
            let mut d = Tensor::zeros(a.shape());
            for (&i, &gv) in indices.iter().zip(g) {
                d.data_mut()[i] += gv;
            }
            unary(d)
        }
        OpKind::LogSoftmax => {
            let n = *a.shape().last().unwrap();
            let mut data = Vec::with_capacity(a.len());
            for (grow, yrow) in g.chunks(n).zip(output.data().chunks(n)) {
                let total: f64 = grow.iter().sum();
                data.extend(grow.iter().zip(yrow).map(|(&gv, &y)| gv - y.exp() * total));
            }
            unary(Tensor::from_parts(a.shape().to_vec(), data))
        }
    }
}
