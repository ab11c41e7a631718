//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use aflow::classifier::ClassifierModel;

/// Plain-loop forward pass of a tanh MLP. Returns every layer's activation,
/// input first, logits last.
pub fn mlp_activations(model: &ClassifierModel, x: &[f64]) -> Vec<Vec<f64>> {
    let layers = model.layers();
    let mut acts = vec![x.to_vec()];
    for (k, layer) in layers.iter().enumerate() {
        let (n_in, n_out) = (layer.inputs(), layer.outputs());
        let w = layer.weight.data();
        let b = layer.bias.data();
        let prev = acts.last().unwrap();
        let mut out = vec![0.0; n_out];
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = b[j];
            for i in 0..n_in {
                acc += prev[i] * w[i * n_out + j];
            }
            *o = if k + 1 < layers.len() { acc.tanh() } else { acc };
        }
        acts.push(out);
    }
    acts
}

pub fn mlp_logits(model: &ClassifierModel, x: &[f64]) -> Vec<f64> {
    mlp_activations(model, x).pop().unwrap()
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Hand-written backpropagation of `upstream . logits` to the input.
pub fn mlp_input_gradient(model: &ClassifierModel, x: &[f64], upstream: &[f64]) -> Vec<f64> {
    let acts = mlp_activations(model, x);
    let layers = model.layers();
    let mut delta = upstream.to_vec();
    for k in (0..layers.len()).rev() {
        let layer = &layers[k];
        let (n_in, n_out) = (layer.inputs(), layer.outputs());
        let w = layer.weight.data();
        if k + 1 < layers.len() {
            for (j, d) in delta.iter_mut().enumerate() {
                let a = acts[k + 1][j];
                *d *= 1.0 - a * a;
            }
        }
        let mut prev = vec![0.0; n_in];
        for (i, p) in prev.iter_mut().enumerate() {
            for j in 0..n_out {
                *p += w[i * n_out + j] * delta[j];
            }
        }
        delta = prev;
    }
    delta
}

/// Untargeted margin `z_y - max_{k != y} z_k` and its input gradient.
pub fn margin_and_gradient(model: &ClassifierModel, x: &[f64], label: usize) -> (f64, Vec<f64>) {
    let logits = mlp_logits(model, x);
    let mut runner = usize::MAX;
    for k in 0..logits.len() {
        if k != label && (runner == usize::MAX || logits[k] > logits[runner]) {
            runner = k;
        }
    }
    let mut upstream = vec![0.0; logits.len()];
    upstream[label] = 1.0;
    upstream[runner] = -1.0;
    (logits[label] - logits[runner], mlp_input_gradient(model, x, &upstream))
}

/// `clip(x + clip(c - x, -eps, eps), 0, 1)` evaluated per pixel by cases.
pub fn clip_oracle(candidate: &[f64], original: &[f64], eps: f64) -> Vec<f64> {
    candidate
        .iter()
        .zip(original)
        .map(|(&c, &x)| {
            let d = c - x;
            let v = if d > eps {
                x + eps
            } else if d < -eps {
                x - eps
            } else {
                c
            };
            v.clamp(0.0, 1.0)
        })
        .collect()
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn determinant(mut a: Vec<Vec<f64>>) -> f64 {
    let n = a.len();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            a.swap(pivot, col);
            det = -det;
        }
        det *= a[col][col];
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for row in lower.iter_mut() {
            let f = row[col] / pivot_row[col];
            for (v, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *v -= f * p;
            }
        }
    }
    det
}

/// Central finite-difference gradient.
pub fn fd_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `||a - b|| / max(||b||, floor)`.
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Fraction of (clean, adversarial) pairs ordered adversarial-above, ties half.
pub fn auroc_all_pairs(clean: &[f64], adversarial: &[f64]) -> f64 {
    let mut twice = 0u64;
    for &a in adversarial {
        for &c in clean {
            twice += if a > c {
                2
            } else if a == c {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * clean.len() * adversarial.len()) as f64
}

fn gaussian_kernel_2d(size: usize, sigma: f64) -> Vec<Vec<f64>> {
    let c = (size as f64 - 1.0) / 2.0;
    let mut k = vec![vec![0.0; size]; size];
    let mut total = 0.0;
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (di, dj) = (i as f64 - c, j as f64 - c);
            *v = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *v;
        }
    }
    for row in k.iter_mut() {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    k
}

fn ssim_window(x: &[f64], y: &[f64], w: usize, r0: usize, c0: usize, weights: &[Vec<f64>]) -> f64 {
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let idx = |i: usize, j: usize| (r0 + i) * w + c0 + j;
    let (mut mx, mut my) = (0.0, 0.0);
    for (i, row) in weights.iter().enumerate() {
        for (j, &wt) in row.iter().enumerate() {
            mx += wt * x[idx(i, j)];
            my += wt * y[idx(i, j)];
        }
    }
    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
    for (i, row) in weights.iter().enumerate() {
        for (j, &wt) in row.iter().enumerate() {
            let (a, b) = (x[idx(i, j)] - mx, y[idx(i, j)] - my);
            vx += wt * a * a;
            vy += wt * b * b;
            cov += wt * a * b;
        }
    }
    ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
}

/// Mean SSIM over valid 11x11 Gaussian windows; one uniform window for small images.
pub fn ssim_reference(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    if h < 11 || w < 11 {
        let weights = vec![vec![1.0 / (h * w) as f64; w]; h];
        return ssim_window(x, y, w, 0, 0, &weights);
    }
    let weights = gaussian_kernel_2d(11, 1.5);
    let mut vals = Vec::new();
    for r0 in 0..=h - 11 {
        for c0 in 0..=w - 11 {
            vals.push(ssim_window(x, y, w, r0, c0, &weights));
        }
    }
    vals.iter().sum::<f64>() / vals.len() as f64
}

pub fn psnr_reference(x: &[f64], y: &[f64]) -> f64 {
    let mse = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64;
    -10.0 * mse.log10()
}

fn moments(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let vx = x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / n;
    let vy = y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    (mx, my, vx, vy, cov)
}

/// `4 cov mx my / ((vx + vy)(mx^2 + my^2))`.
pub fn uqi_reference(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my, vx, vy, cov) = moments(x, y);
    4.0 * cov * mx * my / ((vx + vy) * (mx * mx + my * my))
}

/// 3x3 kernel with 8 in the centre and -1 around it, replicated borders.
pub fn laplacian_reference(img: &[f64], h: usize, w: usize) -> Vec<f64> {
    let kernel = [[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]];
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (dr, krow) in kernel.iter().enumerate() {
                for (dc, &kv) in krow.iter().enumerate() {
                    let rr = (r as isize + dr as isize - 1).clamp(0, h as isize - 1) as usize;
                    let cc = (c as isize + dc as isize - 1).clamp(0, w as isize - 1) as usize;
                    acc += kv * img[rr * w + cc];
                }
            }
            out[r * w + c] = acc;
        }
    }
    out
}

pub fn scc_reference(x: &[f64], y: &[f64], h: usize, w: usize) -> f64 {
    let (fx, fy) = (laplacian_reference(x, h, w), laplacian_reference(y, h, w));
    let (_, _, vx, vy, cov) = moments(&fx, &fy);
    cov / (vx * vy).sqrt()
}

pub fn l2_reference(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}
