//! Test-only reference implementations, written scalar by scalar in `f64`
//! and independent of the library's matrix code.

#![allow(dead_code)]

use codecomp::model::{ModelParams, ParamGroup, SchemeConfig};
use codecomp::tensor::Mat;

/// Parameters copied into plain `f64` vectors, group by group.
#[derive(Clone, Debug)]
pub struct Shadow {
    pub groups: Vec<Vec<f64>>,
}

impl Shadow {
    pub fn from_params(p: &ModelParams) -> Self {
        Shadow {
            groups: ParamGroup::ALL
                .iter()
                .map(|&g| p.group(g).iter().map(|&x| f64::from(x)).collect())
                .collect(),
        }
    }
}

const FLOOR: f64 = 1e-10;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Batch-mean squared reconstruction error, straight from the definitions:
/// `h = tanh(W^T x + b)`, `alpha = max(softplus(W'^T h + b'), floor)`,
/// `d = softmax((log alpha + g) / tau)` per group, `recon = sum_i A_i^T d_i`.
pub fn scalar_loss(
    s: &Shadow,
    cfg: &SchemeConfig,
    batch: &Mat,
    noise: Option<&Mat>,
) -> f64 {
    let (h_dim, p, m, k) = (cfg.dim, cfg.hidden(), cfg.codebooks, cfg.codewords);
    let w = m * k;
    let tau = f64::from(cfg.tau);
    let [theta, b, theta2, b2, a] = [&s.groups[0], &s.groups[1], &s.groups[2], &s.groups[3], &s.groups[4]];
    let mut total = 0.0;
    for row in 0..batch.rows() {
        let x: Vec<f64> = batch.row(row).iter().map(|&v| f64::from(v)).collect();
        let mut hidden = vec![0.0; p];
        for j in 0..p {
            let mut z = b[j];
            for i in 0..h_dim {
                z += theta[i * p + j] * x[i];
            }
            hidden[j] = z.tanh();
        }
        let mut d = vec![0.0; w];
        for comp in 0..m {
            let mut logits = vec![0.0; k];
            for kk in 0..k {
                let col = comp * k + kk;
                let mut z = b2[col];
                for j in 0..p {
                    z += theta2[j * w + col] * hidden[j];
                }
                let alpha = softplus(z).max(FLOOR);
                let g = noise.map_or(0.0, |n| f64::from(n.get(row, col)));
                logits[kk] = (alpha.ln() + g) / tau;
            }
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for kk in 0..k {
                d[comp * k + kk] = (logits[kk] - max).exp() / denom;
            }
        }
        for dim in 0..h_dim {
            let mut r = 0.0;
            for col in 0..w {
                r += a[col * h_dim + dim] * d[col];
            }
            total += (r - x[dim]).powi(2);
        }
    }
    total / batch.rows() as f64
}

/// Central finite differences of [`scalar_loss`] for every coordinate of
/// every group.
pub fn finite_difference_gradient(
    s: &Shadow,
    cfg: &SchemeConfig,
    batch: &Mat,
    noise: Option<&Mat>,
    step: f64,
) -> Vec<Vec<f64>> {
    let mut work = s.clone();
    let mut out = Vec::new();
    for g in 0..s.groups.len() {
        let mut grad = Vec::with_capacity(s.groups[g].len());
        for i in 0..s.groups[g].len() {
            let orig = work.groups[g][i];
            work.groups[g][i] = orig + step;
            let up = scalar_loss(&work, cfg, batch, noise);
            work.groups[g][i] = orig - step;
            let down = scalar_loss(&work, cfg, batch, noise);
            work.groups[g][i] = orig;
            grad.push((up - down) / (2.0 * step));
        }
        out.push(grad);
    }
    out
}

/// `|analytic - numeric| <= max(rel * max(|analytic|, |numeric|), abs_floor)`
pub fn gradient_close(analytic: f64, numeric: f64, rel: f64, abs_floor: f64) -> bool {
    (analytic - numeric).abs() <= (rel * analytic.abs().max(numeric.abs())).max(abs_floor)
}
