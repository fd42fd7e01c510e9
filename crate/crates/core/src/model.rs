//! The code-learning autoencoder.
//!
//! An embedding `x` is encoded as `h = tanh(x W + b)`, then mapped to `M`
//! groups of `K` positive scores `alpha = softplus(h W' + b')`. Each group is
//! relaxed into a point on the simplex with the Gumbel-softmax
//! `d = softmax((log alpha + g) / tau)`, and the decoder sums the codebook
//! rows weighted by `d`. Training minimizes the squared reconstruction
//! error, summed over dimensions and averaged over the batch.
//!
//! Gradients are derived by hand and flow through the relaxed `d`; there is
//! no straight-through estimator. Discrete codes only appear at export time,
//! see [`forward_hard`] and [`crate::codec::export_codes`].

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{sigmoid, softplus, Mat};

/// Scores are clamped to at least this value before taking the log.
pub const ALPHA_FLOOR: f32 = 1e-10;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const DEFAULT_LR: f32 = 1e-4;

/// Largest supported codebook size; codes are stored as `u16`.
pub const MAX_CODEWORDS: usize = 1 << 16;

/// An `M x K` coding scheme for `H`-dimensional embeddings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchemeConfig {
    /// `M`, the number of codebooks and of components per code.
    pub codebooks: usize,
    /// `K`, the number of codewords in each codebook.
    pub codewords: usize,
    /// `H`, the embedding dimension.
    pub dim: usize,
    /// Softmax temperature.
    pub tau: f32,
}

impl SchemeConfig {
    pub fn new(codebooks: usize, codewords: usize, dim: usize) -> Result<Self> {
        let cfg = SchemeConfig {
            codebooks,
            codewords,
            dim,
            tau: 1.0,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_tau(mut self, tau: f32) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.codebooks == 0 {
            return Err(Error::config("need at least one codebook (M >= 1)"));
        }
        if self.codewords < 2 || !self.codewords.is_power_of_two() {
            return Err(Error::config(format!(
                "codebook size K = {} must be a power of two >= 2",
                self.codewords
            )));
        }
        if self.codewords > MAX_CODEWORDS {
            return Err(Error::config(format!(
                "codebook size K = {} exceeds {MAX_CODEWORDS}",
                self.codewords
            )));
        }
        if self.dim == 0 {
            return Err(Error::config("embedding dimension H must be >= 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("temperature {} must be > 0", self.tau)));
        }
        Ok(())
    }

    /// `M * K`, the total number of codewords.
    pub fn code_width(&self) -> usize {
        self.codebooks * self.codewords
    }

    /// Width of the encoder's hidden layer, `M * K / 2`.
    pub fn hidden(&self) -> usize {
        self.code_width() / 2
    }

    pub fn bits_per_component(&self) -> u32 {
        self.codewords.trailing_zeros()
    }

    /// `M * log2(K)`.
    pub fn code_bits(&self) -> u64 {
        self.codebooks as u64 * u64::from(self.bits_per_component())
    }
}

/// The five trainable parameter groups. The same shape doubles as the
/// gradient and as the Adam moment buffers.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `H x MK/2`
    pub hidden_weight: Mat,
    /// `MK/2`
    pub hidden_bias: Vec<f32>,
    /// `MK/2 x MK`
    pub logit_weight: Mat,
    /// `MK`
    pub logit_bias: Vec<f32>,
    /// `MK x H`; rows `i*K .. (i+1)*K` are codebook `i`.
    pub codebooks: Mat,
}

pub type Gradients = ModelParams;

/// Names for the parameter groups, in storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    HiddenWeight,
    HiddenBias,
    LogitWeight,
    LogitBias,
    Codebooks,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::HiddenWeight,
        ParamGroup::HiddenBias,
        ParamGroup::LogitWeight,
        ParamGroup::LogitBias,
        ParamGroup::Codebooks,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::HiddenWeight => "hidden_weight",
            ParamGroup::HiddenBias => "hidden_bias",
            ParamGroup::LogitWeight => "logit_weight",
            ParamGroup::LogitBias => "logit_bias",
            ParamGroup::Codebooks => "codebooks",
        }
    }
}

impl ModelParams {
    pub fn zeros(cfg: &SchemeConfig) -> Self {
        let (h, p, w) = (cfg.dim, cfg.hidden(), cfg.code_width());
        ModelParams {
            hidden_weight: Mat::zeros(h, p),
            hidden_bias: vec![0.0; p],
            logit_weight: Mat::zeros(p, w),
            logit_bias: vec![0.0; w],
            codebooks: Mat::zeros(w, h),
        }
    }

    pub fn group(&self, g: ParamGroup) -> &[f32] {
        match g {
            ParamGroup::HiddenWeight => self.hidden_weight.as_slice(),
            ParamGroup::HiddenBias => &self.hidden_bias,
            ParamGroup::LogitWeight => self.logit_weight.as_slice(),
            ParamGroup::LogitBias => &self.logit_bias,
            ParamGroup::Codebooks => self.codebooks.as_slice(),
        }
    }

    pub fn group_mut(&mut self, g: ParamGroup) -> &mut [f32] {
        match g {
            ParamGroup::HiddenWeight => self.hidden_weight.as_mut_slice(),
            ParamGroup::HiddenBias => &mut self.hidden_bias,
            ParamGroup::LogitWeight => self.logit_weight.as_mut_slice(),
            ParamGroup::LogitBias => &mut self.logit_bias,
            ParamGroup::Codebooks => self.codebooks.as_mut_slice(),
        }
    }

    /// Checks every group against the shapes implied by `cfg`.
    pub fn check_shapes(&self, cfg: &SchemeConfig) -> Result<()> {
        let (h, p, w) = (cfg.dim, cfg.hidden(), cfg.code_width());
        let ok = self.hidden_weight.shape() == (h, p)
            && self.hidden_bias.len() == p
            && self.logit_weight.shape() == (p, w)
            && self.logit_bias.len() == w
            && self.codebooks.shape() == (w, h);
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "parameter shapes do not match scheme {}x{} with H = {h}",
                cfg.codebooks, cfg.codewords
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        ParamGroup::ALL
            .iter()
            .all(|&g| self.group(g).iter().all(|x| x.is_finite()))
    }

    /// Adds `other` into `self` group by group.
    pub(crate) fn accumulate(&mut self, other: &ModelParams) {
        for g in ParamGroup::ALL {
            for (a, &b) in self.group_mut(g).iter_mut().zip(other.group(g)) {
                *a += b;
            }
        }
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(cfg: &SchemeConfig, rng: &mut Rng) -> ModelParams {
    let (h, p, w) = (cfg.dim, cfg.hidden(), cfg.code_width());
    let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    let s1 = glorot(h, p);
    let s2 = glorot(p, w);
    let s_a = glorot(w, h);
    ModelParams {
        hidden_weight: rng.uniform_mat(h, p, -s1, s1),
        hidden_bias: vec![0.0; p],
        logit_weight: rng.uniform_mat(p, w, -s2, s2),
        logit_bias: vec![0.0; w],
        codebooks: rng.uniform_mat(w, h, -s_a, s_a),
    }
}

/// Intermediate values of one forward pass, kept for [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    /// `B x MK/2` hidden activations.
    pub hidden: Mat,
    /// `B x MK` pre-softplus logits.
    pub pre_alpha: Mat,
    /// `B x MK` floored softplus scores.
    pub alpha: Mat,
    /// `B x MK` relaxed one-hots; each group of `K` lies on the simplex.
    pub soft: Mat,
    /// `B x H` reconstructions.
    pub recon: Mat,
    /// Squared error summed over `H`, averaged over the batch.
    pub loss: f64,
}

fn check_batch(params: &ModelParams, batch: &Mat, cfg: &SchemeConfig) -> Result<()> {
    cfg.validate()?;
    params.check_shapes(cfg)?;
    if batch.cols() != cfg.dim {
        return Err(Error::config(format!(
            "batch has {} columns, scheme expects H = {}",
            batch.cols(),
            cfg.dim
        )));
    }
    Ok(())
}

/// Encoder up to the floored scores: returns `(hidden, pre_alpha, alpha)`.
fn encode(params: &ModelParams, batch: &Mat) -> Result<(Mat, Mat, Mat)> {
    let hidden = batch
        .matmul(&params.hidden_weight)?
        .add_row_vector(&params.hidden_bias)?
        .map(crate::tensor::Unary::Tanh)?;
    let pre_alpha = hidden
        .matmul(&params.logit_weight)?
        .add_row_vector(&params.logit_bias)?;
    let mut alpha = pre_alpha.clone();
    for a in alpha.as_mut_slice() {
        *a = softplus(*a).max(ALPHA_FLOOR);
    }
    alpha.check_finite("softplus")?;
    Ok((hidden, pre_alpha, alpha))
}

/// Temperature softmax over each contiguous group of `group` entries of
/// `logits`, written into `out`. Uses max subtraction.
pub fn grouped_softmax(logits: &[f32], group: usize, tau: f32, out: &mut [f32]) {
    for (l, o) in logits.chunks_exact(group).zip(out.chunks_exact_mut(group)) {
        let max = l.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0f64;
        for (oi, &li) in o.iter_mut().zip(l) {
            let e = ((li - max) / tau).exp();
            *oi = e;
            sum += f64::from(e);
        }
        let inv = (1.0 / sum) as f32;
        for oi in o.iter_mut() {
            *oi *= inv;
        }
    }
}

/// Mean over rows of the squared L2 distance, accumulated in `f64`.
pub fn mean_squared_distance(a: &Mat, b: &Mat) -> f64 {
    if a.rows() == 0 {
        return 0.0;
    }
    let total: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    total / a.rows() as f64
}

/// Runs the autoencoder on a `B x H` batch.
///
/// `noise` holds `B x MK` Gumbel samples; `None` means zero noise, which
/// makes the pass deterministic.
pub fn forward(
    params: &ModelParams,
    batch: &Mat,
    noise: Option<&Mat>,
    cfg: &SchemeConfig,
) -> Result<ForwardTrace> {
    check_batch(params, batch, cfg)?;
    let width = cfg.code_width();
    if let Some(n) = noise {
        if n.shape() != (batch.rows(), width) {
            return Err(Error::config(format!(
                "noise is {:?}, expected ({}, {width})",
                n.shape(),
                batch.rows()
            )));
        }
    }
    let (hidden, pre_alpha, alpha) = encode(params, batch)?;

    let mut logits = alpha.clone();
    for (i, l) in logits.as_mut_slice().iter_mut().enumerate() {
        *l = l.ln();
        if let Some(n) = noise {
            *l += n.as_slice()[i];
        }
    }
    logits.check_finite("gumbel logits")?;
    let mut soft = Mat::zeros(batch.rows(), width);
    grouped_softmax(logits.as_slice(), cfg.codewords, cfg.tau, soft.as_mut_slice());
    soft.check_finite("gumbel softmax")?;

    let recon = soft.matmul(&params.codebooks)?;
    let loss = mean_squared_distance(&recon, batch);
    if !loss.is_finite() {
        return Err(Error::numeric("loss", format!("loss is {loss}")));
    }
    Ok(ForwardTrace {
        hidden,
        pre_alpha,
        alpha,
        soft,
        recon,
        loss,
    })
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Noise-free scores `alpha` for every row of `batch` (`B x MK`).
pub fn scores(params: &ModelParams, batch: &Mat, cfg: &SchemeConfig) -> Result<Mat> {
    check_batch(params, batch, cfg)?;
    Ok(encode(params, batch)?.2)
}

/// Result of a forward pass with exact one-hot codes.
#[derive(Clone, Debug)]
pub struct HardForward {
    /// `B x M` argmax codes.
    pub codes: Vec<u16>,
    pub recon: Mat,
    pub loss: f64,
}

/// Forward pass with each relaxed one-hot replaced by the exact one-hot at
/// the argmax of the noise-free scores.
pub fn forward_hard(params: &ModelParams, batch: &Mat, cfg: &SchemeConfig) -> Result<HardForward> {
    let alpha = scores(params, batch, cfg)?;
    let (m, k) = (cfg.codebooks, cfg.codewords);
    let mut onehot = Mat::zeros(batch.rows(), m * k);
    let mut codes = Vec::with_capacity(batch.rows() * m);
    for r in 0..batch.rows() {
        for (i, group) in alpha.row(r).chunks_exact(k).enumerate() {
            let c = argmax(group);
            codes.push(c as u16);
            onehot.set(r, i * k + c, 1.0);
        }
    }
    let recon = onehot.matmul(&params.codebooks)?;
    let loss = mean_squared_distance(&recon, batch);
    Ok(HardForward { codes, recon, loss })
}

/// Analytic gradient of the batch-mean loss.
pub fn backward(
    params: &ModelParams,
    batch: &Mat,
    cfg: &SchemeConfig,
    trace: &ForwardTrace,
) -> Result<Gradients> {
    backward_scaled(params, batch, cfg, trace, batch.rows())
}

/// Gradient of `sum_w ||recon_w - x_w||^2 / denom` over the rows of `batch`.
/// Splitting a batch into shards and summing their gradients with the full
/// batch size as `denom` reproduces [`backward`] on the whole batch.
pub(crate) fn backward_scaled(
    params: &ModelParams,
    batch: &Mat,
    cfg: &SchemeConfig,
    trace: &ForwardTrace,
    denom: usize,
) -> Result<Gradients> {
    check_batch(params, batch, cfg)?;
    let rows = batch.rows();
    if trace.recon.shape() != batch.shape() {
        return Err(Error::config("trace does not belong to this batch"));
    }
    if rows == 0 {
        return Ok(ModelParams::zeros(cfg));
    }
    let (k, width) = (cfg.codewords, cfg.code_width());
    let scale = 2.0 / denom as f64;

    // dL/drecon
    let mut g_recon = Mat::zeros(rows, cfg.dim);
    for ((g, &r), &x) in g_recon
        .as_mut_slice()
        .iter_mut()
        .zip(trace.recon.as_slice())
        .zip(batch.as_slice())
    {
        *g = ((f64::from(r) - f64::from(x)) * scale) as f32;
    }

    let g_codebooks = trace.soft.transpose().matmul(&g_recon)?;
    let g_soft = g_recon.matmul(&params.codebooks.transpose())?;

    // Softmax, then log, floor and softplus, all elementwise per group.
    let inv_tau = 1.0 / f64::from(cfg.tau);
    let mut g_pre = Mat::zeros(rows, width);
    for r in 0..rows {
        let d = trace.soft.row(r);
        let gd = g_soft.row(r);
        let z = trace.pre_alpha.row(r);
        let alpha = trace.alpha.row(r);
        let out = g_pre.row_mut(r);
        for start in (0..width).step_by(k) {
            let span = start..start + k;
            let dot: f64 = d[span.clone()]
                .iter()
                .zip(&gd[span.clone()])
                .map(|(&di, &gi)| f64::from(di) * f64::from(gi))
                .sum();
            for j in span {
                let g_logit = f64::from(d[j]) * (f64::from(gd[j]) - dot) * inv_tau;
                // Floored entries are constant in `z`.
                out[j] = if alpha[j] <= ALPHA_FLOOR {
                    0.0
                } else {
                    (g_logit * f64::from(sigmoid(z[j])) / f64::from(alpha[j])) as f32
                };
            }
        }
    }
    g_pre.check_finite("softplus backward")?;

    let g_logit_weight = trace.hidden.transpose().matmul(&g_pre)?;
    let g_logit_bias = g_pre.column_sums();
    let g_hidden = g_pre.matmul(&params.logit_weight.transpose())?;
    let mut g_hidden_pre = g_hidden;
    for (g, &h) in g_hidden_pre
        .as_mut_slice()
        .iter_mut()
        .zip(trace.hidden.as_slice())
    {
        *g *= 1.0 - h * h;
    }
    let g_hidden_weight = batch.transpose().matmul(&g_hidden_pre)?;
    let g_hidden_bias = g_hidden_pre.column_sums();

    Ok(ModelParams {
        hidden_weight: g_hidden_weight,
        hidden_bias: g_hidden_bias,
        logit_weight: g_logit_weight,
        logit_bias: g_logit_bias,
        codebooks: g_codebooks,
    })
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
    pub lr: f32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(cfg: &SchemeConfig, lr: f32) -> Self {
        AdamState {
            m: ModelParams::zeros(cfg),
            v: ModelParams::zeros(cfg),
            t: 0,
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = f64::from(state.lr);
    for g in ParamGroup::ALL {
        let p = params.group_mut(g);
        let grad = grads.group(g);
        let m = state.m.group_mut(g);
        let v = state.v.group_mut(g);
        if grad.len() != p.len() || m.len() != p.len() || v.len() != p.len() {
            return Err(Error::config(format!("{} shape mismatch in adam_step", g.name())));
        }
        for i in 0..p.len() {
            let gi = f64::from(grad[i]);
            let mi = b1 * f64::from(m[i]) + (1.0 - b1) * gi;
            let vi = b2 * f64::from(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let step = lr * (mi / c1) / ((vi / c2).sqrt() + state.eps);
            p[i] = (f64::from(p[i]) - step) as f32;
        }
    }
    if !params.is_finite() {
        return Err(Error::numeric("adam_step", "parameters became non-finite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> SchemeConfig {
        SchemeConfig::new(2, 4, 3).unwrap()
    }

    #[test]
    fn scheme_validation() {
        assert!(SchemeConfig::new(0, 4, 3).is_err());
        assert!(SchemeConfig::new(2, 6, 3).is_err());
        assert!(SchemeConfig::new(2, 1, 3).is_err());
        assert!(SchemeConfig::new(2, 4, 0).is_err());
        assert!(tiny().with_tau(0.0).is_err());
        let s = SchemeConfig::new(32, 16, 300).unwrap();
        assert_eq!(s.hidden(), 256);
        assert_eq!(s.code_bits(), 128);
        assert_eq!(s.tau, 1.0);
    }

    #[test]
    fn zero_logits_give_uniform_soft_codes() {
        let cfg = tiny();
        let mut rng = Rng::new(3);
        let mut params = init_params(&cfg, &mut rng);
        params.logit_weight = Mat::zeros(cfg.hidden(), cfg.code_width());
        let batch = rng.uniform_mat(5, cfg.dim, -1.0, 1.0);
        let trace = forward(&params, &batch, None, &cfg).unwrap();
        for &d in trace.soft.as_slice() {
            assert_eq!(d, 0.25);
        }
        // Every reconstruction is the sum of the per-codebook mean codewords.
        let mut expected = vec![0f32; cfg.dim];
        for i in 0..cfg.codebooks {
            for k in 0..cfg.codewords {
                for (e, &a) in expected.iter_mut().zip(params.codebooks.row(i * 4 + k)) {
                    *e += a / 4.0;
                }
            }
        }
        for r in 0..5 {
            for (x, e) in trace.recon.row(r).iter().zip(&expected) {
                assert!((x - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_codebooks_loss_is_mean_squared_norm() {
        let cfg = tiny();
        let mut rng = Rng::new(4);
        let mut params = init_params(&cfg, &mut rng);
        params.codebooks = Mat::zeros(cfg.code_width(), cfg.dim);
        let batch = rng.uniform_mat(4, cfg.dim, -2.0, 2.0);
        let trace = forward(&params, &batch, None, &cfg).unwrap();
        let norm: f64 = batch
            .as_slice()
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            / 4.0;
        assert!(trace.recon.as_slice().iter().all(|&x| x == 0.0));
        assert!((trace.loss - norm).abs() < 1e-9);
    }

    #[test]
    fn simplex_holds_with_noise() {
        let cfg = SchemeConfig::new(3, 8, 5).unwrap();
        let mut rng = Rng::new(5);
        let params = init_params(&cfg, &mut rng);
        let batch = rng.uniform_mat(7, 5, -3.0, 3.0);
        let noise = crate::rng::sample_gumbel(&mut rng, 7, cfg.code_width());
        let trace = forward(&params, &batch, Some(&noise), &cfg).unwrap();
        for row in trace.soft.row_iter() {
            for group in row.chunks_exact(8) {
                let s: f32 = group.iter().sum();
                assert!((s - 1.0).abs() < 1e-5);
                assert!(group.iter().all(|&d| d > 0.0 && d < 1.0));
            }
        }
        assert!(trace.alpha.as_slice().iter().all(|&a| a >= ALPHA_FLOOR));
        assert!(trace.loss >= 0.0);
    }

    #[test]
    fn forward_rejects_bad_shapes() {
        let cfg = tiny();
        let params = ModelParams::zeros(&cfg);
        assert!(matches!(
            forward(&params, &Mat::zeros(2, 4), None, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            forward(&params, &Mat::zeros(2, 3), Some(&Mat::zeros(2, 7)), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn zero_batch_zero_params_have_zero_gradient() {
        let cfg = tiny();
        let params = ModelParams::zeros(&cfg);
        let batch = Mat::zeros(3, cfg.dim);
        let trace = forward(&params, &batch, None, &cfg).unwrap();
        assert_eq!(trace.loss, 0.0);
        let g = backward(&params, &batch, &cfg, &trace).unwrap();
        for group in ParamGroup::ALL {
            assert!(g.group(group).iter().all(|&x| x == 0.0), "{}", group.name());
        }
    }

    #[test]
    fn duplicated_batch_leaves_gradient_unchanged() {
        let cfg = SchemeConfig::new(2, 4, 6).unwrap();
        let mut rng = Rng::new(8);
        let params = init_params(&cfg, &mut rng);
        let batch = rng.uniform_mat(3, 6, -1.0, 1.0);
        let noise = crate::rng::sample_gumbel(&mut rng, 3, 8);
        let doubled = batch.select_rows(&[0, 1, 2, 0, 1, 2]);
        let noise2 = noise.select_rows(&[0, 1, 2, 0, 1, 2]);
        let t1 = forward(&params, &batch, Some(&noise), &cfg).unwrap();
        let t2 = forward(&params, &doubled, Some(&noise2), &cfg).unwrap();
        assert!((t1.loss - t2.loss).abs() < 1e-6 * t1.loss.max(1.0));
        let g1 = backward(&params, &batch, &cfg, &t1).unwrap();
        let g2 = backward(&params, &doubled, &cfg, &t2).unwrap();
        for group in ParamGroup::ALL {
            for (a, b) in g1.group(group).iter().zip(g2.group(group)) {
                assert!((a - b).abs() <= 1e-6 + 1e-5 * a.abs(), "{}: {a} vs {b}", group.name());
            }
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.1, 0.9, 0.1, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
    }

    #[test]
    fn hard_forward_uses_selected_codewords() {
        let cfg = tiny();
        let mut rng = Rng::new(12);
        let params = init_params(&cfg, &mut rng);
        let batch = rng.uniform_mat(4, cfg.dim, -1.0, 1.0);
        let hard = forward_hard(&params, &batch, &cfg).unwrap();
        let alpha = scores(&params, &batch, &cfg).unwrap();
        for r in 0..4 {
            for i in 0..2 {
                let c = hard.codes[r * 2 + i] as usize;
                assert_eq!(c, argmax(&alpha.row(r)[i * 4..i * 4 + 4]));
            }
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let cfg = tiny();
        let mut params = init_params(&cfg, &mut Rng::new(1));
        let before = params.clone();
        let mut state = AdamState::new(&cfg, 0.1);
        adam_step(&mut params, &ModelParams::zeros(&cfg), &mut state).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // One scalar parameter: the hidden bias of a 1x2 scheme with H = 1.
        let cfg = SchemeConfig::new(1, 2, 1).unwrap();
        let mut params = ModelParams::zeros(&cfg);
        let mut grads = ModelParams::zeros(&cfg);
        grads.hidden_bias[0] = 1.0;
        let mut state = AdamState::new(&cfg, 0.1);
        adam_step(&mut params, &grads, &mut state).unwrap();
        // 0.1 / (1 + 1e-8)
        assert!((params.hidden_bias[0] + 0.1).abs() < 1e-7);
    }

    #[test]
    fn adam_matches_scalar_reference() {
        fn reference(grads: &[f64], lr: f64) -> f64 {
            let (mut p, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
            for (t, &g) in grads.iter().enumerate() {
                let t = (t + 1) as i32;
                m = 0.9 * m + 0.1 * g;
                v = 0.999 * v + 0.001 * g * g;
                let mh = m / (1.0 - 0.9f64.powi(t));
                let vh = v / (1.0 - 0.999f64.powi(t));
                p -= lr * mh / (vh.sqrt() + 1e-8);
            }
            p
        }
        let cfg = SchemeConfig::new(1, 2, 1).unwrap();
        let mut params = ModelParams::zeros(&cfg);
        params.hidden_bias[0] = 0.5;
        let mut state = AdamState::new(&cfg, 0.01);
        for g in [0.3f32, -1.2] {
            let mut grads = ModelParams::zeros(&cfg);
            grads.hidden_bias[0] = g;
            adam_step(&mut params, &grads, &mut state).unwrap();
        }
        let want = reference(&[0.3f32 as f64, -1.2f32 as f64], 0.01);
        assert!((f64::from(params.hidden_bias[0]) - want).abs() < 1e-7);
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let cfg = SchemeConfig::new(4, 8, 10).unwrap();
        let a = init_params(&cfg, &mut Rng::new(77));
        let b = init_params(&cfg, &mut Rng::new(77));
        assert_eq!(a, b);
        assert!(a.hidden_bias.iter().all(|&x| x == 0.0));
        assert!(a.logit_bias.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn init_spread_matches_uniform_moment() {
        // H = 300 and MK/2 = 256, e.g. a 32x16 scheme.
        let cfg = SchemeConfig::new(32, 16, 300).unwrap();
        let p = init_params(&cfg, &mut Rng::new(5));
        let s = (6.0f64 / (300.0 + 256.0)).sqrt();
        let xs = p.hidden_weight.as_slice();
        let n = xs.len() as f64;
        let mean = xs.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let var = xs.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
        let expected = s / 3f64.sqrt();
        assert!((var.sqrt() - expected).abs() < 0.1 * expected);
        assert!(xs.iter().all(|&x| f64::from(x).abs() <= s));
    }
}
