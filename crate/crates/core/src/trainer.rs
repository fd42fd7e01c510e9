//! Training loop for the code-learning model.
//!
//! Each iteration samples a batch uniformly with replacement from the
//! training words, draws fresh Gumbel noise, and takes one Adam step. Every
//! `validate_every` iterations the noise-free loss on a held-out validation
//! set is measured, and the parameters are kept whenever it improves.
//!
//! Checkpoint file: `DCLM`, version `1`, `u32` M, K, H, then the hidden
//! weight, hidden bias, logit weight, logit bias and codebooks as row-major
//! `f32`, then a `u64` iteration counter. Little-endian throughout.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use log::{debug, info};

use crate::binio::{put_f32s, put_u32, ByteReader};
use crate::embedding_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::{
    adam_step, backward_scaled, forward, init_params, AdamState, Gradients, ModelParams,
    SchemeConfig, DEFAULT_LR,
};
use crate::rng::{sample_gumbel, Rng};
use crate::tensor::Mat;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCLM";
pub const CHECKPOINT_VERSION: u8 = 1;

pub const DEFAULT_BATCH: usize = 128;
pub const DEFAULT_ITERATIONS: u64 = 200_000;
pub const DEFAULT_VALIDATE_EVERY: u64 = 1_000;
pub const DEFAULT_VAL_FRACTION: f64 = 0.05;
pub const MAX_VALIDATION: usize = 3_000;
pub const MIN_VALIDATION: usize = 10;
pub const MIN_VOCAB: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub scheme: SchemeConfig,
    pub batch_size: usize,
    pub lr: f32,
    pub iterations: u64,
    pub validate_every: u64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Worker threads for the forward and backward passes. Results are
    /// deterministic for a fixed thread count; one thread is the reference.
    pub threads: usize,
}

impl TrainConfig {
    pub fn new(scheme: SchemeConfig) -> Self {
        TrainConfig {
            scheme,
            batch_size: DEFAULT_BATCH,
            lr: DEFAULT_LR,
            iterations: DEFAULT_ITERATIONS,
            validate_every: DEFAULT_VALIDATE_EVERY,
            seed: 0,
            val_fraction: DEFAULT_VAL_FRACTION,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        if self.validate_every == 0 {
            return Err(Error::config("validation interval must be >= 1"));
        }
        if self.iterations != 0 && self.iterations < self.validate_every {
            return Err(Error::config(format!(
                "{} iterations is fewer than the validation interval {}",
                self.iterations, self.validate_every
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate {} must be > 0", self.lr)));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config(format!(
                "validation fraction {} must be in (0, 1)",
                self.val_fraction
            )));
        }
        if self.threads == 0 {
            return Err(Error::config("thread count must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Lowest validation loss seen, `None` when no validation ran.
    pub best_val_loss: Option<f64>,
    /// Iteration at which the returned parameters were recorded.
    pub best_iteration: u64,
    pub val_loss_history: Vec<(u64, f64)>,
    pub wall_time: Duration,
    pub iterations_run: u64,
    pub train_words: usize,
    pub val_words: usize,
}

/// Number of held-out words for a vocabulary of `n` words.
pub fn validation_size(n: usize, fraction: f64) -> usize {
    let target = (fraction * n as f64).round() as usize;
    target.clamp(MIN_VALIDATION, MAX_VALIDATION)
}

/// Splits word indices into disjoint, sorted training and validation sets.
pub fn split_validation(
    emb: &EmbeddingMatrix,
    fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = emb.len();
    if n < MIN_VOCAB {
        return Err(Error::config(format!(
            "vocabulary of {n} words is too small, need at least {MIN_VOCAB}"
        )));
    }
    let n_val = validation_size(n, fraction);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut val = order[..n_val].to_vec();
    let mut train = order[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Forward and backward over `batch`, sharded across `threads` workers and
/// reduced in shard order.
pub fn loss_and_gradient(
    params: &ModelParams,
    batch: &Mat,
    noise: &Mat,
    cfg: &SchemeConfig,
    threads: usize,
) -> Result<(f64, Gradients)> {
    let rows = batch.rows();
    let shards = threads.clamp(1, rows.max(1));
    if shards == 1 {
        let trace = forward(params, batch, Some(noise), cfg)?;
        let grads = backward_scaled(params, batch, cfg, &trace, rows)?;
        return Ok((trace.loss, grads));
    }
    let per = rows.div_ceil(shards);
    let ranges: Vec<Vec<usize>> = (0..rows)
        .collect::<Vec<_>>()
        .chunks(per)
        .map(<[usize]>::to_vec)
        .collect();
    let results: Vec<Result<(f64, Gradients)>> = std::thread::scope(|s| {
        let handles: Vec<_> = ranges
            .iter()
            .map(|idx| {
                s.spawn(move || {
                    let b = batch.select_rows(idx);
                    let n = noise.select_rows(idx);
                    let trace = forward(params, &b, Some(&n), cfg)?;
                    let g = backward_scaled(params, &b, cfg, &trace, rows)?;
                    Ok((trace.loss * idx.len() as f64, g))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("gradient worker panicked"))
            .collect()
    });
    let mut total = 0.0;
    let mut grads = ModelParams::zeros(cfg);
    for r in results {
        let (l, g) = r?;
        total += l;
        grads.accumulate(&g);
    }
    Ok((total / rows as f64, grads))
}

/// Noise-free loss of `params` on the given rows.
pub fn validation_loss(
    params: &ModelParams,
    emb: &EmbeddingMatrix,
    indices: &[usize],
    cfg: &SchemeConfig,
) -> Result<f64> {
    let batch = emb.matrix().select_rows(indices);
    Ok(forward(params, &batch, None, cfg)?.loss)
}

pub fn train(emb: &EmbeddingMatrix, tc: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    train_with_checkpoint(emb, tc, None)
}

/// Like [`train`], but also writes a checkpoint to `checkpoint` each time the
/// validation loss improves. If training hits a numeric failure the last
/// good checkpoint is left on disk and the error is returned.
pub fn train_with_checkpoint(
    emb: &EmbeddingMatrix,
    tc: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<(ModelParams, TrainReport)> {
    tc.validate()?;
    let cfg = tc.scheme;
    if emb.dim() != cfg.dim {
        return Err(Error::config(format!(
            "embedding dimension {} does not match H = {}",
            emb.dim(),
            cfg.dim
        )));
    }
    let start = Instant::now();
    let mut master = Rng::new(tc.seed);
    let mut split_rng = master.fork();
    let mut init_rng = master.fork();
    let mut rng = master.fork();

    let (train_idx, val_idx) = split_validation(emb, tc.val_fraction, &mut split_rng)?;
    let mut params = init_params(&cfg, &mut init_rng);
    let mut best = params.clone();
    let mut best_loss: Option<f64> = None;
    let mut best_iteration = 0;
    let mut history = Vec::new();
    let mut adam = AdamState::new(&cfg, tc.lr);
    let width = cfg.code_width();
    let mut picks = vec![0usize; tc.batch_size];

    if let Some(path) = checkpoint {
        write_checkpoint(path, &cfg, &best, 0)?;
    }

    for it in 1..=tc.iterations {
        for p in picks.iter_mut() {
            *p = train_idx[rng.below(train_idx.len())];
        }
        let batch = emb.matrix().select_rows(&picks);
        let noise = sample_gumbel(&mut rng, tc.batch_size, width);
        let (loss, grads) = loss_and_gradient(&params, &batch, &noise, &cfg, tc.threads)?;
        adam_step(&mut params, &grads, &mut adam)?;

        if it % tc.validate_every == 0 {
            let val = validation_loss(&params, emb, &val_idx, &cfg)?;
            history.push((it, val));
            let improved = best_loss.is_none_or(|b| val < b);
            info!(
                "iter {it}: train loss {loss:.5}, validation loss {val:.5}{}",
                if improved { " (saved)" } else { "" }
            );
            if improved {
                best_loss = Some(val);
                best_iteration = it;
                best = params.clone();
                if let Some(path) = checkpoint {
                    write_checkpoint(path, &cfg, &best, it)?;
                }
            }
        } else {
            debug!("iter {it}: train loss {loss:.5}");
        }
    }

    let report = TrainReport {
        best_val_loss: best_loss,
        best_iteration,
        val_loss_history: history,
        wall_time: start.elapsed(),
        iterations_run: tc.iterations,
        train_words: train_idx.len(),
        val_words: val_idx.len(),
    };
    Ok((best, report))
}

/// A saved model: scheme shape, parameters, and the iteration they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub scheme: SchemeConfig,
    pub params: ModelParams,
    pub iteration: u64,
}

pub fn encode_checkpoint(cfg: &SchemeConfig, params: &ModelParams, iteration: u64) -> Result<Vec<u8>> {
    params.check_shapes(cfg)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    put_u32(&mut out, cfg.codebooks)?;
    put_u32(&mut out, cfg.codewords)?;
    put_u32(&mut out, cfg.dim)?;
    put_f32s(&mut out, params.hidden_weight.as_slice());
    put_f32s(&mut out, &params.hidden_bias);
    put_f32s(&mut out, params.logit_weight.as_slice());
    put_f32s(&mut out, &params.logit_bias);
    put_f32s(&mut out, params.codebooks.as_slice());
    out.extend_from_slice(&iteration.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes, "checkpoint");
    r.expect_magic(CHECKPOINT_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let h = r.u32()? as usize;
    let scheme = SchemeConfig::new(m, k, h).map_err(|e| Error::data(e.to_string()))?;
    let (p, w) = (scheme.hidden(), scheme.code_width());
    let params = ModelParams {
        hidden_weight: Mat::from_vec(h, p, r.f32s(h * p)?)?,
        hidden_bias: r.f32s(p)?,
        logit_weight: Mat::from_vec(p, w, r.f32s(p * w)?)?,
        logit_bias: r.f32s(w)?,
        codebooks: Mat::from_vec(w, h, r.f32s(w * h)?)?,
    };
    let iteration = r.u64()?;
    r.finish()?;
    Ok(Checkpoint {
        scheme,
        params,
        iteration,
    })
}

pub fn write_checkpoint(
    path: &Path,
    cfg: &SchemeConfig,
    params: &ModelParams,
    iteration: u64,
) -> Result<()> {
    // Write-then-rename so an interrupted save never clobbers the last good file.
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode_checkpoint(cfg, params, iteration)?)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path.as_ref())?)
}
