//! Learn codes for embeddings that were built from known codebooks, then
//! compare the learned reconstruction against the noise floor and a
//! product-quantization baseline.
//!
//! cargo run --release --example synthetic_recovery -- [iterations] [seed]

use codecomp::analysis::{pq_baseline, reconstruction_quality, DEFAULT_KMEANS_ITERATIONS};
use codecomp::codec::{export_codes, reconstruct_embeddings};
use codecomp::model::SchemeConfig;
use codecomp::synthetic::{generate, SyntheticSpec};
use codecomp::trainer::{train, TrainConfig};

pub fn run_example(iterations: u64, seed: u64) -> codecomp::Result<(f64, f64)> {
    let spec = SyntheticSpec {
        codebooks: 4,
        codewords: 8,
        dim: 16,
        words: 1000,
        noise_sigma: 0.01,
        seed,
    };
    let data = generate(&spec)?;
    let emb = &data.embeddings;

    let scheme = SchemeConfig::new(4, 8, 16)?;
    let mut tc = TrainConfig::new(scheme);
    tc.iterations = iterations;
    tc.validate_every = (iterations / 20).max(1);
    tc.seed = seed;
    let (params, report) = train(emb, &tc)?;
    println!(
        "trained {} iterations in {:.1}s, best validation loss {:.5} at iteration {} (noise floor {:.5})",
        report.iterations_run,
        report.wall_time.as_secs_f64(),
        report.best_val_loss.unwrap_or(f64::NAN),
        report.best_iteration,
        spec.noise_floor()
    );
    for (it, loss) in &report.val_loss_history {
        println!("  {it:>7}  {loss:.5}");
    }

    let (codes, books) = export_codes(&params, emb, &scheme)?;
    let recon = reconstruct_embeddings(&codes, &books, emb.vocab().to_vec())?;
    let hard = reconstruction_quality(emb, &recon)?;
    let pq = pq_baseline(emb, 4, 8, DEFAULT_KMEANS_ITERATIONS, seed)?;
    println!(
        "hard-code loss {:.5}, mean cosine {:.4}; PQ baseline loss {:.5}",
        hard.mean_squared_distance, hard.mean_cosine, pq.loss
    );
    Ok((report.best_val_loss.unwrap_or(f64::NAN), pq.loss))
}

#[allow(dead_code)]
fn main() -> codecomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    run_example(iterations, seed)?;
    Ok(())
}
