//! Train an 8x8 scheme on compositional data, then inspect the result:
//! codeword usage, words that collide on a full code, nearest-neighbor
//! agreement, and a product-quantization baseline at the same code length.
//!
//! cargo run --release --example code_analysis -- [iterations] [seed]

use codecomp::analysis::{
    balance_table, distinct_codes, format_code, neighbor_overlap, pq_baseline,
    reconstruction_quality, shared_code_groups, DEFAULT_KMEANS_ITERATIONS,
};
use codecomp::codec::{export_codes, reconstruct_embeddings};
use codecomp::model::SchemeConfig;
use codecomp::synthetic::{generate, SyntheticSpec};
use codecomp::trainer::{train, TrainConfig};

pub struct Summary {
    pub dead_codewords: usize,
    pub learned_loss: f64,
    pub pq_loss: f64,
    pub overlap: f64,
}

pub fn run_example(words: usize, iterations: u64, seed: u64) -> codecomp::Result<Summary> {
    let data = generate(&SyntheticSpec {
        codebooks: 16,
        codewords: 16,
        dim: 32,
        words,
        noise_sigma: 0.1,
        seed: 4242,
    })?;
    let emb = &data.embeddings;
    let scheme = SchemeConfig::new(8, 8, 32)?;
    let mut tc = TrainConfig::new(scheme);
    tc.iterations = iterations;
    tc.validate_every = (iterations / 10).max(1);
    tc.seed = seed;
    let (params, report) = train(emb, &tc)?;
    println!(
        "trained in {:.1}s, validation loss {:.4}",
        report.wall_time.as_secs_f64(),
        report.best_val_loss.unwrap_or(f64::NAN)
    );

    let (codes, books) = export_codes(&params, emb, &scheme)?;
    let table = balance_table(&codes);
    print!("{}", table.to_report().render_text());
    for (i, row) in table.counts.iter().enumerate() {
        println!("  codebook {i}: {row:?}");
    }

    let groups = shared_code_groups(&codes);
    println!(
        "{} distinct codes over {} words, {} shared",
        distinct_codes(&codes),
        codes.vocab_size(),
        groups.len()
    );
    for g in groups.iter().take(3) {
        let names: Vec<&str> = g.words.iter().take(6).map(|&w| emb.vocab()[w].as_str()).collect();
        println!("  {} x{}: {}", format_code(&g.code, 8), g.words.len(), names.join(" "));
    }

    let recon = reconstruct_embeddings(&codes, &books, emb.vocab().to_vec())?;
    let q = reconstruction_quality(emb, &recon)?;
    let nn = neighbor_overlap(emb, &recon, 10, 100, seed)?;
    let pq = pq_baseline(emb, 8, 8, DEFAULT_KMEANS_ITERATIONS, seed)?;
    println!(
        "learned loss {:.3} (mean cosine {:.3}), PQ loss {:.3}, top-10 neighbor overlap {:.3} +- {:.3}",
        q.mean_squared_distance, q.mean_cosine, pq.loss, nn.mean, nn.standard_error
    );
    Ok(Summary {
        dead_codewords: table.dead_codewords(),
        learned_loss: q.mean_squared_distance,
        pq_loss: pq.loss,
        overlap: nn.mean,
    })
}

#[allow(dead_code)]
fn main() -> codecomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    run_example(5000, iterations, seed)?;
    Ok(())
}
