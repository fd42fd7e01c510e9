//! The on-disk path: embeddings in, checkpoint, code and codebook files
//! out, and back to embeddings again, checking that every file reloads to
//! exactly what was written.
//!
//! cargo run --release --example file_roundtrip -- [iterations]

use codecomp::codec::{
    export_codes, read_code_file, read_codebooks, reconstruct_embeddings, write_code_file,
    write_codebooks,
};
use codecomp::embedding_io::{read_embeddings, write_binary_matrix, write_text_embeddings};
use codecomp::model::mean_squared_distance;
use codecomp::synthetic::{generate, SyntheticSpec};
use codecomp::trainer::{read_checkpoint, train_with_checkpoint, TrainConfig};
use codecomp::model::SchemeConfig;

pub fn run_example(iterations: u64, dir: &std::path::Path) -> codecomp::Result<f64> {
    let data = generate(&SyntheticSpec {
        codebooks: 4,
        codewords: 8,
        dim: 16,
        words: 500,
        noise_sigma: 0.05,
        seed: 7,
    })?;
    let text = dir.join("emb.txt");
    let binary = dir.join("emb.bin");
    write_text_embeddings(&data.embeddings, &text)?;
    write_binary_matrix(&data.embeddings, &binary)?;
    let emb = read_embeddings(&text, None)?;
    assert_eq!(emb.matrix(), read_embeddings(&binary, None)?.matrix());
    println!(
        "text file {} bytes, binary file {} bytes",
        std::fs::metadata(&text)?.len(),
        std::fs::metadata(&binary)?.len()
    );

    let mut tc = TrainConfig::new(SchemeConfig::new(4, 8, 16)?);
    tc.iterations = iterations;
    tc.validate_every = (iterations / 10).max(1);
    let ckpt = dir.join("model.ckpt");
    let (params, report) = train_with_checkpoint(&emb, &tc, Some(&ckpt))?;
    let loaded = read_checkpoint(&ckpt)?;
    assert_eq!(loaded.params, params);
    println!(
        "checkpoint from iteration {} (validation loss {:.4})",
        loaded.iteration,
        report.best_val_loss.unwrap_or(f64::NAN)
    );

    let (codes, books) = export_codes(&loaded.params, &emb, &loaded.scheme)?;
    let codes_path = dir.join("words.codes");
    let books_path = dir.join("words.books");
    write_code_file(&codes, emb.vocab(), &codes_path)?;
    write_codebooks(&books, &books_path)?;
    let (codes2, vocab2) = read_code_file(&codes_path)?;
    let books2 = read_codebooks(&books_path)?;
    assert_eq!(codes2, codes);
    println!(
        "codes file {} bytes for {} words, codebooks file {} bytes",
        std::fs::metadata(&codes_path)?.len(),
        codes.vocab_size(),
        std::fs::metadata(&books_path)?.len()
    );

    let recon = reconstruct_embeddings(&codes2, &books2, vocab2)?;
    let loss = mean_squared_distance(recon.matrix(), emb.matrix());
    println!("reconstruction loss from files: {loss:.4}");
    Ok(loss)
}

#[allow(dead_code)]
fn main() -> codecomp::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5_000);
    let dir = std::env::temp_dir().join(format!("codecomp-roundtrip-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let result = run_example(iterations, &dir);
    let _ = std::fs::remove_dir_all(&dir);
    result.map(|_| ())
}
