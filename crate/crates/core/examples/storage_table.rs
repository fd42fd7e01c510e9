//! Storage accounting for a 75K-word, 300-dimensional vocabulary under
//! several coding schemes, next to the raw float matrix.
//!
//! cargo run --example storage_table -- [vocab] [dim]

use codecomp::analysis::{size_report, SizeReport, MEGABYTE};
use codecomp::model::SchemeConfig;

pub fn run_example(vocab: usize, dim: usize) -> codecomp::Result<Vec<SizeReport>> {
    let schemes = [(8, 64), (16, 32), (32, 16), (64, 8)];
    println!(
        "{:>7} {:>9} {:>10} {:>10} {:>10} {:>8}",
        "scheme", "bits/word", "codes MB", "vectors MB", "total MB", "ratio"
    );
    let mut out = Vec::new();
    for (m, k) in schemes {
        let r = size_report(&SchemeConfig::new(m, k, dim)?, vocab);
        println!(
            "{:>7} {:>9} {:>10.2} {:>10.2} {:>10.2} {:>7.1}x",
            format!("{m}x{k}"),
            r.code_bits_per_word,
            r.code_bytes_exact as f64 / MEGABYTE,
            r.vector_bytes as f64 / MEGABYTE,
            r.total_bytes_exact as f64 / MEGABYTE,
            r.compression_ratio
        );
        out.push(r);
    }
    if let Some(r) = out.first() {
        println!("uncompressed f32 matrix: {:.2} MB", r.baseline_bytes as f64 / MEGABYTE);
    }
    let r = size_report(&SchemeConfig::new(32, 16, dim)?, vocab);
    println!(
        "a binary code over the same {} basis vectors needs {} bits and sums {} of them; \
         the 32x16 code needs {} bits and sums {}",
        r.num_vectors, r.binary_code_bits, r.binary_sum_vectors, r.code_bits_per_word,
        r.composition_sum_vectors
    );
    Ok(out)
}

#[allow(dead_code)]
fn main() -> codecomp::Result<()> {
    let mut args = std::env::args().skip(1);
    let vocab = args.next().and_then(|a| a.parse().ok()).unwrap_or(75_102);
    let dim = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);
    run_example(vocab, dim)?;
    Ok(())
}
