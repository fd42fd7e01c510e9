//! How the relaxed one-hot sharpens toward the argmax as the softmax
//! temperature drops.
//!
//! cargo run --example temperature -- [seed]

use codecomp::model::{argmax, grouped_softmax};
use codecomp::rng::Rng;

/// Returns, per temperature, the largest distance from the exact one-hot.
pub fn run_example(seed: u64) -> Vec<(f32, f32)> {
    let mut rng = Rng::new(seed);
    let k = 8;
    let logits: Vec<f32> = (0..k).map(|_| rng.uniform(0.01, 3.0).ln() + rng.gumbel()).collect();
    let best = argmax(&logits);
    println!("perturbed log-scores: {logits:.3?} (argmax {best})");
    let mut out = Vec::new();
    for tau in [4.0, 1.0, 0.5, 0.1, 0.01] {
        let mut d = vec![0.0; k];
        grouped_softmax(&logits, k, tau, &mut d);
        let dist = d
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == best { 1.0 - v } else { v })
            .fold(0.0f32, f32::max);
        println!("tau {tau:>5}: {d:.3?}  max distance from one-hot {dist:.2e}");
        out.push((tau, dist));
    }
    out
}

#[allow(dead_code)]
fn main() {
    let seed = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    run_example(seed);
}
