//! Cross-module properties checked against independent brute-force oracles.

use std::collections::BTreeMap;

use codecomp::analysis::{
    balance_table, distinct_codes, kmeans, neighbor_overlap, pq_baseline, shared_code_groups,
};
use codecomp::codec::{
    compose_embedding, decode_code_file, encode_code_file, reconstruct_all, CodeMatrix, Codebooks,
};
use codecomp::embedding_io::{
    decode_binary_matrix, encode_binary_matrix, parse_text_embeddings, write_text_embeddings_to,
    EmbeddingMatrix,
};
use codecomp::model::{forward, init_params, SchemeConfig};
use codecomp::rng::{sample_gumbel, Rng};
use codecomp::synthetic::{generate, SyntheticSpec};
use codecomp::tensor::Mat;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-1e6f32..1e6, rows * cols)
        .prop_map(move |d| Mat::from_vec(rows, cols, d).unwrap())
}

fn small_embeddings() -> impl Strategy<Value = EmbeddingMatrix> {
    (0usize..12, 1usize..6)
        .prop_flat_map(|(n, h)| matrix(n, h))
        .prop_map(EmbeddingMatrix::with_generated_vocab)
}

fn codes_strategy() -> impl Strategy<Value = CodeMatrix> {
    (1usize..6, 1u32..5, 0usize..60).prop_flat_map(|(m, bits, words)| {
        let k = 1usize << bits;
        prop::collection::vec(0..k as u16, words * m)
            .prop_map(move |flat| CodeMatrix::new(m, k, flat).unwrap())
    })
}

proptest! {
    #[test]
    fn text_embeddings_roundtrip_exactly(emb in small_embeddings()) {
        let mut buf = Vec::new();
        write_text_embeddings_to(&emb, &mut buf).unwrap();
        if emb.is_empty() {
            prop_assert!(buf.is_empty());
        } else {
            let back = parse_text_embeddings(&buf[..], None).unwrap();
            prop_assert_eq!(back.vocab(), emb.vocab());
            prop_assert_eq!(back.matrix(), emb.matrix());
        }
    }

    #[test]
    fn binary_embeddings_roundtrip_exactly(emb in small_embeddings()) {
        let back = decode_binary_matrix(&encode_binary_matrix(&emb).unwrap()).unwrap();
        prop_assert_eq!(back.vocab(), emb.vocab());
        prop_assert_eq!(back.matrix(), emb.matrix());
    }

    #[test]
    fn code_file_roundtrips_with_vocab(codes in codes_strategy()) {
        let vocab: Vec<String> = (0..codes.vocab_size()).map(|i| format!("tok{i}")).collect();
        let (back, names) = decode_code_file(&encode_code_file(&codes, &vocab).unwrap()).unwrap();
        prop_assert_eq!(back, codes);
        prop_assert_eq!(names, vocab);
    }

    #[test]
    fn shared_groups_match_brute_force(codes in codes_strategy()) {
        let mut by_code: BTreeMap<Vec<u16>, Vec<usize>> = BTreeMap::new();
        for w in 0..codes.vocab_size() {
            by_code.entry(codes.code(w).to_vec()).or_default().push(w);
        }
        let groups = shared_code_groups(&codes);
        let want: usize = by_code.values().filter(|w| w.len() >= 2).count();
        prop_assert_eq!(groups.len(), want);
        for g in &groups {
            prop_assert_eq!(Some(&g.words), by_code.get(&g.code));
        }
        prop_assert!(groups.windows(2).all(|p| p[0].words.len() >= p[1].words.len()));
        // Every word is either in exactly one group or has a unique code.
        let grouped: usize = groups.iter().map(|g| g.words.len()).sum();
        prop_assert_eq!(grouped + (distinct_codes(&codes) - groups.len()), codes.vocab_size());
    }

    #[test]
    fn balance_counts_sum_to_vocab(codes in codes_strategy()) {
        let t = balance_table(&codes);
        for (i, row) in t.counts.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<u64>(), codes.vocab_size() as u64);
            for (k, &c) in row.iter().enumerate() {
                let brute = (0..codes.vocab_size()).filter(|&w| codes.code(w)[i] as usize == k).count();
                prop_assert_eq!(c, brute as u64);
            }
        }
    }

    #[test]
    fn soft_codes_lie_on_the_simplex(seed in any::<u64>(), tau in 0.05f32..4.0) {
        let cfg = SchemeConfig::new(3, 4, 5).unwrap().with_tau(tau).unwrap();
        let mut rng = Rng::new(seed);
        let params = init_params(&cfg, &mut rng);
        let batch = rng.uniform_mat(4, 5, -2.0, 2.0);
        let noise = sample_gumbel(&mut rng, 4, 12);
        let trace = forward(&params, &batch, Some(&noise), &cfg).unwrap();
        for row in trace.soft.row_iter() {
            for group in row.chunks_exact(4) {
                prop_assert!(group.iter().all(|&d| (0.0..=1.0).contains(&d)));
                let sum: f64 = group.iter().map(|&d| f64::from(d)).sum();
                prop_assert!((sum - 1.0).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn composition_matches_scalar_sum() {
    let mut rng = Rng::new(8);
    let books = Codebooks::new(4, 8, rng.uniform_mat(32, 16, -1.0, 1.0)).unwrap();
    for _ in 0..50 {
        let code: Vec<u16> = (0..4).map(|_| rng.below(8) as u16).collect();
        let mut want = [0f64; 16];
        for (i, &c) in code.iter().enumerate() {
            for (d, w) in want.iter_mut().enumerate() {
                *w += f64::from(books.vectors().get(i * 8 + c as usize, d));
            }
        }
        let want: Vec<f32> = want.iter().map(|&x| x as f32).collect();
        assert_eq!(compose_embedding(&code, &books).unwrap(), want);
    }
}

#[test]
fn generated_codes_reconstruct_their_embeddings() {
    let data = generate(&SyntheticSpec {
        codebooks: 3,
        codewords: 4,
        dim: 6,
        words: 40,
        noise_sigma: 0.0,
        seed: 12,
    })
    .unwrap();
    assert_eq!(&reconstruct_all(&data.codes, &data.books).unwrap(), data.embeddings.matrix());
}

#[test]
fn unrelated_spaces_overlap_at_chance() {
    let (n, k) = (300, 10);
    let mut rng = Rng::new(6);
    let mut random = || {
        let data = (0..n * 8).map(|_| rng.standard_normal() as f32).collect();
        EmbeddingMatrix::with_generated_vocab(Mat::from_vec(n, 8, data).unwrap())
    };
    let a = random();
    let b = random();
    let ov = neighbor_overlap(&a, &b, k, 200, 3).unwrap();
    let chance = k as f64 / (n - 1) as f64;
    assert!(
        (ov.mean - chance).abs() <= 3.0 * ov.standard_error.max(1e-3),
        "overlap {} vs chance {chance} (se {})",
        ov.mean,
        ov.standard_error
    );
}

#[test]
fn kmeans_cost_never_increases() {
    let mut rng = Rng::new(10);
    let pts = rng.uniform_mat(400, 3, -1.0, 1.0);
    let rows: Vec<&[f32]> = pts.row_iter().collect();
    let km = kmeans(&rows, 16, 50, &mut Rng::new(2)).unwrap();
    assert!(km.cost_history.windows(2).all(|w| w[1] <= w[0]), "{:?}", km.cost_history);
    assert!(km.assignments.iter().all(|&a| a < 16));
}

#[test]
fn pq_loss_matches_its_own_reconstruction() {
    let data = generate(&SyntheticSpec {
        codebooks: 4,
        codewords: 8,
        dim: 16,
        words: 500,
        noise_sigma: 0.01,
        seed: 3,
    })
    .unwrap();
    let pq = pq_baseline(&data.embeddings, 4, 8, 25, 1).unwrap();
    let recon = reconstruct_all(&pq.codes, &pq.books).unwrap();
    let mse = codecomp::model::mean_squared_distance(&recon, data.embeddings.matrix());
    assert!((mse - pq.loss).abs() <= 1e-6 * pq.loss.max(1.0), "{mse} vs {}", pq.loss);
    assert!(pq.loss_history.windows(2).all(|w| w[1] <= w[0]));
}
