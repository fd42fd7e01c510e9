use crate::embedding_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborOverlap {
    /// Mean over queries of the shared fraction of top-k neighbors.
    pub mean: f64,
    pub standard_error: f64,
    pub queries: Vec<usize>,
    pub per_query: Vec<f64>,
}

/// Rows scaled to unit length, in `f64`; zero rows stay zero.
fn normalized(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| {
            let norm = r.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
            r.iter().map(|&x| f64::from(x) * inv).collect()
        })
        .collect()
}

/// Top-`k` cosine neighbors of `query`, excluding itself. Ties go to the
/// lower index.
fn top_k(rows: &[Vec<f64>], query: usize, k: usize) -> Vec<usize> {
    let q = &rows[query];
    let mut scored: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != query)
        .map(|(i, r)| (q.iter().zip(r).map(|(a, b)| a * b).sum(), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out: Vec<usize> = scored[..k].iter().map(|&(_, i)| i).collect();
    out.sort_unstable();
    out
}

/// For `sample` seeded random query words, the fraction of each word's `k`
/// nearest cosine neighbors that are the same in both spaces. Exact
/// brute-force search.
pub fn neighbor_overlap(
    original: &EmbeddingMatrix,
    recon: &EmbeddingMatrix,
    k: usize,
    sample: usize,
    seed: u64,
) -> Result<NeighborOverlap> {
    if original.vocab() != recon.vocab() {
        return Err(Error::data("vocabularies differ in content or order"));
    }
    let n = original.len();
    if k == 0 || k >= n {
        return Err(Error::config(format!(
            "k = {k} must be in [1, |V|) with |V| = {n}"
        )));
    }
    let a = normalized(original.matrix());
    let b = normalized(recon.matrix());
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let queries: Vec<usize> = order.into_iter().take(sample.min(n)).collect();
    let per_query: Vec<f64> = queries
        .iter()
        .map(|&q| {
            let na = top_k(&a, q, k);
            let nb = top_k(&b, q, k);
            let shared = na.iter().filter(|i| nb.binary_search(i).is_ok()).count();
            shared as f64 / k as f64
        })
        .collect();
    let count = per_query.len() as f64;
    let mean = if per_query.is_empty() {
        0.0
    } else {
        per_query.iter().sum::<f64>() / count
    };
    let standard_error = if per_query.len() > 1 {
        let var = per_query.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0);
        (var / count).sqrt()
    } else {
        0.0
    };
    Ok(NeighborOverlap {
        mean,
        standard_error,
        queries,
        per_query,
    })
}
