//! Product quantization baseline.
//!
//! The `H` dimensions are split into `M` contiguous blocks and each block is
//! clustered independently with k-means. The resulting centroids are placed
//! into full-width codewords that are zero outside their block, so the
//! ordinary additive composition reproduces the PQ reconstruction.

use crate::codec::{CodeMatrix, Codebooks};
use crate::embedding_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::MAX_CODEWORDS;
use crate::rng::Rng;
use crate::tensor::Mat;

pub const DEFAULT_KMEANS_ITERATIONS: usize = 25;

/// Lloyd's k-means result on a set of points.
#[derive(Clone, Debug)]
pub struct KMeans {
    /// `k x d` centroids, stored in `f64`.
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each iteration.
    pub cost_history: Vec<f64>,
}

fn sq_dist(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &c)| {
            let d = f64::from(x) - c;
            d * d
        })
        .sum()
}

fn nearest(point: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: the first centroid is a uniform pick, each next one is
/// drawn with probability proportional to squared distance from the nearest
/// chosen centroid.
fn seed_centroids(points: &[&[f32]], k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let to_f64 = |p: &[f32]| p.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();
    let mut centroids = vec![to_f64(points[rng.below(points.len())])];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.uniform01() * total;
            let mut chosen = points.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.below(points.len())
        };
        let c = to_f64(points[pick]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// k-means with k-means++ seeding and at most `iterations` Lloyd steps.
/// A cluster that ends up empty takes over the point of the largest cluster
/// farthest from its centroid.
pub fn kmeans(points: &[&[f32]], k: usize, iterations: usize, rng: &mut Rng) -> Result<KMeans> {
    if k == 0 {
        return Err(Error::config("k-means needs k >= 1"));
    }
    if points.is_empty() {
        return Err(Error::config("k-means needs at least one point"));
    }
    let dim = points[0].len();
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignments = vec![usize::MAX; points.len()];
    let mut cost_history = Vec::with_capacity(iterations);
    for _ in 0..iterations.max(1) {
        let mut changed = false;
        let mut dist = vec![0f64; points.len()];
        for (i, p) in points.iter().enumerate() {
            let (j, d) = nearest(p, &centroids);
            changed |= assignments[i] != j;
            assignments[i] = j;
            dist[i] = d;
        }

        let mut sizes = vec![0usize; k];
        for &a in &assignments {
            sizes[a] += 1;
        }
        for empty in 0..k {
            if sizes[empty] != 0 {
                continue;
            }
            let largest = (0..k).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            if sizes[largest] < 2 {
                break;
            }
            let far = (0..points.len())
                .filter(|&i| assignments[i] == largest)
                .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                .unwrap();
            assignments[far] = empty;
            dist[far] = 0.0;
            sizes[largest] -= 1;
            sizes[empty] = 1;
            changed = true;
        }

        let mut sums = vec![vec![0f64; dim]; k];
        for (p, &a) in points.iter().zip(&assignments) {
            for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
                *s += f64::from(x);
            }
        }
        for j in 0..k {
            if sizes[j] > 0 {
                let n = sizes[j] as f64;
                centroids[j] = sums[j].iter().map(|s| s / n).collect();
            }
        }
        let cost: f64 = points
            .iter()
            .zip(&assignments)
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum();
        cost_history.push(cost);
        if !changed {
            break;
        }
    }
    Ok(KMeans {
        centroids,
        assignments,
        cost_history,
    })
}

#[derive(Clone, Debug)]
pub struct PqResult {
    pub codes: CodeMatrix,
    pub books: Codebooks,
    /// Mean squared reconstruction error per word.
    pub loss: f64,
    /// Mean loss per word after each k-means iteration, summed over blocks.
    /// Blocks that converged early hold their final value.
    pub loss_history: Vec<f64>,
}

pub fn pq_baseline(
    emb: &EmbeddingMatrix,
    codebooks: usize,
    codewords: usize,
    iterations: usize,
    seed: u64,
) -> Result<PqResult> {
    let h = emb.dim();
    if codebooks == 0 || !h.is_multiple_of(codebooks) {
        return Err(Error::config(format!(
            "H = {h} is not divisible into {codebooks} blocks"
        )));
    }
    if codewords == 0 || codewords > MAX_CODEWORDS {
        return Err(Error::config(format!("invalid codebook size K = {codewords}")));
    }
    let n = emb.len();
    if n == 0 {
        return Err(Error::config("PQ needs at least one embedding"));
    }
    let block = h / codebooks;
    let mut rng = Rng::new(seed);
    let mut codes = vec![0u16; n * codebooks];
    let mut vectors = Mat::zeros(codebooks * codewords, h);
    let mut block_histories = Vec::with_capacity(codebooks);
    for i in 0..codebooks {
        let cols = i * block..(i + 1) * block;
        let points: Vec<&[f32]> = emb.matrix().row_iter().map(|r| &r[cols.clone()]).collect();
        let km = kmeans(&points, codewords, iterations, &mut rng.fork())?;
        for (w, &a) in km.assignments.iter().enumerate() {
            codes[w * codebooks + i] = a as u16;
        }
        for (k, c) in km.centroids.iter().enumerate() {
            let row = vectors.row_mut(i * codewords + k);
            for (dst, &v) in row[cols.clone()].iter_mut().zip(c) {
                *dst = v as f32;
            }
        }
        block_histories.push(km.cost_history);
    }
    let steps = block_histories.iter().map(Vec::len).max().unwrap_or(0);
    let loss_history: Vec<f64> = (0..steps)
        .map(|t| {
            block_histories
                .iter()
                .map(|hst| hst[t.min(hst.len() - 1)])
                .sum::<f64>()
                / n as f64
        })
        .collect();
    let codes = CodeMatrix::new(codebooks, codewords, codes)?;
    let books = Codebooks::new(codebooks, codewords, vectors)?;
    let recon = crate::codec::reconstruct_all(&codes, &books)?;
    let loss = crate::model::mean_squared_distance(&recon, emb.matrix());
    Ok(PqResult {
        codes,
        books,
        loss,
        loss_history,
    })
}
