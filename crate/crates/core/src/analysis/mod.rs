//! Storage accounting, code statistics, a product-quantization baseline, and
//! reconstruction quality metrics.

mod balance;
mod neighbors;
mod pq;
mod report;
mod size;

pub use balance::{balance_table, distinct_codes, format_code, shared_code_groups, BalanceTable, SharedGroup};
pub use neighbors::{neighbor_overlap, NeighborOverlap};
pub use pq::{kmeans, pq_baseline, KMeans, PqResult, DEFAULT_KMEANS_ITERATIONS};
pub use report::Report;
pub use size::{size_report, SizeReport, MEGABYTE};

use crate::embedding_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::mean_squared_distance;

/// Cosine similarity in `f64`; zero when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// How well a reconstruction matches the original embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Quality {
    /// Mean over words of the squared L2 distance.
    pub mean_squared_distance: f64,
    pub mean_cosine: f64,
    pub min_cosine: f64,
    pub cosines: Vec<f64>,
}

pub fn reconstruction_quality(original: &EmbeddingMatrix, recon: &EmbeddingMatrix) -> Result<Quality> {
    if original.vocab() != recon.vocab() || original.dim() != recon.dim() {
        return Err(Error::data("original and reconstruction differ in vocabulary or dimension"));
    }
    let cosines: Vec<f64> = original
        .matrix()
        .row_iter()
        .zip(recon.matrix().row_iter())
        .map(|(a, b)| cosine(a, b))
        .collect();
    let n = cosines.len().max(1) as f64;
    Ok(Quality {
        mean_squared_distance: mean_squared_distance(recon.matrix(), original.matrix()),
        mean_cosine: cosines.iter().sum::<f64>() / n,
        min_cosine: cosines.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
        cosines,
    })
}

impl Quality {
    pub fn to_report(&self) -> Report {
        let mut r = Report::new("reconstruction quality");
        r.push("words", self.cosines.len())
            .push("mean_squared_distance", format!("{:.6}", self.mean_squared_distance))
            .push("mean_cosine", format!("{:.6}", self.mean_cosine))
            .push("min_cosine", format!("{:.6}", self.min_cosine));
        r
    }
}
