//! Embeddings with a known compositional structure, for testing and demos.
//!
//! Codebook entries are drawn from `Uniform(-1, 1)`, each word gets a
//! uniformly random code, and its embedding is the exact sum of its
//! codewords plus isotropic Gaussian noise. The expected reconstruction
//! loss of the true codes is therefore `H * sigma^2`.

use crate::codec::{reconstruct_all, CodeMatrix, Codebooks};
use crate::embedding_io::EmbeddingMatrix;
use crate::error::Result;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub codebooks: usize,
    pub codewords: usize,
    pub dim: usize,
    pub words: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Synthetic {
    pub embeddings: EmbeddingMatrix,
    pub codes: CodeMatrix,
    pub books: Codebooks,
}

impl SyntheticSpec {
    /// Expected squared error per word of the generating codes.
    pub fn noise_floor(&self) -> f64 {
        self.dim as f64 * self.noise_sigma * self.noise_sigma
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<Synthetic> {
    let mut rng = Rng::new(spec.seed);
    let (m, k) = (spec.codebooks, spec.codewords);
    let books = Codebooks::new(m, k, rng.uniform_mat(m * k, spec.dim, -1.0, 1.0))?;
    let flat = (0..spec.words * m).map(|_| rng.below(k) as u16).collect();
    let codes = CodeMatrix::new(m, k, flat)?;
    let mut matrix = reconstruct_all(&codes, &books)?;
    if spec.noise_sigma > 0.0 {
        for x in matrix.as_mut_slice() {
            *x = (f64::from(*x) + spec.noise_sigma * rng.standard_normal()) as f32;
        }
    }
    Ok(Synthetic {
        embeddings: EmbeddingMatrix::with_generated_vocab(matrix),
        codes,
        books,
    })
}
