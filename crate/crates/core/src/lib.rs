//! Compress word embeddings into compositional codes.
//!
//! Every word is represented by `M` small integers, each selecting one of
//! `K` codewords from its own codebook; the word's embedding is the sum of
//! the selected codewords. Codes and codebooks are learned end to end by an
//! autoencoder whose bottleneck is a Gumbel-softmax relaxation of the `M`
//! one-hot choices.
//!
//! ```no_run
//! use codecomp::{codec, embedding_io, model::SchemeConfig, trainer};
//!
//! # fn main() -> codecomp::Result<()> {
//! let emb = embedding_io::read_text_embeddings("glove.txt", Some(10_000))?;
//! let scheme = SchemeConfig::new(16, 32, emb.dim())?;
//! let mut tc = trainer::TrainConfig::new(scheme);
//! tc.iterations = 20_000;
//! let (params, report) = trainer::train(&emb, &tc)?;
//! let (codes, books) = codec::export_codes(&params, &emb, &scheme)?;
//! codec::write_code_file(&codes, emb.vocab(), "codes.dcc")?;
//! codec::write_codebooks(&books, "books.dcb")?;
//! println!("best validation loss {:?}", report.best_val_loss);
//! # Ok(())
//! # }
//! ```

pub mod analysis;
mod binio;
pub mod cli;
pub mod codec;
pub mod embedding_io;
pub mod error;
pub mod model;
pub mod rng;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
