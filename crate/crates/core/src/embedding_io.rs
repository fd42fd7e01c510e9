//! Reading and writing embedding matrices.
//!
//! Two formats are supported:
//!
//! * text, one word per line followed by `H` whitespace-separated floats
//!   (the GloVe layout);
//! * binary, `DEM1` magic, a version byte, `u32` vocabulary size and
//!   dimension, row-major `f32` values, then the vocabulary as
//!   length-prefixed UTF-8 strings. All integers are little-endian.
//!
//! Word order is preserved everywhere since codes are indexed by position.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;

use crate::binio::{put_f32s, put_strings, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::tensor::Mat;

pub const BINARY_MAGIC: &[u8; 4] = b"DEM1";
pub const BINARY_VERSION: u8 = 1;

/// A vocabulary and its `|V| x H` embedding matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    vocab: Vec<String>,
    matrix: Mat,
}

impl EmbeddingMatrix {
    pub fn new(vocab: Vec<String>, matrix: Mat) -> Result<Self> {
        if vocab.len() != matrix.rows() {
            return Err(Error::data(format!(
                "{} words for {} embedding rows",
                vocab.len(),
                matrix.rows()
            )));
        }
        let mut seen = HashSet::with_capacity(vocab.len());
        for w in &vocab {
            if !seen.insert(w.as_str()) {
                return Err(Error::data(format!("duplicate word {w:?}")));
            }
        }
        Ok(EmbeddingMatrix { vocab, matrix })
    }

    /// Synthesizes `w0, w1, ...` as the vocabulary.
    pub fn with_generated_vocab(matrix: Mat) -> Self {
        let vocab = (0..matrix.rows()).map(|i| format!("w{i}")).collect();
        EmbeddingMatrix { vocab, matrix }
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.vocab.iter().position(|w| w == word)
    }

    pub fn into_parts(self) -> (Vec<String>, Mat) {
        (self.vocab, self.matrix)
    }
}

/// Parses the text format. `limit` caps the number of lines read.
pub fn parse_text_embeddings<R: BufRead>(reader: R, limit: Option<usize>) -> Result<EmbeddingMatrix> {
    let mut vocab = Vec::new();
    let mut seen = HashSet::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        if limit.is_some_and(|l| i >= l) {
            break;
        }
        let lineno = i + 1;
        let line = line?;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else {
            return Err(Error::data(format!("line {lineno}: empty line")));
        };
        let start = data.len();
        for tok in fields {
            let v: f32 = tok.parse().map_err(|_| {
                Error::data(format!("line {lineno}: non-numeric token {tok:?}"))
            })?;
            if !v.is_finite() {
                return Err(Error::data(format!("line {lineno}: non-finite value {tok:?}")));
            }
            data.push(v);
        }
        let n = data.len() - start;
        match dim {
            None => dim = Some(n),
            Some(d) if d != n => {
                return Err(Error::data(format!(
                    "line {lineno}: found {n} values, expected {d}"
                )))
            }
            Some(_) => {}
        }
        if !seen.insert(word.to_string()) {
            warn!("line {lineno}: duplicate word {word:?} ignored, keeping first occurrence");
            data.truncate(start);
            continue;
        }
        vocab.push(word.to_string());
    }
    let dim = dim.unwrap_or(0);
    let matrix = Mat::from_vec(vocab.len(), dim, data)?;
    EmbeddingMatrix::new(vocab, matrix)
}

pub fn read_text_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<EmbeddingMatrix> {
    let file = fs::File::open(path.as_ref())?;
    parse_text_embeddings(BufReader::new(file), limit)
}

/// Writes the text format. Floats use the shortest representation that
/// parses back to the same `f32`.
pub fn write_text_embeddings_to<W: Write>(emb: &EmbeddingMatrix, mut out: W) -> Result<()> {
    for word in &emb.vocab {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::data(format!(
                "word {word:?} cannot be written in the text format"
            )));
        }
    }
    for (word, row) in emb.vocab.iter().zip(emb.matrix.row_iter()) {
        write!(out, "{word}")?;
        for v in row {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_text_embeddings(emb: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    // Validate before creating the file so a rejected vocabulary leaves no output.
    let mut buf = Vec::new();
    write_text_embeddings_to(emb, &mut buf)?;
    let mut w = BufWriter::new(fs::File::create(path.as_ref())?);
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn encode_binary_matrix(emb: &EmbeddingMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + emb.matrix.as_slice().len() * 4);
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    put_u32(&mut out, emb.len())?;
    put_u32(&mut out, emb.dim())?;
    put_f32s(&mut out, emb.matrix.as_slice());
    put_strings(&mut out, &emb.vocab)?;
    Ok(out)
}

pub fn decode_binary_matrix(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let mut r = ByteReader::new(bytes, "embedding matrix");
    r.expect_magic(BINARY_MAGIC)?;
    r.expect_version(BINARY_VERSION)?;
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let data = r.f32s(rows * cols)?;
    let vocab = r.strings(rows)?;
    r.finish()?;
    EmbeddingMatrix::new(vocab, Mat::from_vec(rows, cols, data)?)
}

pub fn read_binary_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    decode_binary_matrix(&fs::read(path.as_ref())?)
}

pub fn write_binary_matrix(emb: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_binary_matrix(emb)?)?;
    Ok(())
}

/// Reads either format, choosing binary when the file starts with `DEM1`.
pub fn read_embeddings(path: impl AsRef<Path>, limit: Option<usize>) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.starts_with(BINARY_MAGIC) {
        let emb = decode_binary_matrix(&bytes)?;
        Ok(match limit {
            Some(l) if l < emb.len() => {
                let (vocab, m) = emb.into_parts();
                let keep: Vec<usize> = (0..l).collect();
                EmbeddingMatrix::new(vocab[..l].to_vec(), m.select_rows(&keep))?
            }
            _ => emb,
        })
    } else {
        parse_text_embeddings(bytes.as_slice(), limit)
    }
}
