//! Discrete codes, codebooks, and their on-disk formats.
//!
//! A word's code is `M` components in `[0, K)`; its embedding is the sum of
//! the selected codeword from each codebook. Codes are stored 0-based.
//!
//! Code records are bit-packed with `log2(K)` bits per component, LSB-first,
//! and each word's record is padded to a whole number of bytes so any word
//! can be located in O(1).
//!
//! Code file: `DCC1`, version `1`, `u32` M, `u32` K, `u32` vocabulary size,
//! the packed records, then the vocabulary as `u32` length + UTF-8 bytes.
//!
//! Codebook file: `DCB1`, version `1`, `u32` M, `u32` K, `u32` H, then
//! `M * K * H` row-major `f32` values. Row `i * K + k` is codeword `k` of
//! codebook `i`. All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use crate::binio::{put_f32s, put_strings, put_u32, ByteReader};
use crate::embedding_io::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::{argmax, scores, ModelParams, SchemeConfig, MAX_CODEWORDS};
use crate::rng::Rng;
use crate::tensor::Mat;

pub const CODE_MAGIC: &[u8; 4] = b"DCC1";
pub const CODEBOOK_MAGIC: &[u8; 4] = b"DCB1";
pub const FORMAT_VERSION: u8 = 1;

/// Words encoded per chunk during export.
const EXPORT_CHUNK: usize = 4096;

/// Codes for a whole vocabulary, `M` components per word.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeMatrix {
    codebooks: usize,
    codewords: usize,
    codes: Vec<u16>,
}

impl CodeMatrix {
    pub fn new(codebooks: usize, codewords: usize, codes: Vec<u16>) -> Result<Self> {
        if codebooks == 0 {
            return Err(Error::config("code matrix needs M >= 1"));
        }
        if codewords == 0 || codewords > MAX_CODEWORDS {
            return Err(Error::config(format!("invalid codebook size K = {codewords}")));
        }
        if !codes.len().is_multiple_of(codebooks) {
            return Err(Error::data(format!(
                "{} code components is not a multiple of M = {codebooks}",
                codes.len()
            )));
        }
        if let Some(p) = codes.iter().position(|&c| c as usize >= codewords) {
            return Err(Error::data(format!(
                "word {} component {} has code {} outside [0, {codewords})",
                p / codebooks,
                p % codebooks,
                codes[p]
            )));
        }
        Ok(CodeMatrix {
            codebooks,
            codewords,
            codes,
        })
    }

    /// `M`
    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    /// `K`
    pub fn codewords(&self) -> usize {
        self.codewords
    }

    pub fn vocab_size(&self) -> usize {
        self.codes.len() / self.codebooks
    }

    pub fn code(&self, word: usize) -> &[u16] {
        &self.codes[word * self.codebooks..(word + 1) * self.codebooks]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> {
        self.codes.chunks_exact(self.codebooks)
    }

    pub fn as_slice(&self) -> &[u16] {
        &self.codes
    }
}

/// `M` codebooks of `K` codewords, stored as an `MK x H` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebooks {
    codebooks: usize,
    codewords: usize,
    vectors: Mat,
}

impl Codebooks {
    pub fn new(codebooks: usize, codewords: usize, vectors: Mat) -> Result<Self> {
        if codebooks == 0 || codewords == 0 {
            return Err(Error::config("codebooks need M >= 1 and K >= 1"));
        }
        if vectors.rows() != codebooks * codewords {
            return Err(Error::data(format!(
                "{} codeword rows for a {codebooks}x{codewords} scheme",
                vectors.rows()
            )));
        }
        vectors.check_finite("codebooks")?;
        Ok(Codebooks {
            codebooks,
            codewords,
            vectors,
        })
    }

    pub fn from_params(params: &ModelParams, cfg: &SchemeConfig) -> Result<Self> {
        params.check_shapes(cfg)?;
        Codebooks::new(cfg.codebooks, cfg.codewords, params.codebooks.clone())
    }

    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    pub fn codewords(&self) -> usize {
        self.codewords
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vectors(&self) -> &Mat {
        &self.vectors
    }

    /// Codeword `k` of codebook `i`.
    pub fn codeword(&self, i: usize, k: usize) -> &[f32] {
        self.vectors.row(i * self.codewords + k)
    }

    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Codebooks::new(self.codebooks, self.codewords, self.vectors.scale(factor)?)
    }
}

fn export_with(
    params: &ModelParams,
    emb: &EmbeddingMatrix,
    cfg: &SchemeConfig,
    mut noise: Option<&mut Rng>,
) -> Result<(CodeMatrix, Codebooks)> {
    if emb.dim() != cfg.dim {
        return Err(Error::config(format!(
            "embedding dimension {} does not match scheme H = {}",
            emb.dim(),
            cfg.dim
        )));
    }
    let (m, k) = (cfg.codebooks, cfg.codewords);
    let mut codes = Vec::with_capacity(emb.len() * m);
    let all: Vec<usize> = (0..emb.len()).collect();
    for chunk in all.chunks(EXPORT_CHUNK) {
        let batch = emb.matrix().select_rows(chunk);
        let alpha = scores(params, &batch, cfg)?;
        for row in alpha.row_iter() {
            for group in row.chunks_exact(k) {
                let c = match noise.as_deref_mut() {
                    None => argmax(group),
                    Some(rng) => {
                        let noisy: Vec<f32> = group.iter().map(|&a| a.ln() + rng.gumbel()).collect();
                        argmax(&noisy)
                    }
                };
                codes.push(c as u16);
            }
        }
    }
    Ok((
        CodeMatrix::new(m, k, codes)?,
        Codebooks::from_params(params, cfg)?,
    ))
}

/// Deterministic export: each component is the argmax of the noise-free
/// scores, ties to the smallest index.
pub fn export_codes(
    params: &ModelParams,
    emb: &EmbeddingMatrix,
    cfg: &SchemeConfig,
) -> Result<(CodeMatrix, Codebooks)> {
    export_with(params, emb, cfg, None)
}

/// Export that samples each component from the Gumbel-perturbed scores
/// instead of taking the plain argmax.
pub fn export_codes_noisy(
    params: &ModelParams,
    emb: &EmbeddingMatrix,
    cfg: &SchemeConfig,
    rng: &mut Rng,
) -> Result<(CodeMatrix, Codebooks)> {
    export_with(params, emb, cfg, Some(rng))
}

/// Sum of the selected codewords, accumulated in `f64` with the codebook
/// index ascending.
pub fn compose_embedding(code: &[u16], books: &Codebooks) -> Result<Vec<f32>> {
    if code.len() != books.codebooks {
        return Err(Error::data(format!(
            "code has {} components, codebooks have M = {}",
            code.len(),
            books.codebooks
        )));
    }
    let mut acc = vec![0f64; books.dim()];
    for (i, &c) in code.iter().enumerate() {
        if c as usize >= books.codewords {
            return Err(Error::data(format!(
                "component {i} is {c}, outside [0, {})",
                books.codewords
            )));
        }
        for (a, &v) in acc.iter_mut().zip(books.codeword(i, c as usize)) {
            *a += f64::from(v);
        }
    }
    Ok(acc.into_iter().map(|a| a as f32).collect())
}

fn check_compatible(codes: &CodeMatrix, books: &Codebooks) -> Result<()> {
    if codes.codebooks != books.codebooks || codes.codewords != books.codewords {
        return Err(Error::data(format!(
            "codes are {}x{} but codebooks are {}x{}",
            codes.codebooks, codes.codewords, books.codebooks, books.codewords
        )));
    }
    Ok(())
}

/// Composes every word, returning a `|V| x H` matrix.
pub fn reconstruct_all(codes: &CodeMatrix, books: &Codebooks) -> Result<Mat> {
    check_compatible(codes, books)?;
    let mut data = Vec::with_capacity(codes.vocab_size() * books.dim());
    for code in codes.iter() {
        data.extend(compose_embedding(code, books)?);
    }
    Mat::from_vec(codes.vocab_size(), books.dim(), data)
}

/// [`reconstruct_all`] with the vocabulary attached.
pub fn reconstruct_embeddings(
    codes: &CodeMatrix,
    books: &Codebooks,
    vocab: Vec<String>,
) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::new(vocab, reconstruct_all(codes, books)?)
}

fn bits_per_component(k: usize) -> Result<u32> {
    if !k.is_power_of_two() {
        return Err(Error::config(format!(
            "bit packing needs K to be a power of two, got {k}"
        )));
    }
    Ok(k.trailing_zeros())
}

/// Bytes per packed word record, `ceil(M * log2(K) / 8)`.
pub fn record_bytes(codebooks: usize, codewords: usize) -> Result<usize> {
    Ok((codebooks * bits_per_component(codewords)? as usize).div_ceil(8))
}

fn pack_record(code: &[u16], bits: u32, out: &mut [u8]) {
    let mut acc: u64 = 0;
    let mut filled = 0u32;
    let mut pos = 0;
    for &c in code {
        acc |= u64::from(c) << filled;
        filled += bits;
        while filled >= 8 {
            out[pos] = acc as u8;
            pos += 1;
            acc >>= 8;
            filled -= 8;
        }
    }
    if filled > 0 {
        out[pos] = acc as u8;
    }
}

fn unpack_record(bytes: &[u8], bits: u32, codebooks: usize, out: &mut Vec<u16>) -> Option<()> {
    let mask = (1u64 << bits) - 1;
    let mut acc: u64 = 0;
    let mut avail = 0u32;
    let mut pos = 0;
    for _ in 0..codebooks {
        while avail < bits {
            acc |= u64::from(bytes[pos]) << avail;
            pos += 1;
            avail += 8;
        }
        out.push((acc & mask) as u16);
        acc >>= bits;
        avail -= bits;
    }
    // Leftover padding bits must be zero.
    (acc == 0 && bytes[pos..].iter().all(|&b| b == 0)).then_some(())
}

fn write_code_header(codes: &CodeMatrix, out: &mut Vec<u8>) -> Result<()> {
    out.extend_from_slice(CODE_MAGIC);
    out.push(FORMAT_VERSION);
    put_u32(out, codes.codebooks)?;
    put_u32(out, codes.codewords)?;
    put_u32(out, codes.vocab_size())
}

/// Header and packed records, without the vocabulary section.
pub fn pack_codes(codes: &CodeMatrix) -> Result<Vec<u8>> {
    let bits = bits_per_component(codes.codewords)?;
    let per_word = record_bytes(codes.codebooks, codes.codewords)?;
    let mut out = Vec::with_capacity(17 + per_word * codes.vocab_size());
    write_code_header(codes, &mut out)?;
    let start = out.len();
    out.resize(start + per_word * codes.vocab_size(), 0);
    for (code, rec) in codes
        .iter()
        .zip(out[start..].chunks_exact_mut(per_word.max(1)))
    {
        pack_record(code, bits, rec);
    }
    Ok(out)
}

fn read_codes(r: &mut ByteReader<'_>) -> Result<CodeMatrix> {
    r.expect_magic(CODE_MAGIC)?;
    r.expect_version(FORMAT_VERSION)?;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let vocab = r.u32()? as usize;
    if m == 0 || k == 0 || k > MAX_CODEWORDS {
        return Err(Error::data(format!("code file header has invalid scheme {m}x{k}")));
    }
    let bits = bits_per_component(k).map_err(|e| Error::data(e.to_string()))?;
    let per_word = record_bytes(m, k)?;
    let mut codes = Vec::with_capacity(vocab * m);
    for w in 0..vocab {
        let at = r.offset();
        let rec = r.take(per_word)?;
        unpack_record(rec, bits, m, &mut codes).ok_or_else(|| {
            Error::data(format!("word {w}: nonzero padding bits in record at byte offset {at}"))
        })?;
    }
    CodeMatrix::new(m, k, codes)
}

/// Inverse of [`pack_codes`].
pub fn unpack_codes(bytes: &[u8]) -> Result<CodeMatrix> {
    let mut r = ByteReader::new(bytes, "code stream");
    let codes = read_codes(&mut r)?;
    r.finish()?;
    Ok(codes)
}

pub fn encode_code_file(codes: &CodeMatrix, vocab: &[String]) -> Result<Vec<u8>> {
    if vocab.len() != codes.vocab_size() {
        return Err(Error::data(format!(
            "{} words for {} codes",
            vocab.len(),
            codes.vocab_size()
        )));
    }
    let mut out = pack_codes(codes)?;
    put_strings(&mut out, vocab)?;
    Ok(out)
}

pub fn decode_code_file(bytes: &[u8]) -> Result<(CodeMatrix, Vec<String>)> {
    let mut r = ByteReader::new(bytes, "code file");
    let codes = read_codes(&mut r)?;
    let vocab = r.strings(codes.vocab_size())?;
    r.finish()?;
    Ok((codes, vocab))
}

pub fn write_code_file(codes: &CodeMatrix, vocab: &[String], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_code_file(codes, vocab)?)?;
    Ok(())
}

pub fn read_code_file(path: impl AsRef<Path>) -> Result<(CodeMatrix, Vec<String>)> {
    decode_code_file(&fs::read(path.as_ref())?)
}

pub fn encode_codebooks(books: &Codebooks) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(17 + books.vectors.as_slice().len() * 4);
    out.extend_from_slice(CODEBOOK_MAGIC);
    out.push(FORMAT_VERSION);
    put_u32(&mut out, books.codebooks)?;
    put_u32(&mut out, books.codewords)?;
    put_u32(&mut out, books.dim())?;
    put_f32s(&mut out, books.vectors.as_slice());
    Ok(out)
}

pub fn decode_codebooks(bytes: &[u8]) -> Result<Codebooks> {
    let mut r = ByteReader::new(bytes, "codebook file");
    r.expect_magic(CODEBOOK_MAGIC)?;
    r.expect_version(FORMAT_VERSION)?;
    let m = r.u32()? as usize;
    let k = r.u32()? as usize;
    let h = r.u32()? as usize;
    let data = r.f32s(m * k * h)?;
    r.finish()?;
    Codebooks::new(m, k, Mat::from_vec(m * k, h, data)?)
        .map_err(|e| Error::data(e.to_string()))
}

pub fn write_codebooks(books: &Codebooks, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), encode_codebooks(books)?)?;
    Ok(())
}

pub fn read_codebooks(path: impl AsRef<Path>) -> Result<Codebooks> {
    decode_codebooks(&fs::read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    fn random_books(rng: &mut Rng, m: usize, k: usize, h: usize) -> Codebooks {
        Codebooks::new(m, k, rng.uniform_mat(m * k, h, -1.0, 1.0)).unwrap()
    }

    #[test]
    fn compose_zero_books() {
        let books = Codebooks::new(3, 4, Mat::zeros(12, 5)).unwrap();
        assert_eq!(compose_embedding(&[1, 3, 0], &books).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn compose_single_codebook_is_codeword() {
        let mut rng = Rng::new(1);
        let books = random_books(&mut rng, 1, 8, 6);
        assert_eq!(compose_embedding(&[5], &books).unwrap(), books.codeword(0, 5));
    }

    #[test]
    fn compose_matches_scalar_sum() {
        let mut rng = Rng::new(2);
        let books = random_books(&mut rng, 4, 8, 16);
        let code: Vec<u16> = (0..4).map(|_| rng.below(8) as u16).collect();
        let got = compose_embedding(&code, &books).unwrap();
        for d in 0..16 {
            let mut s = 0f64;
            for i in 0..4 {
                s += f64::from(books.vectors.get(i * 8 + code[i] as usize, d));
            }
            assert_eq!(got[d], s as f32);
        }
    }

    #[test]
    fn compose_rejects_out_of_range() {
        let books = Codebooks::new(2, 4, Mat::zeros(8, 2)).unwrap();
        assert!(matches!(compose_embedding(&[0, 4], &books), Err(Error::Data(_))));
        assert!(matches!(compose_embedding(&[0], &books), Err(Error::Data(_))));
    }

    #[test]
    fn compose_is_linear_in_codebooks() {
        let mut rng = Rng::new(3);
        let books = random_books(&mut rng, 3, 4, 7);
        let code = [2u16, 0, 3];
        let base = compose_embedding(&code, &books).unwrap();
        let scaled = compose_embedding(&code, &books.scaled(2.0).unwrap()).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert_eq!(a * 2.0, *b);
        }
    }

    #[test]
    fn reconstruct_recovers_compositional_words() {
        let mut rng = Rng::new(4);
        let books = random_books(&mut rng, 2, 4, 3);
        let mut flat = Vec::new();
        for a in 0..4u16 {
            for b in 0..4u16 {
                flat.extend([a, b]);
            }
        }
        let codes = CodeMatrix::new(2, 4, flat).unwrap();
        let recon = reconstruct_all(&codes, &books).unwrap();
        for w in 0..16 {
            assert_eq!(recon.row(w), compose_embedding(codes.code(w), &books).unwrap());
        }
    }

    #[test]
    fn reconstruct_empty_vocab() {
        let books = Codebooks::new(2, 4, Mat::zeros(8, 3)).unwrap();
        let codes = CodeMatrix::new(2, 4, vec![]).unwrap();
        assert_eq!(reconstruct_all(&codes, &books).unwrap().shape(), (0, 3));
    }

    #[test]
    fn record_sizes_match_code_lengths() {
        assert_eq!(record_bytes(32, 16).unwrap(), 16);
        assert_eq!(record_bytes(16, 32).unwrap(), 10);
        assert_eq!(record_bytes(8, 64).unwrap(), 6);
        assert_eq!(record_bytes(64, 8).unwrap(), 24);
        assert_eq!(record_bytes(3, 2).unwrap(), 1);
        assert!(record_bytes(3, 6).is_err());
    }

    #[test]
    fn packed_bits_are_lsb_first() {
        // M = 3, K = 8: components 5, 2, 7 occupy bits 0-2, 3-5, 6-8.
        let codes = CodeMatrix::new(3, 8, vec![5, 2, 7]).unwrap();
        let bytes = pack_codes(&codes).unwrap();
        let rec = &bytes[17..];
        let value = 5 | (2 << 3) | (7 << 6);
        assert_eq!(rec, &[(value & 0xff) as u8, (value >> 8) as u8]);
    }

    #[test]
    fn header_and_length() {
        let codes = CodeMatrix::new(16, 32, vec![31; 16 * 3]).unwrap();
        let bytes = pack_codes(&codes).unwrap();
        assert_eq!(&bytes[..4], b"DCC1");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes.len(), 17 + 3 * 10);
    }

    #[test]
    fn corrupt_streams_are_rejected() {
        let codes = CodeMatrix::new(3, 4, vec![1, 2, 3, 0, 1, 2]).unwrap();
        let bytes = pack_codes(&codes).unwrap();
        let err = unpack_codes(&bytes[..bytes.len() - 1]).unwrap_err().to_string();
        assert!(err.contains("byte offset 18"), "{err}");
        let mut bad = bytes.clone();
        bad[17] |= 0x80; // padding bit of the first 6-bit record
        assert!(unpack_codes(&bad).unwrap_err().to_string().contains("padding"));
        let mut bad = bytes;
        bad[2] = b'X';
        assert!(unpack_codes(&bad).is_err());
    }

    #[test]
    fn code_file_roundtrip_with_vocab() {
        let codes = CodeMatrix::new(2, 2, vec![0, 1, 1, 1]).unwrap();
        let vocab = vec!["ünï".to_string(), "b".to_string()];
        let bytes = encode_code_file(&codes, &vocab).unwrap();
        let (c2, v2) = decode_code_file(&bytes).unwrap();
        assert_eq!(c2, codes);
        assert_eq!(v2, vocab);
    }

    #[test]
    fn codebook_file_roundtrip() {
        let books = random_books(&mut Rng::new(9), 2, 4, 3);
        let bytes = encode_codebooks(&books).unwrap();
        assert_eq!(bytes.len(), 17 + 8 * 3 * 4);
        assert_eq!(decode_codebooks(&bytes).unwrap(), books);
        assert!(decode_codebooks(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn code_range_is_validated() {
        assert!(CodeMatrix::new(2, 4, vec![0, 4]).is_err());
        assert!(CodeMatrix::new(2, 4, vec![0, 1, 2]).is_err());
    }

    fn scheme() -> impl Strategy<Value = (usize, usize)> {
        prop_oneof![
            Just((1, 2)),
            Just((8, 8)),
            Just((16, 32)),
            Just((32, 16)),
            Just((64, 8)),
            (1usize..40, 0u32..=16).prop_map(|(m, b)| (m, 1usize << b)),
        ]
    }

    proptest! {
        #[test]
        fn pack_unpack_bijection(((m, k), words, seed) in (scheme(), 0usize..20, any::<u64>())) {
            let mut rng = Rng::new(seed);
            let flat = (0..m * words).map(|_| rng.below(k) as u16).collect();
            let codes = CodeMatrix::new(m, k, flat).unwrap();
            let bytes = pack_codes(&codes).unwrap();
            prop_assert_eq!(unpack_codes(&bytes).unwrap(), codes);
        }
    }
}
