use crate::analysis::Report;
use crate::model::SchemeConfig;

/// Bytes per megabyte in printed reports.
pub const MEGABYTE: f64 = 1e6;

/// Storage accounting for a coding scheme over a vocabulary.
#[derive(Clone, Debug, PartialEq)]
pub struct SizeReport {
    pub codebooks: usize,
    pub codewords: usize,
    pub dim: usize,
    pub vocab_size: usize,
    /// Number of basis vectors, `M * K`.
    pub num_vectors: usize,
    /// `M * K * H * 4`
    pub vector_bytes: u64,
    /// `M * log2(K)`
    pub code_bits_per_word: u64,
    /// `ceil(|V| * M * log2(K) / 8)`, codes packed back to back.
    pub code_bytes_exact: u64,
    /// `|V| * ceil(M * log2(K) / 8)`, one byte-aligned record per word.
    pub code_bytes_aligned: u64,
    pub total_bytes_exact: u64,
    pub total_bytes_aligned: u64,
    /// Uncompressed `f32` matrix, `|V| * H * 4`.
    pub baseline_bytes: u64,
    /// Baseline bytes over exact total bytes.
    pub compression_ratio: f64,
    /// Bits a binary code needs to address the same `N = M * K` basis
    /// vectors, `N / 2`.
    pub binary_code_bits: u64,
    /// Vectors summed per embedding: `N / 2` for binary codes, `M` here.
    pub binary_sum_vectors: u64,
    pub composition_sum_vectors: u64,
}

pub fn size_report(scheme: &SchemeConfig, vocab_size: usize) -> SizeReport {
    let (m, k, h) = (scheme.codebooks, scheme.codewords, scheme.dim);
    let v = vocab_size as u64;
    let n = (m * k) as u64;
    let bits = scheme.code_bits();
    let vector_bytes = n * h as u64 * 4;
    let code_bytes_exact = (v * bits).div_ceil(8);
    let code_bytes_aligned = v * bits.div_ceil(8);
    let baseline_bytes = v * h as u64 * 4;
    let total_bytes_exact = vector_bytes + code_bytes_exact;
    SizeReport {
        codebooks: m,
        codewords: k,
        dim: h,
        vocab_size,
        num_vectors: m * k,
        vector_bytes,
        code_bits_per_word: bits,
        code_bytes_exact,
        code_bytes_aligned,
        total_bytes_exact,
        total_bytes_aligned: vector_bytes + code_bytes_aligned,
        baseline_bytes,
        compression_ratio: baseline_bytes as f64 / total_bytes_exact as f64,
        binary_code_bits: n / 2,
        binary_sum_vectors: n / 2,
        composition_sum_vectors: m as u64,
    }
}

impl SizeReport {
    pub fn to_report(&self) -> Report {
        let mb = |b: u64| format!("{:.2}", b as f64 / MEGABYTE);
        let mut r = Report::new(format!(
            "{}x{} coding, H = {}, |V| = {}",
            self.codebooks, self.codewords, self.dim, self.vocab_size
        ));
        r.push("scheme", format!("{}x{}", self.codebooks, self.codewords))
            .push("dim", self.dim)
            .push("vocab_size", self.vocab_size)
            .push("num_vectors", self.num_vectors)
            .push("vector_bytes", self.vector_bytes)
            .push("vector_mb", mb(self.vector_bytes))
            .push("code_bits_per_word", self.code_bits_per_word)
            .push("code_bytes_exact", self.code_bytes_exact)
            .push("code_bytes_aligned", self.code_bytes_aligned)
            .push("code_mb_exact", mb(self.code_bytes_exact))
            .push("total_bytes_exact", self.total_bytes_exact)
            .push("total_bytes_aligned", self.total_bytes_aligned)
            .push("total_mb_exact", mb(self.total_bytes_exact))
            .push("baseline_bytes", self.baseline_bytes)
            .push("baseline_mb", mb(self.baseline_bytes))
            .push("compression_ratio", format!("{:.2}", self.compression_ratio))
            .push(
                "size_reduction_percent",
                format!("{:.2}", 100.0 * (1.0 - 1.0 / self.compression_ratio)),
            )
            .push("binary_code_bits", self.binary_code_bits)
            .push("binary_sum_vectors", self.binary_sum_vectors)
            .push("composition_sum_vectors", self.composition_sum_vectors);
        r.note("MB means 10^6 bytes");
        r.note("byte counts are raw and uncompressed; sizes of compressed array dumps will differ");
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme(m: usize, k: usize) -> SchemeConfig {
        SchemeConfig::new(m, k, 300).unwrap()
    }

    #[test]
    fn four_schemes_code_lengths() {
        for (m, k, bits) in [(8, 64, 48), (16, 32, 80), (32, 16, 128), (64, 8, 192)] {
            let r = size_report(&scheme(m, k), 75102);
            assert_eq!(r.code_bits_per_word, bits);
            assert_eq!(r.num_vectors, 512);
            assert_eq!(r.vector_bytes, 512 * 300 * 4);
        }
    }

    #[test]
    fn exact_code_bytes() {
        let r = size_report(&scheme(32, 16), 75102);
        assert_eq!(r.code_bytes_exact, 1_201_632);
        assert_eq!(r.code_bytes_aligned, 1_201_632);
        let r = size_report(&scheme(16, 32), 75102);
        assert_eq!(r.code_bytes_exact, 75102 * 10);
    }

    #[test]
    fn binary_equivalent() {
        let r = size_report(&scheme(32, 16), 1);
        assert_eq!(r.binary_code_bits, 256);
        assert_eq!(r.composition_sum_vectors, 32);
    }

    #[test]
    fn smallest_scheme() {
        let r = size_report(&SchemeConfig::new(1, 2, 4).unwrap(), 10);
        assert_eq!(r.code_bits_per_word, 1);
        assert_eq!(r.code_bytes_exact, 2);
        assert_eq!(r.code_bytes_aligned, 10);
    }

    #[test]
    fn report_carries_fields() {
        let r = size_report(&scheme(16, 32), 75102).to_report();
        assert_eq!(r.get("code_bits_per_word"), Some("80"));
        assert!(r.notes.iter().any(|n| n.contains("10^6")));
    }
}
