use std::collections::HashMap;

use crate::analysis::Report;
use crate::codec::CodeMatrix;

/// How many words use each subcode of each component.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BalanceTable {
    pub codebooks: usize,
    pub codewords: usize,
    pub vocab_size: usize,
    /// `counts[i][k]`: words whose component `i` equals `k`.
    pub counts: Vec<Vec<u64>>,
}

pub fn balance_table(codes: &CodeMatrix) -> BalanceTable {
    let (m, k) = (codes.codebooks(), codes.codewords());
    let mut counts = vec![vec![0u64; k]; m];
    for code in codes.iter() {
        for (i, &c) in code.iter().enumerate() {
            counts[i][c as usize] += 1;
        }
    }
    BalanceTable {
        codebooks: m,
        codewords: k,
        vocab_size: codes.vocab_size(),
        counts,
    }
}

impl BalanceTable {
    pub fn min_count(&self) -> u64 {
        self.counts.iter().flatten().copied().min().unwrap_or(0)
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Subcodes used by no word.
    pub fn dead_codewords(&self) -> usize {
        self.counts.iter().flatten().filter(|&&c| c == 0).count()
    }

    /// Shannon entropy in bits of component `i`'s subcode distribution.
    pub fn entropy(&self, i: usize) -> f64 {
        let n = self.vocab_size as f64;
        if n == 0.0 {
            return 0.0;
        }
        self.counts[i]
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum()
    }

    /// `M` lines of `K` comma-separated counts.
    pub fn to_csv(&self) -> String {
        self.counts
            .iter()
            .map(|row| {
                let cells: Vec<String> = row.iter().map(u64::to_string).collect();
                cells.join(",") + "\n"
            })
            .collect()
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new(format!(
            "code balance, {}x{} over {} words",
            self.codebooks, self.codewords, self.vocab_size
        ));
        r.push("vocab_size", self.vocab_size)
            .push("min_count", self.min_count())
            .push("max_count", self.max_count())
            .push("dead_codewords", self.dead_codewords())
            .push("max_entropy_bits", (self.codewords as f64).log2());
        for i in 0..self.codebooks {
            let row = &self.counts[i];
            let n = self.vocab_size.max(1) as f64;
            let top = row.iter().copied().max().unwrap_or(0);
            let low = row.iter().copied().min().unwrap_or(0);
            r.push(format!("component.{i}.entropy_bits"), format!("{:.4}", self.entropy(i)))
                .push(format!("component.{i}.max_share"), format!("{:.4}", top as f64 / n))
                .push(format!("component.{i}.min_share"), format!("{:.4}", low as f64 / n));
        }
        r
    }
}

/// A code used by two or more words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedGroup {
    pub code: Vec<u16>,
    pub words: Vec<usize>,
}

/// Words grouped by identical full codes, groups of two or more only,
/// largest first; equal sizes are ordered by code.
pub fn shared_code_groups(codes: &CodeMatrix) -> Vec<SharedGroup> {
    let mut by_code: HashMap<&[u16], Vec<usize>> = HashMap::new();
    for (w, code) in codes.iter().enumerate() {
        by_code.entry(code).or_default().push(w);
    }
    let mut groups: Vec<SharedGroup> = by_code
        .into_iter()
        .filter(|(_, words)| words.len() >= 2)
        .map(|(code, words)| SharedGroup {
            code: code.to_vec(),
            words,
        })
        .collect();
    groups.sort_by(|a, b| b.words.len().cmp(&a.words.len()).then_with(|| a.code.cmp(&b.code)));
    groups
}

/// Number of distinct codes in use.
pub fn distinct_codes(codes: &CodeMatrix) -> usize {
    let mut all: Vec<&[u16]> = codes.iter().collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Renders a code compactly: one hex digit per component when `K <= 16`,
/// otherwise space-separated decimals.
pub fn format_code(code: &[u16], codewords: usize) -> String {
    if codewords <= 16 {
        code.iter()
            .map(|&c| format!("{c:X}"))
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        code.iter()
            .map(u16::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}
