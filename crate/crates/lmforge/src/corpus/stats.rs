//! Split statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-split statistics over tokenized sentences (after `<unk>`
/// substitution, i.e. exactly what the split files contain).
///
/// `mean_tokens` is `sum(len) / n`; `stddev_tokens` is the population
/// standard deviation `sqrt(sum((len - mean)^2) / n)`, both accumulated in
/// file order. The histogram has bin width 1 and is sorted by length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub example_count: usize,
    pub mean_tokens: f64,
    pub stddev_tokens: f64,
    pub unique_tokens: usize,
    pub histogram: Vec<(usize, u64)>,
}

pub fn compute_stats<S: AsRef<str>>(sentences: &[Vec<S>]) -> Result<CorpusStats> {
    if sentences.is_empty() {
        return Err(Error::DegenerateInput("statistics over an empty split".into()));
    }
    let n = sentences.len();
    let lengths: Vec<usize> = sentences.iter().map(|s| s.len()).collect();
    let total: u64 = lengths.iter().map(|&l| l as u64).sum();
    let mean = total as f64 / n as f64;
    let mut sq = 0.0;
    for &l in &lengths {
        let d = l as f64 - mean;
        sq += d * d;
    }
    let stddev = (sq / n as f64).sqrt();

    let mut unique = std::collections::HashSet::new();
    for s in sentences {
        for t in s {
            unique.insert(t.as_ref());
        }
    }

    let mut hist = std::collections::BTreeMap::new();
    for &l in &lengths {
        *hist.entry(l).or_insert(0u64) += 1;
    }

    Ok(CorpusStats {
        example_count: n,
        mean_tokens: mean,
        stddev_tokens: stddev,
        unique_tokens: unique.len(),
        histogram: hist.into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(raw: &[&str]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|s| s.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn single_sentence() {
        let s = compute_stats(&sents(&["а б в г д"])).unwrap();
        assert_eq!(s.example_count, 1);
        assert_eq!(s.mean_tokens, 5.0);
        assert_eq!(s.stddev_tokens, 0.0);
        assert_eq!(s.unique_tokens, 5);
        assert_eq!(s.histogram, vec![(5, 1)]);
    }

    #[test]
    fn two_lengths() {
        let s = compute_stats(&sents(&["а б", "а б в г"])).unwrap();
        assert_eq!(s.mean_tokens, 3.0);
        assert_eq!(s.stddev_tokens, 1.0);
        assert_eq!(s.unique_tokens, 4);
        assert_eq!(s.histogram, vec![(2, 1), (4, 1)]);
    }

    #[test]
    fn empty_split_errors() {
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(compute_stats(&empty).is_err());
    }
}
