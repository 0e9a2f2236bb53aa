//! End-to-end corpus construction and the on-disk corpus layout.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::corpus::filter::{filter_sentence, RejectReason};
use crate::corpus::normalize::{normalize_text, split_sentences};
use crate::corpus::stats::{compute_stats, CorpusStats};
use crate::corpus::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::seeding::Rng;

/// One tokenized sentence, pre-`<unk>`, with the 0-based line number of the
/// source document in the raw dump.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub tokens: Vec<String>,
    pub source_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_n: usize,
    pub dev_n: usize,
    pub test_n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<SentenceRecord>,
    pub dev: Vec<SentenceRecord>,
    pub test: Vec<SentenceRecord>,
}

/// Shuffles the pool with a xoshiro256++ generator seeded from `spec.seed`
/// (Fisher-Yates, see [`crate::seeding::Rng::shuffle`]) and assigns the first
/// `train_n` sentences to train, the next `dev_n` to dev and the next
/// `test_n` to test. Output is byte-identical for identical (pool, seed).
pub fn sample_splits(pool: &[SentenceRecord], spec: &SplitSpec) -> Result<Splits> {
    let need = spec.train_n + spec.dev_n + spec.test_n;
    if pool.len() < need {
        return Err(Error::Shortfall { requested: need, available: pool.len() });
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    Rng::from_seed(spec.seed).shuffle(&mut order);

    let take = |range: std::ops::Range<usize>| -> Vec<SentenceRecord> {
        order[range].iter().map(|&i| pool[i].clone()).collect()
    };
    Ok(Splits {
        train: take(0..spec.train_n),
        dev: take(spec.train_n..spec.train_n + spec.dev_n),
        test: take(spec.train_n + spec.dev_n..need),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusConfig {
    pub vocab_cap: usize,
    pub split: SplitSpec,
}

/// Everything the pipeline produced, before any file is written.
pub struct BuiltCorpus {
    pub vocab: Vocabulary,
    pub splits: Splits,
    pub stats: BTreeMap<String, CorpusStats>,
    pub document_count: usize,
    pub sentence_count: usize,
    pub accepted_count: usize,
    pub reject_counts: BTreeMap<String, u64>,
}

/// Runs the full pipeline over raw documents (one per line):
/// normalize -> sentence-split -> build vocabulary over all sentences ->
/// filter -> sample splits -> statistics.
pub fn build_corpus<'a, I>(documents: I, config: &CorpusConfig) -> Result<BuiltCorpus>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut records: Vec<SentenceRecord> = Vec::new();
    let mut document_count = 0usize;
    for (offset, doc) in documents.into_iter().enumerate() {
        document_count += 1;
        let normalized = normalize_text(doc);
        for sentence in split_sentences(&normalized) {
            let tokens: Vec<String> = sentence.split_whitespace().map(String::from).collect();
            if !tokens.is_empty() {
                records.push(SentenceRecord { tokens, source_offset: offset });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::DegenerateInput("no sentences found in the input dump".into()));
    }

    let vocab = Vocabulary::build(records.iter().map(|r| r.tokens.as_slice()), config.vocab_cap)?;

    let mut accepted = Vec::new();
    let mut reject_counts: BTreeMap<String, u64> = BTreeMap::new();
    for record in &records {
        match filter_sentence(&record.tokens, &vocab) {
            None => accepted.push(record.clone()),
            Some(reason) => {
                *reject_counts.entry(reason.to_string()).or_insert(0) += 1;
            }
        }
    }

    let splits = sample_splits(&accepted, &config.split)?;

    let mut stats = BTreeMap::new();
    for (name, split) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        if !split.is_empty() {
            let rendered: Vec<Vec<String>> = split
                .iter()
                .map(|r| rendered_tokens(&r.tokens, &vocab))
                .collect();
            stats.insert(name.to_string(), compute_stats(&rendered)?);
        }
    }

    Ok(BuiltCorpus {
        vocab,
        splits,
        stats,
        document_count,
        sentence_count: records.len(),
        accepted_count: accepted.len(),
        reject_counts,
    })
}

fn rendered_tokens(tokens: &[String], vocab: &Vocabulary) -> Vec<String> {
    tokens
        .iter()
        .map(|t| {
            if vocab.contains(t) {
                t.clone()
            } else {
                "<unk>".to_string()
            }
        })
        .collect()
}

/// The space-joined line a sentence record contributes to a split file
/// (out-of-vocabulary tokens replaced by `<unk>`).
pub fn render_sentence(tokens: &[String], vocab: &Vocabulary) -> String {
    rendered_tokens(tokens, vocab).join(" ")
}

/// Standard file layout of a corpus directory.
pub struct CorpusPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
    pub vocab: PathBuf,
    pub stats: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> CorpusPaths {
        CorpusPaths {
            train: dir.join("train.txt"),
            valid: dir.join("valid.txt"),
            test: dir.join("test.txt"),
            vocab: dir.join("vocab.txt"),
            stats: dir.join("stats.json"),
        }
    }

    pub fn split(&self, name: &str) -> Result<&Path> {
        match name {
            "train" => Ok(&self.train),
            "dev" | "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!(
                "unknown split {other:?}; expected train, dev or test"
            ))),
        }
    }
}

#[derive(Serialize)]
struct StatsFile<'a> {
    document_count: usize,
    sentence_count: usize,
    accepted_count: usize,
    reject_counts: &'a BTreeMap<String, u64>,
    splits: &'a BTreeMap<String, CorpusStats>,
}

/// Writes train/valid/test, vocab and stats files into `dir`. Returns the
/// paths written.
pub fn write_corpus(built: &BuiltCorpus, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let paths = CorpusPaths::in_dir(dir);

    for (path, split) in [
        (&paths.train, &built.splits.train),
        (&paths.valid, &built.splits.dev),
        (&paths.test, &built.splits.test),
    ] {
        let mut out = String::new();
        for record in split {
            out.push_str(&render_sentence(&record.tokens, &built.vocab));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
    }

    built.vocab.save(&paths.vocab)?;

    let stats = StatsFile {
        document_count: built.document_count,
        sentence_count: built.sentence_count,
        accepted_count: built.accepted_count,
        reject_counts: &built.reject_counts,
        splits: &built.stats,
    };
    let mut f = std::fs::File::create(&paths.stats)?;
    f.write_all(serde_json::to_string_pretty(&stats)?.as_bytes())?;
    f.write_all(b"\n")?;

    Ok(vec![paths.train, paths.valid, paths.test, paths.vocab, paths.stats])
}

/// Reads a split file back as raw token lines.
pub fn load_split_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

/// Reads a split file as id sequences under the given vocabulary.
pub fn load_split_tokens(path: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<usize>>> {
    Ok(load_split_lines(path)?
        .iter()
        .map(|tokens| vocab.apply_unk(tokens))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(tokens: &str, offset: usize) -> SentenceRecord {
        SentenceRecord {
            tokens: tokens.split_whitespace().map(String::from).collect(),
            source_offset: offset,
        }
    }

    #[test]
    fn split_sampling_is_deterministic() {
        let pool: Vec<SentenceRecord> = (0..10).map(|i| record(&format!("т{i}"), i)).collect();
        let spec = SplitSpec { train_n: 6, dev_n: 2, test_n: 2, seed: 42 };
        let a = sample_splits(&pool, &spec).unwrap();
        let b = sample_splits(&pool, &spec).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.dev, b.dev);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn splits_are_disjoint_by_instance() {
        let pool: Vec<SentenceRecord> = (0..10).map(|i| record(&format!("т{i}"), i)).collect();
        let spec = SplitSpec { train_n: 6, dev_n: 2, test_n: 2, seed: 7 };
        let s = sample_splits(&pool, &spec).unwrap();
        let mut seen = std::collections::HashSet::new();
        for r in s.train.iter().chain(&s.dev).chain(&s.test) {
            assert!(seen.insert(r.source_offset));
        }
        assert_eq!(seen.len(), 10);
    }

    #[test]
    fn empty_spec_gives_empty_splits() {
        let pool = vec![record("а", 0)];
        let spec = SplitSpec { train_n: 0, dev_n: 0, test_n: 0, seed: 1 };
        let s = sample_splits(&pool, &spec).unwrap();
        assert!(s.train.is_empty() && s.dev.is_empty() && s.test.is_empty());
    }

    #[test]
    fn shortfall_is_reported_with_counts() {
        let pool = vec![record("а", 0)];
        let spec = SplitSpec { train_n: 5, dev_n: 0, test_n: 0, seed: 1 };
        match sample_splits(&pool, &spec) {
            Err(Error::Shortfall { requested: 5, available: 1 }) => {}
            other => panic!("expected shortfall, got {other:?}"),
        }
    }

    #[test]
    fn golden_assignment_matches_reference_prng_trace() {
        // Independent re-implementation of the documented shuffle: seed
        // xoshiro256++ from splitmix64(42), Fisher-Yates with
        // j = next() % (i + 1).
        fn splitmix(x: &mut u64) -> u64 {
            *x = x.wrapping_add(0x9E3779B97F4A7C15);
            let mut z = *x;
            z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
            z ^ (z >> 31)
        }
        struct X([u64; 4]);
        impl X {
            fn next(&mut self) -> u64 {
                let s = &mut self.0;
                let r = (s[0].wrapping_add(s[3])).rotate_left(23).wrapping_add(s[0]);
                let t = s[1] << 17;
                s[2] ^= s[0];
                s[3] ^= s[1];
                s[1] ^= s[2];
                s[0] ^= s[3];
                s[2] ^= t;
                s[3] = s[3].rotate_left(45);
                r
            }
        }
        let mut sm = 42u64;
        let mut x = X([splitmix(&mut sm), splitmix(&mut sm), splitmix(&mut sm), splitmix(&mut sm)]);
        let mut expect: Vec<usize> = (0..10).collect();
        for i in (1..10usize).rev() {
            let j = (x.next() % (i as u64 + 1)) as usize;
            expect.swap(i, j);
        }

        let pool: Vec<SentenceRecord> = (0..10).map(|i| record(&format!("т{i}"), i)).collect();
        let spec = SplitSpec { train_n: 6, dev_n: 2, test_n: 2, seed: 42 };
        let s = sample_splits(&pool, &spec).unwrap();
        let got: Vec<usize> = s
            .train
            .iter()
            .chain(&s.dev)
            .chain(&s.test)
            .map(|r| r.source_offset)
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn pipeline_runs_on_a_tiny_dump() {
        let docs = vec![
            "Первый матч закончился со счетом 3:1. Подробности на https://example.ru/1.",
            "Вторая новость была короткой.",
            "Это english words здесь.",
        ];
        let config = CorpusConfig {
            vocab_cap: 100,
            split: SplitSpec { train_n: 2, dev_n: 1, test_n: 0, seed: 5 },
        };
        let built = build_corpus(docs.iter().copied(), &config).unwrap();
        assert_eq!(built.document_count, 3);
        assert!(built.accepted_count >= 3);
        assert!(built.reject_counts.contains_key("english_word"));
        assert_eq!(built.splits.train.len(), 2);
        assert_eq!(built.splits.dev.len(), 1);
    }
}
