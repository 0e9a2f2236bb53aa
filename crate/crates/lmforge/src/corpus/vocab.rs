//! Frequency-ranked vocabulary with reserved special tokens.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const SOS_ID: usize = 1;
pub const EOS_ID: usize = 2;
pub const UNK_ID: usize = 3;
pub const URL_ID: usize = 4;

/// Reserved tokens, in id order.
pub const SPECIAL_TOKENS: [&str; 5] = ["<pad>", "<sos>", "<eos>", "<unk>", "<url>"];

/// Token/id bijection. Ids 0..5 are the special tokens; the rest are corpus
/// tokens ordered by descending frequency, ties broken by byte-wise
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokenized sentences, keeping at most `cap`
    /// non-special tokens.
    pub fn build<'a, I, S>(sentences: I, cap: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        if cap == 0 {
            return Err(Error::Config("vocabulary cap must be at least 1".into()));
        }
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let mut saw_any = false;
        for sentence in sentences {
            for tok in sentence {
                saw_any = true;
                *counts.entry(tok.as_ref()).or_insert(0) += 1;
            }
        }
        if !saw_any {
            return Err(Error::DegenerateInput("vocabulary build over empty corpus".into()));
        }

        let mut special_freqs = [0u64; SPECIAL_TOKENS.len()];
        for (i, tok) in SPECIAL_TOKENS.iter().enumerate() {
            if let Some(c) = counts.remove(tok) {
                special_freqs[i] = c;
            }
        }

        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap);

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut freqs: Vec<u64> = special_freqs.to_vec();
        for (tok, freq) in ranked {
            tokens.push(tok.to_string());
            freqs.push(freq);
        }
        Ok(Vocabulary::from_parts(tokens, freqs))
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Vocabulary {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary { tokens, freqs, index }
    }

    /// Total size including the five specials.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token_to_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_to_token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn frequency(&self, id: usize) -> Option<u64> {
        self.freqs.get(id).copied()
    }

    /// Maps tokens to ids, sending out-of-vocabulary tokens to `<unk>`.
    pub fn apply_unk<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.token_to_id(t.as_ref()).unwrap_or(UNK_ID))
            .collect()
    }

    /// One `token<TAB>frequency` line per id, rank order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (tok, freq) in self.tokens.iter().zip(&self.freqs) {
            out.push_str(tok);
            out.push('\t');
            out.push_str(&freq.to_string());
            out.push('\n');
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let f = std::fs::File::open(path)?;
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (tok, freq) = line.split_once('\t').ok_or_else(|| {
                Error::data(format!("vocab line {}: expected token<TAB>frequency", lineno + 1))
            })?;
            let freq: u64 = freq
                .parse()
                .map_err(|_| Error::data(format!("vocab line {}: bad frequency {freq:?}", lineno + 1)))?;
            tokens.push(tok.to_string());
            freqs.push(freq);
        }
        if tokens.len() < SPECIAL_TOKENS.len() {
            return Err(Error::data("vocab file shorter than the special-token block".into()));
        }
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if tokens[i] != *special {
                return Err(Error::data(format!(
                    "vocab id {i} must be {special}, found {}",
                    tokens[i]
                )));
            }
        }
        // the ranked tail must be verifiably frequency-ordered
        let tail = &freqs[SPECIAL_TOKENS.len()..];
        for w in tail.windows(2) {
            if w[1] > w[0] {
                return Err(Error::data("vocab frequencies are not non-increasing".into()));
            }
        }
        let vocab = Vocabulary::from_parts(tokens, freqs);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::data("vocab contains duplicate tokens".into()));
        }
        Ok(vocab)
    }
}
