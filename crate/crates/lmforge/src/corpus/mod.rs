//! Dataset construction: normalization, sentence splitting, filtering,
//! vocabulary building, split sampling and statistics.
//!
//! The pipeline turns a raw dump (UTF-8 text, one document per line) into
//! `train.txt` / `valid.txt` / `test.txt` (one space-separated tokenized
//! sentence per line, out-of-vocabulary tokens replaced by `<unk>`, no
//! `<sos>`/`<eos>` markers), `vocab.txt` (`token<TAB>frequency`, rank order)
//! and `stats.json`. Identical (input, config, seed) produce byte-identical
//! outputs.

mod filter;
mod normalize;
mod pipeline;
mod stats;
mod vocab;

pub use filter::{filter_sentence, RejectReason};
pub use normalize::{normalize_text, split_sentences};
pub use pipeline::{
    build_corpus, load_split_lines, load_split_tokens, render_sentence, sample_splits,
    write_corpus, BuiltCorpus, CorpusConfig, CorpusPaths, SentenceRecord, SplitSpec, Splits,
};
pub use stats::{compute_stats, CorpusStats};
pub use vocab::{Vocabulary, EOS_ID, PAD_ID, SOS_ID, SPECIAL_TOKENS, UNK_ID, URL_ID};
