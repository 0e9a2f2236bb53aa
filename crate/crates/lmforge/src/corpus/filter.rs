//! Sentence acceptance predicates.

use serde::Serialize;

use crate::corpus::vocab::{Vocabulary, SPECIAL_TOKENS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// 40 tokens or more.
    TooLong,
    /// Contains a token with a Latin letter that is neither a special token
    /// nor a digit placeholder.
    EnglishWord,
    /// Odd number of single or double quotation marks.
    UnbalancedQuotes,
    /// Round parentheses do not balance.
    UnbalancedBrackets,
    /// 10% or more of the tokens map to `<unk>`.
    TooManyUnknown,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RejectReason::TooLong => "too_long",
            RejectReason::EnglishWord => "english_word",
            RejectReason::UnbalancedQuotes => "unbalanced_quotes",
            RejectReason::UnbalancedBrackets => "unbalanced_brackets",
            RejectReason::TooManyUnknown => "too_many_unknown",
        };
        write!(f, "{s}")
    }
}

/// `d`, `dd`, `ddd`, `dddd` or `n`.
pub(crate) fn is_digit_placeholder(token: &str) -> bool {
    token == "n" || ((1..=4).contains(&token.len()) && token.bytes().all(|b| b == b'd'))
}

fn is_special(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token)
}

/// Accepts a normalized sentence iff all five conditions hold:
///
/// 1. fewer than 40 tokens (strict);
/// 2. no token contains a Latin letter, except special tokens and digit
///    placeholders;
/// 3. the counts of `'` and of `"` characters are both even;
/// 4. round parentheses balance (running counter never negative, ends at 0);
/// 5. strictly fewer than 10% of the tokens are out of vocabulary.
///
/// Returns `None` on acceptance or the first failing condition.
pub fn filter_sentence<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> Option<RejectReason> {
    if tokens.len() >= 40 {
        return Some(RejectReason::TooLong);
    }

    for tok in tokens {
        let tok = tok.as_ref();
        if tok.chars().any(|c| c.is_ascii_alphabetic()) && !is_special(tok) && !is_digit_placeholder(tok)
        {
            return Some(RejectReason::EnglishWord);
        }
    }

    let mut singles = 0usize;
    let mut doubles = 0usize;
    for tok in tokens {
        for c in tok.as_ref().chars() {
            match c {
                '\'' => singles += 1,
                '"' => doubles += 1,
                _ => {}
            }
        }
    }
    if singles % 2 != 0 || doubles % 2 != 0 {
        return Some(RejectReason::UnbalancedQuotes);
    }

    let mut depth = 0i64;
    for tok in tokens {
        for c in tok.as_ref().chars() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth < 0 {
                        return Some(RejectReason::UnbalancedBrackets);
                    }
                }
                _ => {}
            }
        }
    }
    if depth != 0 {
        return Some(RejectReason::UnbalancedBrackets);
    }

    // strict <10%: with integer arithmetic, reject iff 10 * oov >= total
    let oov = tokens
        .iter()
        .filter(|t| !vocab.contains(t.as_ref()))
        .count();
    if 10 * oov >= tokens.len() {
        return Some(RejectReason::TooManyUnknown);
    }

    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_vocab() -> Vocabulary {
        let sentences: Vec<Vec<String>> = vec![
            "только мир дом".split_whitespace().map(String::from).collect(),
            ". ( ) ' \" d n".split_whitespace().map(String::from).collect(),
        ];
        Vocabulary::build(sentences.iter().map(|v| v.as_slice()), 100).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn forty_tokens_reject() {
        let v = small_vocab();
        let t: Vec<String> = vec!["мир".to_string(); 40];
        assert_eq!(filter_sentence(&t, &v), Some(RejectReason::TooLong));
        let t: Vec<String> = vec!["мир".to_string(); 39];
        assert_eq!(filter_sentence(&t, &v), None);
    }

    #[test]
    fn latin_rejects_but_placeholders_pass() {
        let v = small_vocab();
        assert_eq!(filter_sentence(&toks("мир peace"), &v), Some(RejectReason::EnglishWord));
        assert_eq!(filter_sentence(&toks("мир dddd n <url>"), &v), None);
        // mixed Cyrillic-Latin token rejects
        assert_eq!(filter_sentence(&toks("мирx"), &v), Some(RejectReason::EnglishWord));
        // five d's is no longer a placeholder
        assert_eq!(filter_sentence(&toks("ddddd"), &v), Some(RejectReason::EnglishWord));
    }

    #[test]
    fn quote_parity() {
        let v = small_vocab();
        assert_eq!(filter_sentence(&toks("мир \" дом \""), &v), None);
        assert_eq!(filter_sentence(&toks("мир \" дом"), &v), Some(RejectReason::UnbalancedQuotes));
        assert_eq!(filter_sentence(&toks("мир ' дом"), &v), Some(RejectReason::UnbalancedQuotes));
    }

    #[test]
    fn bracket_balance() {
        let v = small_vocab();
        assert_eq!(filter_sentence(&toks("только )"), &v), Some(RejectReason::UnbalancedBrackets));
        assert_eq!(filter_sentence(&toks("( мир )"), &v), None);
        assert_eq!(filter_sentence(&toks("( мир"), &v), Some(RejectReason::UnbalancedBrackets));
        assert_eq!(filter_sentence(&toks(") мир ("), &v), Some(RejectReason::UnbalancedBrackets));
    }

    #[test]
    fn unk_ratio_is_strict() {
        let v = small_vocab();
        // 1 OOV of 10 is exactly 10%: reject
        let mut t = vec!["мир".to_string(); 9];
        t.push("неизвестное".to_string());
        assert_eq!(filter_sentence(&t, &v), Some(RejectReason::TooManyUnknown));
        // 1 OOV of 11 is under 10%: accept
        let mut t = vec!["мир".to_string(); 10];
        t.push("неизвестное".to_string());
        assert_eq!(filter_sentence(&t, &v), None);
    }
}
