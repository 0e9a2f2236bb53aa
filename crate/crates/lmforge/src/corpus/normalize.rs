//! Text normalization and rule-based sentence splitting.

use std::sync::OnceLock;

use regex::Regex;

use crate::corpus::vocab::SPECIAL_TOKENS;

// Private-use sentinels shield special tokens from the punctuation pass.
// One sentinel per special token, in SPECIAL_TOKENS order.
const SENTINELS: [char; 5] = ['\u{E000}', '\u{E001}', '\u{E002}', '\u{E003}', '\u{E004}'];

/// Unicode punctuation separated in addition to the ASCII set.
const EXTRA_PUNCT: &[char] = &[
    '«', '»', '„', '“', '”', '‚', '‘', '’', '…', '—', '–', '−', '·', '№', '§', '°',
];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCT.contains(&c)
}

/// URL matcher, applied after lowercasing. Three alternatives, leftmost
/// first: `http(s)://…` up to whitespace, `www.…` up to whitespace, and bare
/// `host.tld[/path]` where the TLD is two or more ASCII letters.
fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            https?://\S+
            | www\.\S+
            | [a-z0-9][a-z0-9\-]*(?:\.[a-z0-9\-]+)*\.[a-z]{2,}(?:/\S*)?
            ",
        )
        .expect("static regex")
    })
}

/// Normalizes one document. Steps, in order:
///
/// 1. lowercase;
/// 2. URLs (see [`url_regex`]) become the `<url>` token;
/// 3. every punctuation character (ASCII punctuation plus a documented
///    Unicode set) becomes a standalone whitespace-delimited token;
/// 4. runs of 1-4 ASCII digits become `d` repeated run-length times, runs of
///    5 or more digits become `n`;
/// 5. whitespace is collapsed to single spaces.
///
/// Special-token literals already present in the input (`<url>`, `<unk>`,
/// `<pad>`, `<sos>`, `<eos>`) pass through unchanged. The function is total
/// and idempotent. Private-use codepoints U+E000..U+E004 are reserved as
/// internal sentinels and stripped from the input.
pub fn normalize_text(raw: &str) -> String {
    // reserved sentinels cannot occur in payload text
    let mut text: String = raw.replace(SENTINELS, " ");

    text = text.to_lowercase();

    // shield pre-existing special tokens, then fresh URL replacements
    for (tok, sent) in SPECIAL_TOKENS.iter().zip(SENTINELS) {
        text = text.replace(tok, &sent.to_string());
    }
    text = url_regex()
        .replace_all(&text, SENTINELS[0].to_string())
        .into_owned();

    let mut out = String::with_capacity(text.len() + text.len() / 4);
    for c in text.chars() {
        if is_punct(c) {
            out.push(' ');
            out.push(c);
            out.push(' ');
        } else {
            out.push(c);
        }
    }

    let mut digits = String::with_capacity(out.len());
    let mut run = 0usize;
    for c in out.chars() {
        if c.is_ascii_digit() {
            run += 1;
        } else {
            flush_digit_run(&mut digits, run);
            run = 0;
            digits.push(c);
        }
    }
    flush_digit_run(&mut digits, run);

    // restore special tokens, spaced so they stay standalone tokens
    let mut restored = digits;
    for (tok, sent) in SPECIAL_TOKENS.iter().zip(SENTINELS) {
        restored = restored.replace(sent, &format!(" {tok} "));
    }

    restored.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn flush_digit_run(out: &mut String, run: usize) {
    if run == 0 {
        return;
    }
    if run >= 5 {
        out.push('n');
    } else {
        for _ in 0..run {
            out.push('d');
        }
    }
}

const TERMINATORS: [&str; 4] = [".", "!", "?", "…"];

/// Tokens that do not end a sentence when directly followed by a period:
/// common Russian abbreviations. Single Cyrillic letters (initials,
/// "т", "е", "г", ...) are treated as abbreviations as well.
const ABBREVIATIONS: &[&str] = &[
    "гг", "вв", "тт", "др", "проч", "см", "им", "ул", "пр", "просп", "пер", "обл", "руб",
    "коп", "тыс", "млн", "млрд", "кв", "стр", "рис", "табл", "гл", "ст", "чел",
];

fn is_abbreviation(token: &str) -> bool {
    let mut chars = token.chars();
    if let (Some(c), None) = (chars.next(), chars.next()) {
        // single-letter initials: "а . с . пушкин"
        if c.is_alphabetic() && !c.is_ascii() {
            return true;
        }
    }
    ABBREVIATIONS.contains(&token)
}

fn is_digit_placeholder_short(token: &str) -> bool {
    (token.len() == 1 || token.len() == 2) && token.bytes().all(|b| b == b'd')
}

/// Splits a normalized document into sentences.
///
/// A sentence ends after a maximal run of terminator tokens (`.`, `!`, `?`,
/// `…`) unless the token before the run is an abbreviation, or is a `d`/`dd`
/// digit placeholder followed (after the run) by a token that starts with a
/// lowercase letter — which keeps dates like `dd . dd . dddd` together. The
/// document end always closes the final sentence.
pub fn split_sentences(doc: &str) -> Vec<String> {
    let tokens: Vec<&str> = doc.split_whitespace().collect();
    let mut sentences = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let tok = tokens[i];
        if TERMINATORS.contains(&tok) {
            let prev = current
                .iter()
                .rev()
                .find(|t| !TERMINATORS.contains(*t))
                .copied();
            current.push(tok);
            // absorb the rest of the terminator run
            while i + 1 < tokens.len() && TERMINATORS.contains(&tokens[i + 1]) {
                i += 1;
                current.push(tokens[i]);
            }
            let next = tokens.get(i + 1).copied();
            let exception = match (prev, next) {
                (Some(p), Some(n)) => {
                    is_abbreviation(p)
                        || (is_digit_placeholder_short(p)
                            && n.starts_with(|c: char| c.is_alphabetic()))
                }
                _ => false,
            };
            if !exception {
                sentences.push(current.join(" "));
                current.clear();
            }
        } else {
            current.push(tok);
        }
        i += 1;
    }
    if !current.is_empty() {
        sentences.push(current.join(" "));
    }
    sentences.retain(|s| !s.is_empty());
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_runs() {
        assert_eq!(normalize_text("2019"), "dddd");
        assert_eq!(normalize_text("5"), "d");
        assert_eq!(normalize_text("12345"), "n");
        assert_eq!(normalize_text("123456789"), "n");
    }

    #[test]
    fn score_example() {
        assert_eq!(normalize_text("счетом 3:1"), "счетом d : d");
    }

    #[test]
    fn lowercases_cyrillic() {
        assert_eq!(normalize_text("Москва"), "москва");
        assert_eq!(normalize_text("ЁЛКА"), "ёлка");
    }

    #[test]
    fn urls_become_special_token() {
        assert_eq!(normalize_text("см https://lenta.ru/news/1 тут"), "см <url> тут");
        assert_eq!(normalize_text("WWW.EXAMPLE.COM сайт"), "<url> сайт");
        assert_eq!(normalize_text("на lenta.ru написано"), "на <url> написано");
        assert_eq!(normalize_text("сайт news.example.org/path/1"), "сайт <url>");
        // decimals are not urls
        assert_eq!(normalize_text("1.5 миллиона"), "d . d миллиона");
    }

    #[test]
    fn punctuation_is_separated() {
        assert_eq!(normalize_text("привет,мир!"), "привет , мир !");
        assert_eq!(normalize_text("«цитата»"), "« цитата »");
        assert_eq!(normalize_text("юго-востоке"), "юго - востоке");
    }

    #[test]
    fn existing_specials_survive() {
        assert_eq!(normalize_text("в <unk> году"), "в <unk> году");
        assert_eq!(normalize_text("см <url> ."), "см <url> .");
    }

    #[test]
    fn idempotent_on_samples() {
        for s in [
            "В 2019 году, СО СЧЕТОМ 3:1 (матч) — см. https://lenta.ru/1!",
            "ничего особенного",
            "12345 рублей и 1.5 процента",
            "",
        ] {
            let once = normalize_text(s);
            assert_eq!(normalize_text(&once), once);
        }
    }

    #[test]
    fn splits_two_sentences() {
        assert_eq!(
            split_sentences("привет . как дела ."),
            vec!["привет .", "как дела ."]
        );
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(split_sentences("одно предложение без точки"), vec!["одно предложение без точки"]);
    }

    #[test]
    fn abbreviations_and_initials_do_not_split() {
        assert_eq!(
            split_sentences("судья а . с . иванов ушел ."),
            vec!["судья а . с . иванов ушел ."]
        );
        assert_eq!(
            split_sentences("около d тыс . человек пришли ."),
            vec!["около d тыс . человек пришли ."]
        );
    }

    #[test]
    fn date_placeholders_do_not_split() {
        assert_eq!(
            split_sentences("встреча dd . dd . dddd прошла ."),
            vec!["встреча dd . dd . dddd прошла ."]
        );
    }

    #[test]
    fn terminator_runs_stay_together() {
        assert_eq!(
            split_sentences("как же так ? ! он ушел ."),
            vec!["как же так ? !", "он ушел ."]
        );
    }
}
