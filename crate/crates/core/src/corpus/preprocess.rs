//! Note normalization: lowercasing, date/number placeholders, punctuation
//! handling and the minimum-length filter.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};

use regex::Regex;

pub const NUM: &str = "[NUM]";
pub const DATE: &str = "[DATE]";

/// Notes shorter than this (in tokens, after normalization) are dropped.
pub const DEFAULT_MIN_TOKENS: usize = 40;

/// Hook for removing person/hospital names. Inputs are assumed de-identified,
/// so the default is the identity.
pub type Scrubber = Arc<dyn Fn(&str) -> String + Send + Sync>;

const MONTHS: &str = "jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?";

fn date_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let numeric = r"\d{1,2}[/-]\d{1,2}[/-]\d{2,4}";
        let iso = r"\d{4}[/-]\d{1,2}[/-]\d{1,2}";
        let month_first = format!(r"(?:{MONTHS})\.?\s+\d{{1,2}}(?:st|nd|rd|th)?,?\s+\d{{4}}");
        let day_first = format!(r"\d{{1,2}}(?:st|nd|rd|th)?\s+(?:{MONTHS})\.?,?\s+\d{{4}}");
        let dashed = format!(r"\d{{1,2}}-(?:{MONTHS})-\d{{2,4}}");
        Regex::new(&format!(
            r"\b(?:{numeric}|{iso}|{month_first}|{day_first}|{dashed})\b"
        ))
        .expect("date regex")
    })
}

#[derive(Clone)]
pub struct Preprocessor {
    pub min_tokens: usize,
    scrubber: Option<Scrubber>,
    dropped: Arc<AtomicUsize>,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self::new(DEFAULT_MIN_TOKENS)
    }
}

impl std::fmt::Debug for Preprocessor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Preprocessor")
            .field("min_tokens", &self.min_tokens)
            .field("scrubber", &self.scrubber.is_some())
            .field("dropped", &self.dropped())
            .finish()
    }
}

impl Preprocessor {
    pub fn new(min_tokens: usize) -> Self {
        Preprocessor {
            min_tokens,
            scrubber: None,
            dropped: Arc::new(AtomicUsize::new(0)),
        }
    }

    pub fn with_scrubber(mut self, scrubber: Scrubber) -> Self {
        self.scrubber = Some(scrubber);
        self
    }

    /// Number of notes rejected by [`Preprocessor::process`] so far.
    pub fn dropped(&self) -> usize {
        self.dropped.load(Ordering::Relaxed)
    }

    /// Normalizes a raw note. Returns `None` (and bumps the drop counter) when
    /// fewer than `min_tokens` tokens survive.
    pub fn process(&self, text: &str) -> Option<Vec<String>> {
        let tokens = match &self.scrubber {
            Some(scrub) => tokenize(&scrub(text)),
            None => tokenize(text),
        };
        if tokens.len() < self.min_tokens {
            self.dropped.fetch_add(1, Ordering::Relaxed);
            None
        } else {
            Some(tokens)
        }
    }
}

/// Lowercases, replaces dates and numbers with placeholders, peels
/// punctuation into single-character tokens and collapses runs of the same
/// punctuation mark. Hyphens split words.
///
/// `tokenize(&tokenize(s).join(" ")) == tokenize(s)` for every input.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let dated = date_regex().replace_all(&lowered, " [date] ");
    let mut out = Vec::new();
    for chunk in dated.split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    out
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut i = 0;
    let mut last_punct: Option<char> = None;
    while i < chars.len() {
        let c = chars[i];
        if c == '[' {
            if let Some((placeholder, len)) = placeholder_at(&chars[i..]) {
                out.push(placeholder.to_string());
                i += len;
                last_punct = None;
                continue;
            }
        }
        if c.is_ascii_digit() {
            // digits with internal separators ("98.6", "1,200") form one number
            let mut j = i + 1;
            while j < chars.len() {
                if chars[j].is_ascii_digit() {
                    j += 1;
                } else if (chars[j] == '.' || chars[j] == ',')
                    && j + 1 < chars.len()
                    && chars[j + 1].is_ascii_digit()
                {
                    j += 2;
                } else {
                    break;
                }
            }
            out.push(NUM.to_string());
            i = j;
            last_punct = None;
        } else if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_alphanumeric() {
                j += 1;
            }
            let word: String = chars[i..j].iter().collect();
            if word.chars().all(|c| c.is_ascii_digit()) {
                out.push(NUM.to_string());
            } else {
                out.push(word);
            }
            i = j;
            last_punct = None;
        } else {
            if last_punct != Some(c) {
                out.push(c.to_string());
            }
            last_punct = Some(c);
            i += 1;
        }
    }
}

fn placeholder_at(chars: &[char]) -> Option<(&'static str, usize)> {
    for (lower, canonical) in [("[num]", NUM), ("[date]", DATE)] {
        let n = lower.chars().count();
        if chars.len() >= n && chars[..n].iter().copied().eq(lower.chars()) {
            return Some((canonical, n));
        }
    }
    None
}

/// Convenience wrapper used for lexicon surface forms (no length filter).
pub fn normalize_phrase(text: &str) -> Vec<String> {
    tokenize(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn numbers_and_dates_become_placeholders() {
        assert_eq!(
            toks("BP 140/90 on 01/02/2010."),
            vec!["bp", NUM, "/", NUM, "on", DATE, "."]
        );
    }

    #[test]
    fn month_name_and_iso_dates() {
        assert_eq!(toks("seen Jan 5, 2010 today"), vec!["seen", DATE, "today"]);
        assert_eq!(toks("on 3 March 2011."), vec!["on", DATE, "."]);
        assert_eq!(toks("admitted 2151-07-16"), vec!["admitted", DATE]);
        assert_eq!(toks("dated 12-jan-2010"), vec!["dated", DATE]);
    }

    #[test]
    fn repeated_punctuation_collapses() {
        assert_eq!(toks("!!!???"), vec!["!", "?"]);
        assert_eq!(toks("wait..."), vec!["wait", "."]);
    }

    #[test]
    fn hyphens_split_words() {
        assert_eq!(toks("X-ray non-smoker"), vec!["x", "-", "ray", "non", "-", "smoker"]);
    }

    #[test]
    fn decimals_and_units() {
        assert_eq!(toks("temp 98.6F, wbc 1,200"), vec!["temp", NUM, "f", ",", "wbc", NUM]);
        assert_eq!(toks("b12 level"), vec!["b12", "level"]);
    }

    #[test]
    fn placeholders_survive_lowercasing() {
        assert_eq!(toks("[NUM] and [date]"), vec![NUM, "and", DATE]);
    }

    #[test]
    fn short_notes_are_dropped_and_counted() {
        let p = Preprocessor::default();
        let words: Vec<String> = (0..39).map(|i| format!("w{}x", char::from(b'a' + (i % 26) as u8))).collect();
        assert!(p.process(&words.join(" ")).is_none());
        assert_eq!(p.dropped(), 1);
        let forty = format!("{} extra", words.join(" "));
        assert_eq!(p.process(&forty).unwrap().len(), 40);
        assert_eq!(p.dropped(), 1);
    }

    #[test]
    fn scrubber_hook_runs_first() {
        let p = Preprocessor::new(1).with_scrubber(Arc::new(|s: &str| s.replace("Smith", "")));
        assert_eq!(p.process("Dr Smith saw").unwrap(), vec!["dr", "saw"]);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent(s in "[ -~\n\t]{0,200}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokens_are_lowercase_and_never_bare_digits(s in "[A-Za-z0-9 ./,:!?-]{0,120}") {
            for t in tokenize(&s) {
                if t != NUM && t != DATE {
                    prop_assert_eq!(t.to_lowercase(), t.clone());
                    prop_assert!(!t.chars().all(|c| c.is_ascii_digit()));
                }
            }
        }
    }
}
