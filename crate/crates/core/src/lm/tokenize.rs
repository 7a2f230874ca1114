//! Approximate token boundaries.
//!
//! Byte-pair tokenizers for completion models first split text with a
//! pre-tokenization pattern (an optional leading space followed by a run of
//! letters, a run of digits, or a run of punctuation) and never merge across
//! those pieces. Splitting on the same pattern gives boundaries that a real
//! tokenizer may refine further but never cross, which is all the shared
//! prefix logic in the causal pipeline needs.

use once_cell::sync::Lazy;
use regex::Regex;

static PRE_TOKEN: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+").expect("valid pattern")
});

pub fn pre_tokenize(text: &str) -> Vec<&str> {
    PRE_TOKEN.find_iter(text).map(|m| m.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_digits_and_punctuation() {
        assert_eq!(pre_tokenize(" temperature at t+1"), [" temperature", " at", " t", "+", "1"]);
        assert_eq!(pre_tokenize(" Altitude -> Radiation"), [" Altitude", " ->", " Radiation"]);
    }

    #[test]
    fn pieces_concatenate_to_input() {
        for s in [" a  b\n c", "x's 12ab", " Good", ""] {
            assert_eq!(pre_tokenize(s).concat(), s);
        }
    }
}
