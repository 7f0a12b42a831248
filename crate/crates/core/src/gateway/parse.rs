use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::game::StrategyId;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply names neither strategy")]
    NoMatch,
    #[error("reply names both strategies")]
    Ambiguous,
}

const WRAPPERS: &[char] = &[
    '"', '\'', '`', '*', '.', '。', '،', '«', '»', '“', '”', '‘', '’', '「', '」', '『', '』', '!', '！',
];

/// Trim, strip surrounding quotes and full stops, case-fold and apply NFC.
pub fn normalize_reply(s: &str) -> String {
    let nfc: String = s.nfc().collect();
    nfc.trim_matches(|c: char| c.is_whitespace() || WRAPPERS.contains(&c)).to_lowercase()
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF | 0xF900..=0xFAFF)
}

/// True if `needle` occurs in `hay` as a whole word. Edges made of CJK
/// characters need no boundary, since those scripts do not space words.
fn occurs_as_word(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let first = needle.chars().next().expect("nonempty");
    let last = needle.chars().next_back().expect("nonempty");
    hay.match_indices(needle).any(|(i, _)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + needle.len()..].chars().next();
        let left_ok = is_cjk(first) || before.is_none_or(|c| !c.is_alphanumeric());
        let right_ok = is_cjk(last) || after.is_none_or(|c| !c.is_alphanumeric());
        left_ok && right_ok
    })
}

/// Maps a free-text reply onto one of two strategy labels: an exact match
/// after normalization wins, otherwise exactly one label must occur in the
/// reply.
pub fn parse_choice(reply: &str, labels: &[String; 2]) -> Result<StrategyId, ParseError> {
    let r = normalize_reply(reply);
    let norm = [normalize_reply(&labels[0]), normalize_reply(&labels[1])];
    if let Some(i) = norm.iter().position(|l| *l == r) {
        return Ok(StrategyId::from_index(i).expect("two labels"));
    }
    let hits: Vec<usize> = (0..2).filter(|&i| occurs_as_word(&r, &norm[i])).collect();
    match hits.as_slice() {
        [i] => Ok(StrategyId::from_index(*i).expect("two labels")),
        [] => Err(ParseError::NoMatch),
        _ => Err(ParseError::Ambiguous),
    }
}
