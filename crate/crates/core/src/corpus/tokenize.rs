use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Unit of tokenization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenMode {
    /// Lowercased alphanumeric runs; every other non-space character is its own unit.
    Word,
    /// One unit per Unicode scalar value, no normalization.
    Character,
}

impl fmt::Display for TokenMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenMode::Word => "word",
            TokenMode::Character => "character",
        })
    }
}

impl FromStr for TokenMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "word" => Ok(TokenMode::Word),
            "character" | "char" => Ok(TokenMode::Character),
            other => Err(Error::Config(format!("unknown token mode `{other}`"))),
        }
    }
}

/// Validates UTF-8, reporting the offset of the first bad byte.
pub fn decode_utf8(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })
}

/// Splits text into units.
///
/// In word mode the literal `<unk>` is kept as a single unit so that decoded
/// streams re-encode to the same ids.
pub fn tokenize(text: &str, mode: TokenMode) -> Vec<String> {
    match mode {
        TokenMode::Character => text.chars().map(String::from).collect(),
        TokenMode::Word => tokenize_words(text),
    }
}

fn tokenize_words(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut out = Vec::new();
    let mut current = String::new();
    let mut rest = lowered.as_str();
    while let Some(ch) = rest.chars().next() {
        if rest.starts_with(super::UNK_WORD) {
            flush(&mut current, &mut out);
            out.push(super::UNK_WORD.to_string());
            rest = &rest[super::UNK_WORD.len()..];
            continue;
        }
        if ch.is_whitespace() {
            flush(&mut current, &mut out);
        } else if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            flush(&mut current, &mut out);
            out.push(ch.to_string());
        }
        rest = &rest[ch.len_utf8()..];
    }
    flush(&mut current, &mut out);
    out
}

fn flush(current: &mut String, out: &mut Vec<String>) {
    if !current.is_empty() {
        out.push(std::mem::take(current));
    }
}
