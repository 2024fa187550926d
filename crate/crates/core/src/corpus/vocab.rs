use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tokenize::{decode_utf8, tokenize, TokenMode};
use crate::{Error, Result};

/// Surface form of the unknown-word unit in word mode.
pub const UNK_WORD: &str = "<unk>";
/// Surface form of the unknown unit in character mode (U+FFFD).
pub const UNK_CHAR: &str = "\u{FFFD}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub count: u64,
}

/// Token to id map. Ids are dense positions in `entries`; the unknown unit is
/// always the last entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
    mode: TokenMode,
}

impl Vocabulary {
    fn from_entries(entries: Vec<VocabEntry>, mode: TokenMode) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("vocabulary needs at least the unknown entry".into()));
        }
        if entries.len() > u32::MAX as usize {
            return Err(Error::Config("vocabulary larger than 2^32-1 entries".into()));
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (id, e) in entries.iter().enumerate() {
            if index.insert(e.token.clone(), id as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {:?}", e.token)));
            }
        }
        let vocab = Vocabulary {
            entries,
            index,
            mode,
        };
        if vocab.entries[vocab.unk_id() as usize].token != unk_token(mode) {
            return Err(Error::Config("last vocabulary entry must be the unknown token".into()));
        }
        Ok(vocab)
    }

    pub fn mode(&self) -> TokenMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        (self.entries.len() - 1) as u32
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or_else(|| self.unk_id())
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(|e| e.token.as_str())
    }

    /// Renders ids back to text. Word units are joined by single spaces.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            let token = self.token(id).ok_or(Error::Index {
                id,
                vocab_size: self.len(),
            })?;
            if self.mode == TokenMode::Word && i > 0 {
                out.push(' ');
            }
            out.push_str(token);
        }
        Ok(out)
    }

    /// Fraction of the counted tokens covered by non-unknown entries.
    pub fn coverage(&self) -> f64 {
        let total: u64 = self.entries.iter().map(|e| e.count).sum();
        if total == 0 {
            return 0.0;
        }
        let unk = self.entries[self.unk_id() as usize].count;
        (total - unk) as f64 / total as f64
    }

    /// TSV form: `#mode=<mode>` header then `token<TAB>id<TAB>count` by id.
    /// Tab, newline, carriage return and backslash inside tokens are escaped.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#mode={}\n", self.mode);
        for (id, e) in self.entries.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", escape(&e.token), id, e.count);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::EmptyCorpus)?;
        let mode: TokenMode = header
            .strip_prefix("#mode=")
            .ok_or_else(|| Error::Config("vocabulary file lacks `#mode=` header".into()))?
            .parse()?;
        let mut entries = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let bad = || Error::Config(format!("malformed vocabulary line {}", lineno + 2));
            let mut fields = line.split('\t');
            let (token, id, count) = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(t), Some(i), Some(c), None) => (t, i, c),
                _ => return Err(bad()),
            };
            let id: usize = id.parse().map_err(|_| bad())?;
            if id != entries.len() {
                return Err(Error::Config(format!("vocabulary ids not dense at line {}", lineno + 2)));
            }
            entries.push(VocabEntry {
                token: unescape(token).ok_or_else(bad)?,
                count: count.parse().map_err(|_| bad())?,
            });
        }
        Vocabulary::from_entries(entries, mode)
    }
}

fn unk_token(mode: TokenMode) -> &'static str {
    match mode {
        TokenMode::Word => UNK_WORD,
        TokenMode::Character => UNK_CHAR,
    }
}

fn escape(token: &str) -> String {
    let mut out = String::with_capacity(token.len());
    for ch in token.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(field: &str) -> Option<String> {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        out.push(match chars.next()? {
            '\\' => '\\',
            't' => '\t',
            'n' => '\n',
            'r' => '\r',
            _ => return None,
        });
    }
    Some(out)
}

/// Keeps the `max_size - 1` most frequent units (descending count, ties in
/// lexicographic order) and appends the unknown unit, whose count is the
/// number of tokens it absorbs.
pub fn build_vocabulary(text: &[u8], mode: TokenMode, max_size: usize) -> Result<Vocabulary> {
    if max_size < 2 {
        return Err(Error::Config(format!("max_size must be at least 2, got {max_size}")));
    }
    let text = decode_utf8(text)?;
    let units = tokenize(text, mode);
    if units.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let unk = unk_token(mode);
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut unk_count = 0u64;
    for u in &units {
        if u == unk {
            unk_count += 1;
        } else {
            *counts.entry(u.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let keep = ranked.len().min(max_size - 1);
    unk_count += ranked[keep..].iter().map(|(_, c)| c).sum::<u64>();

    let mut entries: Vec<VocabEntry> = ranked[..keep]
        .iter()
        .map(|&(token, count)| VocabEntry {
            token: token.to_string(),
            count,
        })
        .collect();
    entries.push(VocabEntry {
        token: unk.to_string(),
        count: unk_count,
    });
    Vocabulary::from_entries(entries, mode)
}

/// A sequence of word ids plus the byte length of the text it came from
/// (zero for synthetic streams).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub ids: Vec<u32>,
    pub source_bytes: u64,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

pub fn encode(text: &[u8], vocab: &Vocabulary) -> Result<TokenStream> {
    let text = decode_utf8(text)?;
    let ids = tokenize(text, vocab.mode())
        .iter()
        .map(|u| vocab.id(u))
        .collect();
    Ok(TokenStream {
        ids,
        source_bytes: text.len() as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(v: &Vocabulary) -> Vec<(&str, u32, u64)> {
        v.entries()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.token.as_str(), i as u32, e.count))
            .collect()
    }

    #[test]
    fn frequency_order() {
        let v = build_vocabulary(b"a a b", TokenMode::Word, 3).unwrap();
        assert_eq!(pairs(&v), vec![("a", 0, 2), ("b", 1, 1), (UNK_WORD, 2, 0)]);
        assert_eq!(v.unk_id(), 2);
    }

    #[test]
    fn four_types_six_tokens() {
        let text = b"to be or not to be";
        let v = build_vocabulary(text, TokenMode::Word, 10).unwrap();
        assert_eq!(v.len() - 1, 4);
        let s = encode(text, &v).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.ids.iter().all(|&id| id != v.unk_id()));
    }

    #[test]
    fn ties_are_lexicographic() {
        let v = build_vocabulary(b"c b a c b a", TokenMode::Word, 10).unwrap();
        let tokens: Vec<_> = v.entries().iter().map(|e| e.token.as_str()).collect();
        assert_eq!(tokens, vec!["a", "b", "c", UNK_WORD]);
    }

    #[test]
    fn truncation_feeds_unk() {
        let v = build_vocabulary(b"a a a b b c", TokenMode::Word, 2).unwrap();
        assert_eq!(pairs(&v), vec![("a", 0, 3), (UNK_WORD, 1, 3)]);
        assert!((v.coverage() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn encode_maps_oov_to_unk() {
        let v = build_vocabulary(b"a a b", TokenMode::Word, 3).unwrap();
        assert_eq!(encode(b"a b a", &v).unwrap().ids, vec![0, 1, 0]);
        assert_eq!(encode(b"a z a", &v).unwrap().ids, vec![0, 2, 0]);
    }

    #[test]
    fn errors() {
        assert_eq!(build_vocabulary(b"", TokenMode::Word, 5), Err(Error::EmptyCorpus));
        assert_eq!(build_vocabulary(b"   \n", TokenMode::Word, 5), Err(Error::EmptyCorpus));
        assert_eq!(
            build_vocabulary(b"ok \xc3", TokenMode::Word, 5),
            Err(Error::Decode { offset: 3 })
        );
        assert!(matches!(build_vocabulary(b"a", TokenMode::Word, 1), Err(Error::Config(_))));
    }

    #[test]
    fn character_mode_source_bytes() {
        let text = "héllo\tw\n".as_bytes();
        let v = build_vocabulary(text, TokenMode::Character, 100).unwrap();
        let s = encode(text, &v).unwrap();
        assert_eq!(s.len(), 8);
        assert!(s.source_bytes >= s.len() as u64);
        assert_eq!(v.decode(&s.ids).unwrap().as_bytes(), text);
    }

    #[test]
    fn tsv_roundtrip_with_escapes() {
        let text = "a\tb\\c\n\r a".as_bytes();
        let v = build_vocabulary(text, TokenMode::Character, 100).unwrap();
        let tsv = v.to_tsv();
        assert!(tsv.starts_with("#mode=character\n"));
        assert_eq!(Vocabulary::from_tsv(&tsv).unwrap(), v);
    }

    #[test]
    fn tsv_rejects_sparse_ids() {
        let bad = "#mode=word\na\t0\t3\n<unk>\t2\t0\n";
        assert!(matches!(Vocabulary::from_tsv(bad), Err(Error::Config(_))));
    }
}
