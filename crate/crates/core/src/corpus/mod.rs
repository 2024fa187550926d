//! Tokenization, vocabularies, synthetic Zipf streams and type/token statistics.

mod heaps;
mod tokenize;
mod vocab;
mod zipf;

pub use heaps::{log_checkpoints, type_token_curve, PowerLawFit, TypeTokenCurve};
pub use tokenize::{decode_utf8, tokenize, TokenMode};
pub use vocab::{build_vocabulary, encode, TokenStream, VocabEntry, Vocabulary, UNK_CHAR, UNK_WORD};
pub use zipf::{sample_zipf, ZipfSampler};
