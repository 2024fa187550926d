//! Browser bindings: exchange planning, vocabulary growth and the fp16 codec.
//!
//! Each operation has a plain Rust form returning JSON text, which the
//! `#[wasm_bindgen]` wrappers forward with errors turned into exceptions.

use serde_json::json;
use uniqsync::corpus::{build_vocabulary, encode, log_checkpoints, sample_zipf, type_token_curve, PowerLawFit, TokenMode};
use uniqsync::embed_sync::complexity_plan;
use uniqsync::precision::Compression;
use wasm_bindgen::prelude::*;

// keeps the page responsive
const MAX_TOKENS: usize = 2_000_000;

pub fn plan_json(g: u32, k: u32, d: u32, alpha: f64) -> Result<String, String> {
    let plan = complexity_plan(g.into(), k.into(), d.into(), alpha, 4, 4).map_err(|e| e.to_string())?;
    let mut v = serde_json::to_value(plan).expect("plan serializes");
    v["table"] = plan.to_table().into();
    Ok(v.to_string())
}

/// Type/token curve and power-law fit of a Zipf stream.
pub fn zipf_growth_json(vocab: u32, exponent: f64, tokens: u32, seed: u32) -> Result<String, String> {
    if tokens as usize > MAX_TOKENS {
        return Err(format!("at most {MAX_TOKENS} tokens"));
    }
    let stream = sample_zipf(vocab as usize, exponent, tokens as usize, seed.into()).map_err(|e| e.to_string())?;
    growth(&stream)
}

/// Same for pasted text, tokenized as words or characters.
pub fn text_growth_json(text: &str, chars: bool) -> Result<String, String> {
    let mode = if chars { TokenMode::Character } else { TokenMode::Word };
    let vocab = build_vocabulary(text.as_bytes(), mode, usize::MAX).map_err(|e| e.to_string())?;
    let stream = encode(text.as_bytes(), &vocab).map_err(|e| e.to_string())?;
    growth(&stream)
}

fn growth(stream: &uniqsync::corpus::TokenStream) -> Result<String, String> {
    let n = stream.len() as u64;
    let curve = type_token_curve(stream, &log_checkpoints(n, 10)).map_err(|e| e.to_string())?;
    let fit = PowerLawFit::from_curve(&curve).map_err(|e| e.to_string())?;
    Ok(json!({
        "points": curve.points,
        "alpha": fit.alpha,
        "coeff": fit.coeff,
        "r_squared": fit.r_squared,
    })
    .to_string())
}

/// Encodes and decodes `values` with scale `f`, reporting the error and how
/// many values flushed to zero or saturated.
pub fn fp16_json(values: &[f64], scale: f32) -> Result<String, String> {
    let codec = Compression::fp16(scale).map_err(|e| e.to_string())?;
    let (back, census) = codec.roundtrip(values).map_err(|e| e.to_string())?;
    let max_abs_err = values.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(json!({
        "decoded": back,
        "max_abs_err": max_abs_err,
        "flushed_to_zero": census.flushed_to_zero,
        "saturated": census.saturated,
        "bytes": values.len() * 2,
        "bytes_uncompressed": values.len() * 4,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn plan(g: u32, k: u32, d: u32, alpha: f64) -> Result<String, JsError> {
    plan_json(g, k, d, alpha).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn zipf_growth(vocab: u32, exponent: f64, tokens: u32, seed: u32) -> Result<String, JsError> {
    zipf_growth_json(vocab, exponent, tokens, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn text_growth(text: &str, chars: bool) -> Result<String, JsError> {
    text_growth_json(text, chars).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fp16_roundtrip(values: Vec<f64>, scale: f32) -> Result<String, JsError> {
    fp16_json(&values, scale).map_err(|e| JsError::new(&e))
}
