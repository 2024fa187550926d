use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::cluster::Scheduler;
use crate::corpus::{build_vocabulary, encode, sample_zipf, TokenMode, TokenStream};
use crate::embed_sync::SyncPath;
use crate::precision::Compression;
use crate::sampling::{SamplingDistribution, SeedPolicy};
use crate::{seed, Error, Result};

/// Where training tokens come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// Synthetic i.i.d. Zipf stream over `vocab_size` ids with this exponent.
    Zipf(f64),
    /// A UTF-8 text file, tokenized in `token_mode` with a vocabulary capped
    /// at `vocab_size`.
    File(PathBuf),
}

impl fmt::Display for CorpusSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusSource::Zipf(s) => write!(f, "zipf:{s}"),
            CorpusSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for CorpusSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(v) = s.strip_prefix("zipf:") {
            let exp = v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad zipf exponent in `{s}`")))?;
            Ok(CorpusSource::Zipf(exp))
        } else if let Some(p) = s.strip_prefix("file:") {
            Ok(CorpusSource::File(PathBuf::from(p)))
        } else {
            Err(Error::Config(format!("corpus must be zipf:<s> or file:<path>; got `{s}`")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub g: usize,
    /// Tokens per worker per step.
    pub k: usize,
    /// Context window length; `k / c` predictions per worker per step.
    pub c: usize,
    pub d: usize,
    pub vocab_size: usize,
    /// Softmax samples drawn per worker per step.
    pub s: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_node_scaling: bool,
    /// Multiplier applied to the learning rate once per finished epoch.
    pub lr_decay: f64,
    pub seed_policy: SeedPolicy,
    pub path: SyncPath,
    pub compression: Compression,
    /// Unset means the caller supplies one.
    pub master_seed: Option<u64>,
    pub sampling: SamplingDistribution,
    pub expected_count_correction: bool,
    /// Tail share of the corpus held out for evaluation.
    pub eval_fraction: f64,
    /// Half-width of the uniform initialization of both tables.
    pub init_scale: f64,
    pub scheduler: Scheduler,
    pub corpus: CorpusSource,
    /// Length of a synthetic corpus.
    pub corpus_tokens: usize,
    pub token_mode: TokenMode,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            g: 4,
            k: 256,
            c: 4,
            d: 32,
            vocab_size: 5000,
            s: 1024,
            epochs: 3,
            base_lr: 0.2,
            lr_node_scaling: true,
            lr_decay: 1.0,
            seed_policy: SeedPolicy::AllDistinct,
            path: SyncPath::Unique,
            compression: Compression::Off,
            master_seed: None,
            sampling: SamplingDistribution::Uniform,
            expected_count_correction: false,
            eval_fraction: 0.1,
            init_scale: 0.1,
            scheduler: Scheduler::Sequential,
            corpus: CorpusSource::Zipf(1.0),
            corpus_tokens: 200_000,
            token_mode: TokenMode::Word,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_with<T: FromStr<Err = Error>>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|e: Error| Error::Config(format!("`{key}`: {e}")))
}

impl TrainerConfig {
    pub const KEYS: [&'static str; 22] = [
        "g",
        "k",
        "c",
        "d",
        "vocab_size",
        "s",
        "epochs",
        "base_lr",
        "lr_node_scaling",
        "lr_decay",
        "seed_policy",
        "path",
        "compression",
        "master_seed",
        "sampling",
        "expected_count_correction",
        "eval_fraction",
        "init_scale",
        "scheduler",
        "corpus",
        "corpus_tokens",
        "token_mode",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "g" => self.g = parse(key, value)?,
            "k" => self.k = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "s" => self.s = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "lr_node_scaling" => self.lr_node_scaling = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "seed_policy" => self.seed_policy = parse_with(key, value)?,
            "path" => self.path = parse_with(key, value)?,
            "compression" => self.compression = parse_with(key, value)?,
            "master_seed" => self.master_seed = Some(parse(key, value)?),
            "sampling" => self.sampling = parse_with(key, value)?,
            "expected_count_correction" => self.expected_count_correction = parse(key, value)?,
            "eval_fraction" => self.eval_fraction = parse(key, value)?,
            "init_scale" => self.init_scale = parse(key, value)?,
            "scheduler" => self.scheduler = parse_with(key, value)?,
            "corpus" => self.corpus = parse_with(key, value)?,
            "corpus_tokens" => self.corpus_tokens = parse(key, value)?,
            "token_mode" => self.token_mode = parse_with(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Reads `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped.
    pub fn parse_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every field as `(key, value)`, in file order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("g", self.g.to_string()),
            ("k", self.k.to_string()),
            ("c", self.c.to_string()),
            ("d", self.d.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("s", self.s.to_string()),
            ("epochs", self.epochs.to_string()),
            ("base_lr", self.base_lr.to_string()),
            ("lr_node_scaling", self.lr_node_scaling.to_string()),
            ("lr_decay", self.lr_decay.to_string()),
            ("seed_policy", self.seed_policy.to_string()),
            ("path", self.path.to_string()),
            ("compression", self.compression.to_string()),
        ];
        if let Some(m) = self.master_seed {
            out.push(("master_seed", m.to_string()));
        }
        out.extend([
            ("sampling", sampling_name(self.sampling).to_string()),
            ("expected_count_correction", self.expected_count_correction.to_string()),
            ("eval_fraction", self.eval_fraction.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("scheduler", self.scheduler.to_string()),
            ("corpus", self.corpus.to_string()),
            ("corpus_tokens", self.corpus_tokens.to_string()),
            ("token_mode", self.token_mode.to_string()),
        ]);
        out
    }

    pub fn to_kv(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.g == 0 || self.k == 0 || self.c == 0 || self.d == 0 {
            return bad("g, k, c and d must be positive".into());
        }
        if self.k % self.c != 0 {
            return bad(format!("k = {} is not divisible by c = {}", self.k, self.c));
        }
        if self.vocab_size < 2 {
            return bad("vocab_size must be at least 2".into());
        }
        if self.vocab_size > u32::MAX as usize {
            return bad("vocab_size exceeds the id range".into());
        }
        if self.s > self.vocab_size {
            return bad(format!("s = {} exceeds vocab_size = {}", self.s, self.vocab_size));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay must lie in (0, 1]".into());
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return bad("eval_fraction must lie in [0, 1)".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be finite and non-negative".into());
        }
        crate::sampling::group_count(self.seed_policy, self.g)?;
        Ok(())
    }

    pub fn contexts_per_step(&self) -> usize {
        self.k / self.c
    }

    /// `max(1, ln(nodes))` with eight workers per node, rounded up.
    pub fn node_multiplier(&self) -> f64 {
        if !self.lr_node_scaling {
            return 1.0;
        }
        let nodes = self.g.div_ceil(8);
        (nodes as f64).ln().max(1.0)
    }

    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        self.base_lr * self.node_multiplier() * self.lr_decay.powi(epoch as i32)
    }

    /// The run's seed: the configured one, else derived from `fallback`.
    pub fn resolve_seed(&self, fallback: u64) -> u64 {
        self.master_seed.unwrap_or_else(|| seed::derive(fallback, "train"))
    }

    /// Tokens to train and evaluate on. A file corpus also yields its text
    /// byte count.
    pub fn load_corpus(&self, master_seed: u64) -> Result<TokenStream> {
        match &self.corpus {
            CorpusSource::Zipf(exp) => sample_zipf(
                self.vocab_size,
                *exp,
                self.corpus_tokens,
                seed::derive(master_seed, "corpus"),
            ),
            CorpusSource::File(path) => {
                let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
                let vocab = build_vocabulary(&bytes, self.token_mode, self.vocab_size)?;
                encode(&bytes, &vocab)
            }
        }
    }
}

fn sampling_name(d: SamplingDistribution) -> &'static str {
    match d {
        SamplingDistribution::Uniform => "uniform",
        SamplingDistribution::LogUniform => "log-uniform",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = TrainerConfig {
            master_seed: Some(9),
            compression: Compression::fp16(512.0).unwrap(),
            seed_policy: SeedPolicy::PowerLaw(0.64),
            sampling: SamplingDistribution::LogUniform,
            corpus: CorpusSource::File("a b.txt".into()),
            ..Default::default()
        };
        assert_eq!(TrainerConfig::parse_kv(&cfg.to_kv()).unwrap(), cfg);
        for (k, _) in cfg.to_pairs() {
            assert!(TrainerConfig::KEYS.contains(&k), "{k}");
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let err = TrainerConfig::parse_kv("g = 2\nlearning_rate = 0.1\n").unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("learning_rate")), "{err}");
    }

    #[test]
    fn comments_and_blanks() {
        let cfg = TrainerConfig::parse_kv("# desk run\n\n g=8 \nk = 64\nc=8\n").unwrap();
        assert_eq!((cfg.g, cfg.k, cfg.c), (8, 64, 8));
        assert!(TrainerConfig::parse_kv("g 8").is_err());
    }

    #[test]
    fn invariants() {
        assert!(TrainerConfig::parse_kv("k = 10\nc = 4").is_err());
        assert!(TrainerConfig::parse_kv("vocab_size = 100\ns = 101").is_err());
        assert!(TrainerConfig::parse_kv("base_lr = 0").is_err());
        assert!(TrainerConfig::parse_kv("seed_policy = power:1.5").is_err());
        assert!(TrainerConfig::parse_kv("g = x").is_err());
    }

    #[test]
    fn node_scaling() {
        let mut cfg = TrainerConfig { g: 64, base_lr: 1.0, ..Default::default() };
        assert!((cfg.node_multiplier() - 8f64.ln()).abs() < 1e-15);
        assert!((cfg.node_multiplier() - 2.079).abs() < 1e-3);
        cfg.g = 8;
        assert_eq!(cfg.node_multiplier(), 1.0);
        cfg.g = 17;
        assert_eq!(cfg.node_multiplier(), 3f64.ln());
        cfg.lr_node_scaling = false;
        cfg.g = 64;
        assert_eq!(cfg.node_multiplier(), 1.0);
        cfg.lr_decay = 0.5;
        assert_eq!(cfg.lr_at_epoch(2), 0.25);
    }
}
