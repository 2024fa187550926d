use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uniqsync::cluster::Scheduler;
use uniqsync::corpus::TokenStream;
use uniqsync::embed_sync::SyncPath;
use uniqsync::precision::Compression;
use uniqsync::sampling::SeedPolicy;
use uniqsync::trainer::{evaluate, init_table, split, train, TrainerConfig};
use uniqsync::Error;

fn small() -> TrainerConfig {
    TrainerConfig {
        g: 4,
        k: 32,
        c: 4,
        d: 8,
        vocab_size: 300,
        s: 40,
        epochs: 2,
        base_lr: 1.0,
        corpus_tokens: 6000,
        ..Default::default()
    }
}

fn uniform_stream(vocab: u32, n: usize, seed: u64) -> TokenStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TokenStream {
        ids: (0..n).map(|_| rng.gen_range(0..vocab)).collect(),
        source_bytes: 0,
    }
}

/// Single-process dense SGD with a full softmax, written out longhand.
fn reference_losses(cfg: &TrainerConfig, corpus: &[u32], seed: u64) -> Vec<f64> {
    let (v, d, c, k) = (cfg.vocab_size, cfg.d, cfg.c, cfg.k);
    let mut e_in = init_table(v, d, cfg.init_scale, seed, "init-input").as_slice().to_vec();
    let mut e_out = init_table(v, d, cfg.init_scale, seed, "init-output").as_slice().to_vec();
    let (train_tokens, _) = split(corpus, cfg.eval_fraction);
    let steps = (train_tokens.len() - 1) / k;
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        for step in 0..steps {
            let win = &train_tokens[step * k..step * k + k + 1];
            let n = k / c;
            let mut g_in = vec![0.0; v * d];
            let mut g_out = vec![0.0; v * d];
            let mut loss = 0.0;
            for j in 0..n {
                let mut h = vec![0.0; d];
                for &x in &win[j * c..(j + 1) * c] {
                    for q in 0..d {
                        h[q] += e_in[x as usize * d + q] / c as f64;
                    }
                }
                let scores: Vec<f64> = (0..v).map(|w| (0..d).map(|q| e_out[w * d + q] * h[q]).sum()).collect();
                let m = scores.iter().cloned().fold(f64::MIN, f64::max);
                let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
                let y = win[(j + 1) * c] as usize;
                loss += m + z.ln() - scores[y];
                let mut dh = vec![0.0; d];
                for w in 0..v {
                    let delta = (scores[w] - m).exp() / z - if w == y { 1.0 } else { 0.0 };
                    for q in 0..d {
                        g_out[w * d + q] += delta * h[q] / n as f64;
                        dh[q] += delta * e_out[w * d + q];
                    }
                }
                for &x in &win[j * c..(j + 1) * c] {
                    for q in 0..d {
                        g_in[x as usize * d + q] += dh[q] / (c * n) as f64;
                    }
                }
            }
            for i in 0..v * d {
                e_in[i] -= lr * g_in[i];
                e_out[i] -= lr * g_out[i];
            }
            losses.push(loss / n as f64);
        }
    }
    losses
}

#[test]
fn full_sampling_single_worker_matches_dense_reference() {
    let cfg = TrainerConfig {
        g: 1,
        s: 300,
        epochs: 2,
        ..small()
    };
    let corpus = cfg.load_corpus(11).unwrap();
    let reference = reference_losses(&cfg, &corpus.ids, 11);
    for path in [SyncPath::Unique, SyncPath::Baseline] {
        let out = train(&TrainerConfig { path, ..cfg.clone() }, &corpus, 11).unwrap();
        assert_eq!(out.metrics.len(), reference.len());
        for (m, r) in out.metrics.iter().zip(&reference) {
            assert!((m.ce - r).abs() <= 1e-9 * r.abs(), "{path} step {}: {} vs {r}", m.step, m.ce);
        }
        // one worker moves nothing
        assert_eq!(out.metrics.last().unwrap().bytes_total, 0);
    }
}

#[test]
fn paths_agree_step_by_step() {
    for policy in [SeedPolicy::AllDistinct, SeedPolicy::AllSame] {
        let cfg = TrainerConfig { seed_policy: policy, ..small() };
        let corpus = cfg.load_corpus(3).unwrap();
        let a = train(&TrainerConfig { path: SyncPath::Unique, ..cfg.clone() }, &corpus, 3).unwrap();
        let b = train(&TrainerConfig { path: SyncPath::Baseline, ..cfg.clone() }, &corpus, 3).unwrap();
        assert_eq!(a.metrics.len(), b.metrics.len());
        for (x, y) in a.metrics.iter().zip(&b.metrics) {
            assert!((x.ce - y.ce).abs() <= 1e-5 * y.ce.abs(), "step {}", x.step);
        }
    }
}

#[test]
fn deterministic_and_schedule_independent() {
    let cfg = small();
    let corpus = cfg.load_corpus(5).unwrap();
    let a = train(&cfg, &corpus, 5).unwrap();
    let b = train(&cfg, &corpus, 5).unwrap();
    let p = train(&TrainerConfig { scheduler: Scheduler::Parallel, ..cfg.clone() }, &corpus, 5).unwrap();
    assert_eq!(a.metrics_csv(), b.metrics_csv());
    assert_eq!(a.metrics_csv(), p.metrics_csv());
    assert_eq!(a.trace, p.trace);
    assert!(a.input.bit_eq(&p.input) && a.output.bit_eq(&p.output));
    let other = train(&cfg, &corpus, 6).unwrap();
    assert_ne!(a.metrics_csv(), other.metrics_csv());
}

#[test]
fn perplexity_falls() {
    let cfg = TrainerConfig { epochs: 3, base_lr: 0.5, corpus_tokens: 20_000, ..small() };
    let corpus = cfg.load_corpus(1).unwrap();
    let out = train(&cfg, &corpus, 1).unwrap();
    let ppl: Vec<f64> = out.report.epochs.iter().map(|e| e.eval.unwrap().ppl).collect();
    assert!(ppl.windows(2).all(|w| w[1] < w[0]), "{ppl:?}");
    assert!(ppl[0] < cfg.vocab_size as f64);
}

#[test]
fn uninformed_model_scores_vocabulary_size() {
    let t_in = init_table(100, 16, 1e-3, 2, "a");
    let t_out = init_table(100, 16, 1e-3, 2, "b");
    let corpus = uniform_stream(100, 4001, 9);
    let m = evaluate(&t_in, &t_out, &corpus.ids, 4).unwrap();
    assert!((m.ppl / 100.0 - 1.0).abs() < 0.05, "{}", m.ppl);
}

#[test]
fn balanced_binary_converges_to_one_bit() {
    let cfg = TrainerConfig {
        g: 2,
        vocab_size: 2,
        s: 2,
        epochs: 3,
        ..small()
    };
    let corpus = uniform_stream(2, 20_000, 4);
    let out = train(&cfg, &corpus, 4).unwrap();
    let bpc = out.report.epochs.last().unwrap().eval.unwrap().bpc;
    assert!((bpc - 1.0).abs() < 0.01, "{bpc}");
}

#[test]
fn evaluation_reproduces_training_loss() {
    let cfg = TrainerConfig {
        g: 1,
        s: 300,
        epochs: 4,
        base_lr: 0.5,
        ..small()
    };
    let corpus = cfg.load_corpus(8).unwrap();
    let out = train(&cfg, &corpus, 8).unwrap();
    let (train_tokens, _) = split(&corpus.ids, cfg.eval_fraction);
    let recomputed = evaluate(&out.input, &out.output, train_tokens, cfg.c).unwrap().ce;
    let last = out.report.epochs.last().unwrap().train_ce;
    assert!((recomputed / last - 1.0).abs() < 0.02, "{recomputed} vs {last}");
}

#[test]
fn traffic_ordering_and_compression() {
    // one seed group keeps the output union small
    let cfg = TrainerConfig { seed_policy: SeedPolicy::AllSame, ..small() };
    let corpus = cfg.load_corpus(2).unwrap();
    let unique = train(&cfg, &corpus, 2).unwrap();
    let baseline = train(&TrainerConfig { path: SyncPath::Baseline, ..cfg.clone() }, &corpus, 2).unwrap();
    let last = |o: &uniqsync::trainer::TrainOutcome| o.metrics.last().unwrap().bytes_total;
    assert!(unique.report.mean_u_g_input < (cfg.g * cfg.k) as f64 / 2.0);
    assert!(last(&unique) < last(&baseline));
    assert_eq!(last(&unique), unique.report.traffic.total());

    let half = train(
        &TrainerConfig { compression: Compression::fp16(1024.0).unwrap(), ..cfg.clone() },
        &corpus,
        2,
    )
    .unwrap();
    assert_eq!(half.report.traffic.value_bytes() * 2, unique.report.traffic.value_bytes());
    assert_eq!(half.report.traffic.input_index, unique.report.traffic.input_index);
    assert!(half.report.census.is_some() && unique.report.census.is_none());
}

#[test]
fn short_corpus_and_partial_epoch() {
    let cfg = small();
    let tiny = uniform_stream(300, 100, 1);
    assert!(matches!(train(&cfg, &tiny, 1), Err(Error::Config(_))));
    let odd = uniform_stream(300, 1000, 1);
    let out = train(&cfg, &odd, 1).unwrap();
    assert_eq!(out.report.steps_per_epoch, 7);
    assert_eq!(out.report.warnings.len(), 1);
    let bad = TokenStream { ids: vec![300; 500], source_bytes: 0 };
    assert!(matches!(train(&cfg, &bad, 1), Err(Error::Index { id: 300, .. })));
}
