use nextcrop::generators::{
    encode_prompt, markov_generator, nll_loss, train_tiny, ConditioningContext, MarkovGenerator, SamplingParams,
    StreamKey, TinyCausalModel, TinyConfig, TinyGenerator, TokenGenerator,
};
use nextcrop::{Error, TokenId};
use proptest::prelude::*;

fn ids(v: &[u32]) -> Vec<TokenId> {
    v.iter().map(|&i| TokenId(i)).collect()
}

#[test]
fn prompts_differ_componentwise() {
    let a = encode_prompt("a beach").unwrap();
    let b = encode_prompt("a forest").unwrap();
    assert_eq!(a, encode_prompt("a beach").unwrap());
    assert!(a.values().iter().zip(b.values()).all(|(x, y)| x != y));
    assert!(matches!(encode_prompt(""), Err(Error::Input(_))));
}

#[test]
fn full_first_block_of_1024() {
    let gen = MarkovGenerator::new(256, 1, 1024).unwrap();
    let p = encode_prompt("seascape").unwrap();
    let ctx = ConditioningContext::new(Some(&p), &[], StreamKey::new(0, 0, 0));
    let out = gen.generate(&ctx, 1024, &SamplingParams::default()).unwrap();
    assert_eq!(out.len(), 1024);
    assert_eq!(out, gen.generate(&ctx, 1024, &SamplingParams::default()).unwrap());
    assert!(matches!(gen.generate(&ctx, 1025, &SamplingParams::default()), Err(Error::Capacity(_))));
}

#[test]
fn order_one_frequencies_match_the_table() {
    const N: usize = 100_000;
    let k = 4;
    let p = encode_prompt("pattern").unwrap();
    let chain = markov_generator(k, 1, Some(&p), N + 1).unwrap();
    let ctx = ConditioningContext::new(Some(&p), &[], StreamKey::new(11, 0, 0));
    let seq = chain.generate(&ctx, N, &SamplingParams::default()).unwrap();

    let mut counts = vec![0usize; k * k];
    for w in seq.windows(2) {
        counts[w[0].index() * k + w[1].index()] += 1;
    }
    for i in 0..k {
        let row_total: usize = counts[i * k..(i + 1) * k].iter().sum();
        assert!(row_total > 1000, "state {i} visited only {row_total} times");
        let table = chain.transition_row(1, TokenId(i as u32));
        for j in 0..k {
            let freq = counts[i * k + j] as f64 / row_total as f64;
            assert!((freq - table[j]).abs() < 0.02, "T[{i},{j}] = {:.4}, observed {freq:.4}", table[j]);
        }
    }
}

#[test]
fn steps_are_shorter_than_uniform() {
    const N: usize = 100_000;
    for k in [4usize, 16, 256] {
        let chain = markov_generator(k, 1, None, N + 1).unwrap();
        let p = encode_prompt("grassland").unwrap();
        let ctx = ConditioningContext::new(Some(&p), &[], StreamKey::new(3, 0, 0));
        let seq = chain.generate(&ctx, N, &SamplingParams::default()).unwrap();
        let mean_step = seq.windows(2).map(|w| (w[0].0 as f64 - w[1].0 as f64).abs()).sum::<f64>() / (N - 1) as f64;
        // E|X - Y| for independent uniform X, Y over 0..k
        let uniform = (k * k - 1) as f64 / (3 * k) as f64;
        let brute: f64 =
            (0..k).flat_map(|a| (0..k).map(move |b| (a as f64 - b as f64).abs())).sum::<f64>() / (k * k) as f64;
        assert!((uniform - brute).abs() < 1e-12);
        assert!(mean_step < uniform, "k={k}: {mean_step} vs {uniform}");
    }
}

#[test]
fn higher_order_falls_back_on_short_context() {
    let chain = markov_generator(8, 3, None, 64).unwrap();
    let start = chain.next_distribution(&[]);
    assert_eq!(start, chain.start_distribution());
    let one = chain.next_distribution(&ids(&[5]));
    assert_eq!(one, chain.transition_row(1, TokenId(5)));
    let two = chain.next_distribution(&ids(&[2, 5]));
    let w = chain.lag_weights();
    for (j, &p) in two.iter().enumerate() {
        let expected = (w[0] * chain.transition_row(1, TokenId(5))[j] + w[1] * chain.transition_row(2, TokenId(2))[j])
            / (w[0] + w[1]);
        assert!((p - expected).abs() < 1e-12);
    }
}

#[test]
fn rows_are_order_independent() {
    let gen = MarkovGenerator::new(32, 1, 64).unwrap();
    let p = encode_prompt("crowd").unwrap();
    let params = SamplingParams::with_seed(8);
    let prefixes: Vec<Vec<TokenId>> = (0..6u32).map(|j| ids(&[j, j + 1, j + 2])).collect();
    let run = |order: &[usize]| {
        let mut out = vec![Vec::new(); order.len()];
        for &j in order {
            let ctx = ConditioningContext::new(Some(&p), &prefixes[j], StreamKey::new(8, 2, j as u32));
            out[j] = gen.generate(&ctx, 5, &params).unwrap();
        }
        out
    };
    assert_eq!(run(&[0, 1, 2, 3, 4, 5]), run(&[5, 3, 1, 0, 4, 2]));
}

fn tiny_cfg() -> TinyConfig {
    TinyConfig { context: 6, vocab: 5, model_dim: 4, ff_dim: 6 }
}

#[test]
fn gradient_matches_central_differences() {
    let model = TinyCausalModel::<f64>::new(tiny_cfg(), 42, 0.5).unwrap();
    let seq = ids(&[1, 4, 0, 2, 2, 3]);
    let (loss, grad) = model.loss_and_grad(&seq).unwrap();
    assert!((loss - nll_loss(&model, &seq).unwrap()).abs() < 1e-12);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &g) in grad.iter().enumerate() {
        let mut plus = model.clone();
        plus.params_mut()[i] += h;
        let mut minus = model.clone();
        minus.params_mut()[i] -= h;
        let numeric = (nll_loss(&plus, &seq).unwrap() - nll_loss(&minus, &seq).unwrap()) / (2.0 * h);
        let rel = (numeric - g).abs() / numeric.abs().max(g.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn degenerate_corpus_is_learned() {
    let cfg = TinyConfig { context: 8, vocab: 16, model_dim: 8, ff_dim: 16 };
    let model = TinyCausalModel::<f64>::new(cfg, 1, 0.1).unwrap();
    let corpus = vec![vec![TokenId(7); 8]; 4];
    let (_, report) = train_tiny(&model, &corpus, 200, 0.05).unwrap();
    assert_eq!(report.losses.len(), 201);
    // mean over the corpus of the summed sequence loss
    let final_loss = report.final_loss();
    assert!(final_loss < 0.05 * (16f64).ln(), "final mean loss {final_loss}");
}

#[test]
fn small_steps_do_not_increase_loss() {
    let model = TinyCausalModel::<f64>::new(tiny_cfg(), 9, 0.3).unwrap();
    let corpus = vec![ids(&[0, 1, 2, 3, 4, 0]), ids(&[4, 3, 2, 1, 0, 4]), ids(&[2, 2, 1, 1, 0, 0])];
    let (_, report) = train_tiny(&model, &corpus, 60, 0.01).unwrap();
    let l = &report.losses;
    assert!(l.last().unwrap() <= &l[0]);
    let non_increasing = l.windows(2).filter(|w| w[1] <= w[0]).count();
    assert!(non_increasing as f64 >= 0.9 * (l.len() - 1) as f64);
}

#[test]
fn tiny_generator_is_deterministic() {
    let gen = TinyGenerator::new(TinyCausalModel::new(tiny_cfg(), 5, 0.5).unwrap());
    let p = encode_prompt("cityscape").unwrap();
    let ctx = ConditioningContext::new(Some(&p), &[], StreamKey::new(1, 0, 0));
    let a = gen.generate(&ctx, 6, &SamplingParams::default()).unwrap();
    assert_eq!(a, gen.generate(&ctx, 6, &SamplingParams::default()).unwrap());
    assert!(matches!(gen.generate(&ctx, 7, &SamplingParams::default()), Err(Error::Capacity(_))));
}

fn extension_holds(gen: &dyn TokenGenerator, prefix: &[TokenId], a: usize, b: usize, seed: u64) -> bool {
    let p = encode_prompt("forest").unwrap();
    let key = StreamKey::new(seed, 1, 2);
    let params = SamplingParams::with_seed(seed);
    let whole = gen.generate(&ConditioningContext::new(Some(&p), prefix, key), a + b, &params).unwrap();
    let head = gen.generate(&ConditioningContext::new(Some(&p), prefix, key), a, &params).unwrap();
    let mut extended = prefix.to_vec();
    extended.extend(&head);
    let tail = gen.generate(&ConditioningContext::new(Some(&p), &extended, key), b, &params).unwrap();
    whole[..a] == head[..] && whole[a..] == tail[..]
}

proptest! {
    #[test]
    fn markov_prefix_extension(
        prefix in proptest::collection::vec(0u32..12, 0..6),
        a in 1usize..8,
        b in 1usize..8,
        order in 1usize..4,
        seed in any::<u64>(),
    ) {
        let gen = MarkovGenerator::new(12, order, 32).unwrap();
        prop_assert!(extension_holds(&gen, &ids(&prefix), a, b, seed));
    }

    #[test]
    fn tiny_prefix_extension(prefix in proptest::collection::vec(0u32..5, 0..2), a in 1usize..3, b in 1usize..3) {
        let gen = TinyGenerator::new(TinyCausalModel::new(tiny_cfg(), 2, 0.5).unwrap());
        prop_assert!(extension_holds(&gen, &ids(&prefix), a, b, 4));
    }

    #[test]
    fn softmax_sums_to_one(seq in proptest::collection::vec(0u32..5, 1..7), seed in 0u64..50) {
        let model = TinyCausalModel::<f64>::new(tiny_cfg(), seed, 1.0).unwrap();
        for row in model.probabilities(&ids(&seq)).unwrap() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn loss_is_non_negative(seq in proptest::collection::vec(0u32..5, 2..7), seed in 0u64..50) {
        let model = TinyCausalModel::<f64>::new(tiny_cfg(), seed, 1.0).unwrap();
        prop_assert!(nll_loss(&model, &ids(&seq)).unwrap() >= 0.0);
    }
}
