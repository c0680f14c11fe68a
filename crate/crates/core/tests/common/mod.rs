//! Property-test generators shared by the integration tests.

#![allow(dead_code)]

use loosespec::strategy::StrategyConfig;
use loosespec::types::{tokens, DecodeStep, HiddenEncoding, HiddenMatrix, Latencies, Token, Trace, TraceHeader};
use loosespec::verification::{verify_step, BoundStrategy};
use proptest::prelude::*;

/// Hidden values: any finite bit pattern, or a small range.
pub fn value(any_bits: bool) -> BoxedStrategy<f32> {
    if any_bits {
        any::<u32>().prop_map(f32::from_bits).prop_filter("finite", |x| x.is_finite()).boxed()
    } else {
        (-4.0f32..4.0).boxed()
    }
}

/// A rows x cols matrix without zero rows.
pub fn matrix(rows: usize, cols: usize, any_bits: bool) -> impl Strategy<Value = HiddenMatrix> {
    prop::collection::vec(value(any_bits), rows * cols).prop_map(move |mut data| {
        for r in 0..rows {
            let row = &mut data[r * cols..(r + 1) * cols];
            if row.iter().all(|&x| x == 0.0) {
                row[0] = 1.0;
            }
        }
        HiddenMatrix::from_raw(rows, cols, data)
    })
}

fn token_list(ids: Vec<u32>, texts: Option<Vec<Option<String>>>) -> Vec<Token> {
    match texts {
        Some(t) => ids.into_iter().zip(t).map(|(id, text)| Token { id, text }).collect(),
        None => ids.into_iter().map(Token::new).collect(),
    }
}

fn texts(k: usize) -> impl Strategy<Value = Option<Vec<Option<String>>>> {
    prop::option::of(prop::collection::vec(prop::option::of("[a-z ,.]{0,6}"), k))
}

/// One step of draft length `k` over a small vocabulary, so exact matches
/// and in-window shifts are common.
pub fn step(k: usize, d: usize, vocab: u32, any_bits: bool) -> impl Strategy<Value = DecodeStep> {
    (
        prop::collection::vec(0..vocab, k),
        prop::collection::vec(0..vocab, k),
        texts(k),
        texts(k),
        matrix(k, d, any_bits),
        prop::option::of(prop::collection::vec(0.0f64..2.0, k)),
        prop::option::of(prop::collection::vec(any::<bool>(), k)),
    )
        .prop_map(|(draft, target, dt, tt, hidden, entropy, labels)| {
            let mut s = DecodeStep::new(0, token_list(draft, dt), token_list(target, tt), hidden);
            s.target_entropy = entropy;
            s.relevance_labels = labels;
            s
        })
}

/// A valid chain or two-branch trace.
pub fn trace(max_steps: usize, max_k: usize, any_bits: bool) -> impl Strategy<Value = Trace> {
    (1usize..=6, 1usize..=6, 0..=max_steps, any::<bool>(), any::<bool>())
        .prop_flat_map(move |(d, l_v, n, tree, with_meta)| {
            let branches = if tree { 2 } else { 1 };
            let groups = prop::collection::vec(
                (1..=max_k).prop_flat_map(move |k| prop::collection::vec(step(k, d, 6, any_bits), branches)),
                n,
            );
            (Just((d, l_v, branches, with_meta)), matrix(l_v, d, any_bits), groups, any::<u64>())
        })
        .prop_map(|((d, l_v, branches, with_meta), visual, groups, seed)| {
            let mut header = TraceHeader::new(d, l_v);
            if with_meta {
                header.seed = Some(seed);
                header.model_names = Some(vec!["draft".into(), "target".into()]);
                header.latencies = Some(Latencies::new(0.031, 0.004, 0.036));
            }
            let mut steps = Vec::new();
            for (index, group) in groups.into_iter().enumerate() {
                for (branch, mut s) in group.into_iter().enumerate() {
                    s.step_index = index as u64;
                    s.branch = branch as u8;
                    steps.push(s);
                }
            }
            Trace {
                header,
                visual_hidden: visual,
                steps,
                branches_per_step: branches as u8,
            }
        })
}

pub fn with_encoding(mut t: Trace, encoding: HiddenEncoding) -> Trace {
    t.header.encoding = encoding;
    t
}

/// Bit patterns of every hidden value, visual first.
pub fn hidden_bits(t: &Trace) -> Vec<u32> {
    let mut bits: Vec<u32> = t.visual_hidden.data().iter().map(|x| x.to_bits()).collect();
    for s in &t.steps {
        bits.extend(s.draft_hidden.data().iter().map(|x| x.to_bits()));
    }
    bits
}

/// 2-d rows with cosine `c` against the single visual row (1, 0).
pub fn rows_with_scores(scores: &[f32]) -> HiddenMatrix {
    let rows: Vec<[f32; 2]> = scores.iter().map(|&c| [c, (1.0 - c * c).sqrt()]).collect();
    HiddenMatrix::from_rows(&rows).unwrap()
}

/// Every match pattern against every relaxed set, for K ≤ 6, through the
/// real relevance path: relaxed positions get the lowest scores and λ
/// selects exactly that many.
pub fn exhaustive_small_k() -> usize {
    let visual = HiddenMatrix::from_rows(&[[1.0f32, 0.0]]).unwrap();
    let mut checked = 0;
    for k in 1..=6usize {
        for matches in 0u32..(1 << k) {
            let draft: Vec<u32> = (0..k as u32).collect();
            let target: Vec<u32> = (0..k as u32).map(|i| if matches >> i & 1 == 1 { i } else { 100 + i }).collect();
            for relaxed in 0u32..(1 << k) {
                let size = relaxed.count_ones() as usize;
                let scores: Vec<f32> = (0..k)
                    .map(|i| if relaxed >> i & 1 == 1 { -0.9 + 0.01 * i as f32 } else { 0.5 + 0.01 * i as f32 })
                    .collect();
                let mut step = DecodeStep::new(0, tokens(&draft), tokens(&target), rows_with_scores(&scores));
                step.relevance_labels = Some((0..k).map(|i| relaxed >> i & 1 == 0).collect());

                let accept: Vec<bool> = (0..k).map(|i| matches >> i & 1 == 1 || relaxed >> i & 1 == 1).collect();
                let expected = accept.iter().take_while(|&&a| a).count();

                let lambda = size as f64 / k as f64;
                let mut lv = BoundStrategy::new(StrategyConfig::lvspec(lambda, 1, false)).unwrap();
                let got = verify_step(&mut lv, &step, &visual).unwrap();
                assert_eq!(got.accepted_length, expected, "k={k} matches={matches:b} relaxed={relaxed:b}");

                let mut oracle = BoundStrategy::new(StrategyConfig::Oracle { pst: false }).unwrap();
                assert_eq!(verify_step(&mut oracle, &step, &visual).unwrap().accepted_length, expected);

                if relaxed == 0 {
                    let mut strict = BoundStrategy::new(StrategyConfig::Strict).unwrap();
                    let s = verify_step(&mut strict, &step, &visual).unwrap();
                    let mut pole = BoundStrategy::new(StrategyConfig::lvspec(0.0, 1, false)).unwrap();
                    assert_eq!(verify_step(&mut pole, &step, &visual).unwrap().per_position, s.per_position);
                }
                checked += 1;
            }
        }
    }
    checked
}
