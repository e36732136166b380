mod common;

use std::collections::BTreeSet;

use approx::assert_relative_eq;
use common::*;
use kgnav::controllers::{score_and_backfill, ControllerConfig, EvidenceSource};
use kgnav::corpus::{char_slice, chunk_document};
use kgnav::eval::{jaccard, paired_bootstrap, prf1, win_tie_loss};
use kgnav::fuzzy::{levenshtein, partial_fuzzy_score};
use kgnav::tools::{Clock, ToolContext};
use kgnav::vector::{cosine01, Embedding, VectorIndex};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

fn paragraphs() -> impl Strategy<Value = String> {
    prop::collection::vec(1usize..600, 1..6).prop_map(|lens| {
        let mut n = 0;
        lens.iter()
            .map(|&len| {
                let words: Vec<String> = (0..len)
                    .map(|_| {
                        n += 1;
                        format!("w{n}")
                    })
                    .collect();
                words.join(" ")
            })
            .collect::<Vec<_>>()
            .join("\n\n")
    })
}

fn unit_vector(dim: usize) -> impl Strategy<Value = Embedding> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_map(|v| Embedding::from_raw(&v))
}

proptest! {
    #[test]
    fn chunks_respect_budget_and_cover_every_word(text in paragraphs(), max in 20usize..300, overlap_frac in 0.0f64..0.5) {
        let overlap = (max as f64 * overlap_frac) as usize;
        let d = doc("p", &text);
        let chunks = chunk_document(&d, max, overlap);
        let mut seen = BTreeSet::new();
        for c in &chunks {
            prop_assert!(c.word_count <= max);
            prop_assert_eq!(char_slice(&d.text, c.start_char, c.end_char), Some(c.text.as_str()));
            seen.extend(c.text.split_whitespace().map(str::to_string));
        }
        prop_assert_eq!(seen.len(), text.split_whitespace().count());
    }

    #[test]
    fn fuzzy_score_is_symmetric_and_bounded(a in "[a-d ]{0,12}", b in "[a-d ]{0,12}") {
        let s = partial_fuzzy_score(&a, &b);
        prop_assert!(s <= 100);
        prop_assert_eq!(s, partial_fuzzy_score(&b, &a));
        prop_assert_eq!(s, brute_partial_score(&a, &b));
    }

    #[test]
    fn substring_scores_full(a in "[a-z]{1,10}", pre in "[a-z]{0,5}", post in "[a-z]{0,5}") {
        prop_assert_eq!(partial_fuzzy_score(&a, &format!("{pre}{a}{post}")), 100);
    }

    #[test]
    fn levenshtein_is_a_metric(a in "[ab]{0,8}", b in "[ab]{0,8}", c in "[ab]{0,8}") {
        let (a, b, c): (Vec<char>, Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect(), c.chars().collect());
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &b), edit_distance(&a, &b));
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn cosine_stays_in_unit_interval(a in unit_vector(16), b in unit_vector(16)) {
        let c = cosine01(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert_eq!(c, cosine01(&b, &a).unwrap());
    }

    #[test]
    fn top_k_is_a_prefix_of_full_ranking(vs in prop::collection::vec(unit_vector(8), 1..40), q in unit_vector(8), k in 1usize..50) {
        let mut index = VectorIndex::new(8);
        for (i, v) in vs.iter().enumerate() {
            index.upsert(&format!("v{i:02}"), v.clone()).unwrap();
        }
        let all = index.search_top_k(&q, usize::MAX).unwrap();
        let top = index.search_top_k(&q, k).unwrap();
        prop_assert_eq!(top.len(), k.min(vs.len()));
        prop_assert_eq!(&all[..top.len()], &top[..]);
        prop_assert!(all.windows(2).all(|w| w[0].similarity >= w[1].similarity));
    }

    #[test]
    fn bootstrap_shift_moves_interval(deltas in prop::collection::vec(-1.0f64..1.0, 2..60), shift in -1.0f64..1.0, seed: u64) {
        let base = paired_bootstrap(&deltas, 500, seed).unwrap();
        let moved: Vec<f64> = deltas.iter().map(|d| d + shift).collect();
        let m = paired_bootstrap(&moved, 500, seed).unwrap();
        assert_relative_eq!(m.mean_delta, base.mean_delta + shift, epsilon = 1e-12);
        assert_relative_eq!(m.ci_low, base.ci_low + shift, epsilon = 1e-12);
        assert_relative_eq!(m.ci_high, base.ci_high + shift, epsilon = 1e-12);
        prop_assert!(base.ci_low <= base.ci_high);
        prop_assert!((0.0..=1.0).contains(&base.p_two_sided));
    }

    #[test]
    fn win_tie_loss_partitions(deltas in prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], 0..50)) {
        let (w, t, l) = win_tie_loss(&deltas);
        prop_assert_eq!(w + t + l, deltas.len());
    }

    #[test]
    fn prf1_bounds(retrieved in prop::collection::vec(0u8..20, 0..20), gold in prop::collection::btree_set(0u8..20, 0..10)) {
        let r: Vec<String> = retrieved.iter().map(|x| x.to_string()).collect();
        let g: BTreeSet<String> = gold.iter().map(|x| x.to_string()).collect();
        let p = prf1(r.iter().map(String::as_str), &g);
        for v in [p.precision, p.recall, p.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(p.f1 <= p.precision.max(p.recall) + 1e-12);
        if g.is_empty() {
            prop_assert_eq!(p.recall, 1.0);
        }
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(a in prop::collection::btree_set(0u8..10, 0..8), b in prop::collection::btree_set(0u8..10, 0..8)) {
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn neighbors_are_symmetric(seed: u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_mention_graph(&mut rng, 12, 10, 4);
        let graph = g.engine.graph();
        for e in graph.entities() {
            for n in graph.co_mention_neighbors(&e.entity_uri).unwrap() {
                let back = graph.co_mention_neighbors(&n.neighbor_uri).unwrap();
                prop_assert!(back.iter().any(|b| b.neighbor_uri == e.entity_uri && b.shared_chunks == n.shared_chunks));
            }
        }
    }

    #[test]
    fn reachability_is_monotone_in_hops(seed: u64) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_mention_graph(&mut rng, 10, 12, 3);
        let graph = g.engine.graph();
        let seeds: Vec<&str> = graph.entities().iter().take(2).map(|e| e.entity_uri.as_str()).collect();
        let gold: BTreeSet<String> = (0..g.docs.len()).step_by(3).map(|i| g.chunk_id(i)).collect();
        let mut last = 0.0;
        for h in 0..5 {
            let r = graph.reachability_at_h(&seeds, &gold, h);
            prop_assert!(r >= last && r <= 1.0);
            last = r;
        }
    }

    #[test]
    fn evidence_has_k_unique_sorted_items(seed: u64, n_collect in 0usize..30) {
        let mut rng = StdRng::seed_from_u64(seed);
        let g = random_mention_graph(&mut rng, 8, 30, 2);
        let cfg = ControllerConfig::default();
        let ids: Vec<String> = g.engine.index().ids().iter().take(n_collect).cloned().collect();
        let q = g.engine.embedder().embed("what links the harbor").unwrap();
        let ctx: ToolContext<'_> = g.engine.context(None, 10, Clock::Frozen);
        let items = score_and_backfill(ids.iter().map(String::as_str), &q, ctx, &cfg).unwrap();
        prop_assert_eq!(items.len(), cfg.k.min(g.docs.len()));
        let unique: BTreeSet<&str> = items.iter().map(|i| i.chunk_id.as_str()).collect();
        prop_assert_eq!(unique.len(), items.len());
        prop_assert!(items.windows(2).all(|w| w[0].score >= w[1].score));
        for i in &items {
            prop_assert_eq!(i.source == EvidenceSource::Explored, ids.contains(&i.chunk_id));
        }
    }
}
