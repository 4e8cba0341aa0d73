mod common;

use std::collections::BTreeSet;

use logparse::tree::token_bindings;
use logparse::{ExactParseTree, MatchOutcome, ParseTree, Template, TreeConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &["a", "b", "c", "d"];
const FILL: &[&str] = &["a", "b", "c", "d", "e"];

#[test]
fn lookups_agree_with_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut hits = 0;
    for _ in 0..500 {
        let mut tree = ParseTree::default();
        let mut stored: Vec<Template> = Vec::new();
        for _ in 0..rng.gen_range(0..=30) {
            let t = common::random_template(&mut rng, VOCAB, 6, 0.3);
            tree.insert(&t);
            if !stored.contains(&t) {
                stored.push(t);
            }
        }
        let query: Vec<String> = if !stored.is_empty() && rng.gen_bool(0.6) {
            let t = &stored[rng.gen_range(0..stored.len())];
            common::instantiate(&mut rng, t, FILL, 3)
        } else {
            (0..rng.gen_range(1..=8))
                .map(|_| FILL[rng.gen_range(0..FILL.len())].to_string())
                .collect()
        };
        let query: Vec<&str> = query.iter().map(String::as_str).collect();

        let expected = common::naive_best_match(&stored, &query);
        match (tree.match_tokens(&query), expected) {
            (MatchOutcome::Hit { template, bindings }, Some(winner)) => {
                assert_eq!(&template, winner, "query {query:?}");
                assert_eq!(bindings.len(), template.wildcard_count());
                hits += 1;
            }
            (MatchOutcome::Miss { .. }, None) => {}
            (got, want) => panic!("query {query:?}: tree {got:?}, oracle {want:?}"),
        }
    }
    assert!(hits > 100, "too few hits exercised: {hits}");
}

#[test]
fn leaf_count_equals_distinct_templates() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tree = ParseTree::default();
    let mut distinct = BTreeSet::new();
    for _ in 0..100 {
        let t = common::random_template(&mut rng, VOCAB, 4, 0.3);
        tree.insert(&t);
        distinct.insert(t.render());
    }
    assert_eq!(tree.leaf_count(), distinct.len());
}

#[test]
fn bindings_rebuild_the_query() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..300 {
        let t = common::random_template(&mut rng, VOCAB, 6, 0.4);
        let query = common::instantiate(&mut rng, &t, FILL, 3);
        let bindings = token_bindings(&t, &query).expect("instantiation matches");
        let mut values = bindings.into_iter().map(|b| b.value);
        let rebuilt: Vec<String> = t
            .tokens()
            .iter()
            .map(|tok| match tok {
                logparse::TemplateToken::Constant(c) => c.clone(),
                logparse::TemplateToken::Wildcard => values.next().unwrap(),
            })
            .collect();
        assert_eq!(rebuilt.join(" "), query.join(" "));
    }
}

#[test]
fn shutdown_group_merges_to_wildcard() {
    let mut tree = ExactParseTree::default();
    let relevant: Vec<Template> = ["ntpd", "crond", "xinetd", "sshd", "klogd"]
        .iter()
        .map(|d| Template::parse(&format!("{d} shutdown succeeded")))
        .collect();
    for t in &relevant {
        tree.insert(t);
    }
    let result = tree.absorb(&Template::parse("apmd shutdown succeeded"), &relevant);
    assert_eq!(result.stored.render(), "<*> shutdown succeeded");
    assert_eq!(tree.leaf_count(), 1);
}

#[test]
fn mount_pair_stays_separate() {
    // sim = 2*3/(4+4) = 0.75 < 0.8 and the group holds 2 distinct tokens.
    let mut tree = ExactParseTree::default();
    tree.insert(&Template::parse("mount succeeded for <*>"));
    let result = tree.absorb(
        &Template::parse("mount failed for <*>"),
        &[Template::parse("mount succeeded for <*>")],
    );
    assert!(result.merged_with.is_empty());
    assert_eq!(tree.leaf_count(), 2);
}

/// One operation: a query whose miss (if any) is absorbed with `template`.
fn apply(tree: &mut ParseTree, template: &Template) -> usize {
    let query: Vec<String> = template.token_strs().iter().map(|s| s.replace("<*>", "v")).collect();
    let relevant = match tree.match_tokens(&query) {
        MatchOutcome::Miss { relevant } => relevant,
        MatchOutcome::Hit { .. } => Vec::new(),
    };
    tree.absorb(template, &relevant);
    1
}

fn arb_template() -> impl Strategy<Value = Template> {
    prop::collection::vec(
        prop_oneof![1 => Just("<*>".to_string()), 3 => "[a-f]".prop_map(String::from)],
        1..6,
    )
    .prop_map(|tokens| Template::parse(&tokens.join(" ")))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn absorb_preserves_matches_and_stays_deterministic(
        ops in prop::collection::vec(arb_template(), 1..25),
        probes in prop::collection::vec(prop::collection::vec("[a-fv]", 1..7), 20),
    ) {
        let config = TreeConfig { divergence_threshold: 2, ..TreeConfig::default() };
        let mut tree = ParseTree::new(config);
        let mut calls = 0;
        for template in &ops {
            let before: Vec<bool> = probes.iter().map(|p| tree.match_tokens(p).is_hit()).collect();
            calls += apply(&mut tree, template);
            for (probe, was_hit) in probes.iter().zip(before) {
                if was_hit {
                    prop_assert!(tree.match_tokens(probe).is_hit(), "lost match for {:?}", probe);
                }
            }
            prop_assert!(tree.leaf_count() <= calls);
        }

        // Every stored template still matches one of its instantiations, and
        // whatever wins is at least as specific.
        for (template, _) in tree.templates() {
            let query: Vec<String> = template
                .token_strs()
                .iter()
                .enumerate()
                .map(|(i, s)| if *s == "<*>" { format!("fresh{i}") } else { s.to_string() })
                .collect();
            match tree.match_tokens(&query) {
                MatchOutcome::Hit { template: winner, .. } => {
                    prop_assert!(winner.constant_count() >= template.constant_count());
                }
                MatchOutcome::Miss { .. } => prop_assert!(false, "{} unreachable", template),
            }
        }

        let mut replay = ParseTree::new(config);
        for template in &ops {
            apply(&mut replay, template);
        }
        prop_assert_eq!(replay.templates(), tree.templates());
    }
}
