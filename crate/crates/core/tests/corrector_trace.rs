mod common;

use logparse::corrector::{correct, fallback_template, flag_wildcards, verify_match};
use logparse::{CompletionSettings, CorrectorConfig, MockBackend, PromptKind, Template, TemplateToken};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOG: &str = "Writing block rdd_1_3 to disk";

#[test]
fn accepts_after_two_corrections_with_rising_temperature() {
    let config = CorrectorConfig::default();
    let mut mock = MockBackend::new();
    mock.script(PromptKind::MatchCorrection, LOG, "`Writing block <*> to tape`");
    mock.script(PromptKind::MatchCorrection, LOG, "`Writing block <*> to disk`");

    let outcome = correct(
        LOG,
        Template::parse("Writing <*> to tape"),
        &mut mock,
        &config,
        &CompletionSettings::default(),
    )
    .unwrap();
    assert_eq!(outcome.template.render(), "Writing block <*> to disk");
    assert_eq!(outcome.iterations_used, 2);
    assert!(outcome.accepted);
    assert!(!outcome.fallback_used);
    assert_eq!(mock.temperatures(), vec![config.alpha, 2.0 * config.alpha]);
    assert!(mock.calls().iter().all(|c| c.kind == PromptKind::MatchCorrection));
}

#[test]
fn falls_back_when_nothing_verifies() {
    let config = CorrectorConfig::default();
    let mut mock = MockBackend::new();
    for _ in 0..config.max_iterations {
        mock.script(PromptKind::MatchCorrection, LOG, "`Reading block <*> from disk`");
    }
    let outcome = correct(
        LOG,
        Template::parse("Writing <*> to tape"),
        &mut mock,
        &config,
        &CompletionSettings::default(),
    )
    .unwrap();
    assert!(outcome.fallback_used);
    assert!(!outcome.accepted);
    assert_eq!(outcome.iterations_used, config.max_iterations);
    assert_eq!(outcome.template.render(), "Writing block <*> to disk");
    assert_eq!(mock.temperatures(), vec![0.25, 0.5, 0.75]);
}

#[test]
fn gateway_error_aborts_with_best_template() {
    let mut mock = MockBackend::new();
    let err = correct(
        LOG,
        Template::parse("Writing <*> to tape"),
        &mut mock,
        &CorrectorConfig::default(),
        &CompletionSettings::default(),
    )
    .unwrap_err();
    assert_eq!(err.iterations_used, 0);
    assert_eq!(err.best.render(), "Writing <*> to tape");
}

#[test]
fn glued_token_does_not_verify() {
    let content = "Received 0x300sent bytes";
    assert!(!verify_match(content, &Template::parse("Received <*> sent bytes")));
    assert!(!verify_match(content, &Template::parse("Received 0x300 sent bytes")));
    assert!(verify_match(content, &Template::parse("Received <*> bytes")));
}

#[test]
fn message_after_exception_is_flagged() {
    let content = "IOException: Could not read from stream";
    let template = Template::parse("IOException: <*>");
    let flags = flag_wildcards(content, &template, &CorrectorConfig::default());
    assert_eq!(flags, vec!["Could not read from stream".to_string()]);
}

#[test]
fn abstraction_correction_replaces_flagged_capture() {
    let content = "IOException: Could not read from stream";
    let mut mock = MockBackend::new();
    mock.script(
        PromptKind::AbstractionCorrection,
        content,
        "`IOException: Could not read from stream`",
    );
    let outcome = correct(
        content,
        Template::parse("IOException: <*>"),
        &mut mock,
        &CorrectorConfig::default(),
        &CompletionSettings::default(),
    )
    .unwrap();
    assert_eq!(outcome.template.render(), content);
    assert_eq!(outcome.iterations_used, 1);
    assert!(outcome.flags_remaining.is_empty());
}

#[test]
fn unchanged_flags_are_not_retried() {
    let content = "task failed: disk 3";
    let mut mock = MockBackend::new();
    mock.script(PromptKind::AbstractionCorrection, content, "`task failed: <*>`");
    let outcome = correct(
        content,
        Template::parse("task failed: <*>"),
        &mut mock,
        &CorrectorConfig::default(),
        &CompletionSettings::default(),
    )
    .unwrap();
    assert_eq!(outcome.iterations_used, 1);
    assert!(outcome.accepted);
    assert_eq!(outcome.flags_remaining, vec!["disk 3".to_string()]);
}

#[test]
fn fallback_always_verifies() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pieces = ["id=4", "user", "10.0.0.1:80", "ok", "blk_-17", "(x)", "*", "done."];
    for _ in 0..300 {
        let content: Vec<&str> = (0..rng.gen_range(1..10)).map(|_| pieces[rng.gen_range(0..pieces.len())]).collect();
        let content = content.join(" ");
        let fallback = fallback_template(&content);
        assert!(verify_match(&content, &fallback), "{content}");
        for (token, word) in fallback.tokens().iter().zip(content.split(' ')) {
            assert_eq!(token.is_wildcard(), word.chars().any(|c| c.is_ascii_digit()));
        }
    }
}

#[test]
fn verification_agrees_with_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let vocab = ["send", "recv", "port", "ok", "a.b", "[x]"];
    for _ in 0..500 {
        let template = common::random_template(&mut rng, &vocab, 7, 0.3);
        let content = common::instantiate(&mut rng, &template, &["1", "22", "zz"], 2).join(" ");
        assert!(verify_match(&content, &template), "{template} / {content}");

        if let Some(pos) = template.tokens().iter().position(|t| !t.is_wildcard()) {
            let mut tokens = template.tokens().to_vec();
            tokens[pos] = TemplateToken::Constant("missing".into());
            assert!(!verify_match(&content, &Template::from_tokens(tokens)));
        }
    }
}
