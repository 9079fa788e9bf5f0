//! End-to-end generation runs under the replay transport: determinism
//! across runs and worker counts, attempt-cap behavior on refusals,
//! test-fold isolation, and the without-theory prompt shape.
//!
//! The committed fixture is regenerated with:
//!   cargo test -p smishkit-core --test llm_runs -- --ignored regen_committed_fixture

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use smishkit_core::corpus::{bundled_synthetic, make_folds, to_jsonl_string, Corpus, Label};
use smishkit_core::fixturegen::{write_fixture_for_plan, write_refusal_fixture};
use smishkit_core::gateway::{Gateway, GatewayConfig, TransportMode};
use smishkit_core::pipeline::{
    run_llm_augmentation, AugmentationPlan, Method, PromptFactory, RunOutcome, BucketKey,
};
use smishkit_core::promptgen::PromptTemplateSet;
use smishkit_core::validator::ValidationRules;

fn committed_fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay_fold20.jsonl")
}

/// The 20-message fixture fold: first 12 smishing and first 8 spam of the
/// bundled corpus, all in train.
fn fixture_corpus() -> Corpus {
    let bundled = bundled_synthetic();
    let smishing = bundled
        .messages
        .iter()
        .filter(|m| m.label == Label::Smishing)
        .take(12)
        .cloned();
    let spam = bundled
        .messages
        .iter()
        .filter(|m| m.label == Label::Spam)
        .take(8)
        .cloned();
    Corpus::new(smishing.chain(spam).collect()).unwrap()
}

fn full_train_plan(corpus: &Corpus, method: Method, factor: u32, seed: u64) -> AugmentationPlan {
    let fold = smishkit_core::corpus::FoldPlan {
        repeat_index: 0,
        train_ids: corpus.messages.iter().map(|m| m.id.clone()).collect(),
        test_ids: BTreeSet::new(),
        seed,
    };
    let train = corpus.subset(&fold.train_ids);
    AugmentationPlan::new(method, factor, fold, seed, &train, false).unwrap()
}

fn replay_gateway(fixture: &Path) -> Gateway {
    Gateway::new(
        GatewayConfig::default(),
        TransportMode::Replay {
            fixture: fixture.to_path_buf(),
        },
    )
    .unwrap()
}

/// Regenerates the committed fixture; run explicitly after changing
/// templates, the bundled corpus, or seed derivation.
#[test]
#[ignore]
fn regen_committed_fixture() {
    let corpus = fixture_corpus();
    let plan = full_train_plan(&corpus, Method::LlmTheory, 2, 4242);
    let templates = PromptTemplateSet::embedded_default();
    std::fs::create_dir_all(committed_fixture_path().parent().unwrap()).unwrap();
    let entries =
        write_fixture_for_plan(&plan, &corpus, &templates, &committed_fixture_path(), 4).unwrap();
    println!("wrote {entries} fixture entries");
}

#[test]
fn replay_run_doubles_the_fixture_fold_deterministically() {
    let corpus = fixture_corpus();
    assert_eq!(corpus.len(), 20);
    let plan = full_train_plan(&corpus, Method::LlmTheory, 2, 4242);
    let templates = PromptTemplateSet::embedded_default();
    let rules = ValidationRules::default();
    let fixture = committed_fixture_path();
    assert!(
        fixture.exists(),
        "committed fixture missing; run the regen_committed_fixture test"
    );

    let started = std::time::Instant::now();
    let mut outputs = Vec::new();
    for workers in [1usize, 4, 1, 4, 1, 4] {
        let gateway = replay_gateway(&fixture);
        let output =
            run_llm_augmentation(&plan, &corpus, &templates, &gateway, &rules, workers).unwrap();
        assert_eq!(output.manifest.outcome, RunOutcome::Success);
        assert_eq!(output.corpus.len(), 40);
        assert_eq!(output.manifest.accepted, 20);
        outputs.push((
            to_jsonl_string(&output.corpus),
            serde_json::to_string(&output.rejections).unwrap(),
            serde_json::to_string(&output.manifest.prompts).unwrap(),
        ));
    }
    for window in outputs.windows(2) {
        assert_eq!(window[0], window[1], "replay output varies across runs/workers");
    }
    assert!(
        started.elapsed().as_secs() < 10,
        "six replay runs took {:?}",
        started.elapsed()
    );
}

#[test]
fn replay_accepts_carry_generation_provenance() {
    let corpus = fixture_corpus();
    let plan = full_train_plan(&corpus, Method::LlmTheory, 2, 4242);
    let templates = PromptTemplateSet::embedded_default();
    let gateway = replay_gateway(&committed_fixture_path());
    let output = run_llm_augmentation(
        &plan,
        &corpus,
        &templates,
        &gateway,
        &ValidationRules::default(),
        2,
    )
    .unwrap();

    let prompt_log: BTreeSet<&str> = output
        .manifest
        .prompts
        .iter()
        .map(|p| p.prompt_id.as_str())
        .collect();
    for message in &output.corpus.messages {
        if message.source.is_llm() {
            let prompt_id = message.prompt_id.as_deref().expect("generated has prompt_id");
            assert!(
                prompt_log.contains(prompt_id),
                "prompt {prompt_id} not in the run's provenance log"
            );
            assert_eq!(message.source, smishkit_core::corpus::Source::LlmTheory);
            assert!(message.principle.is_some() || message.label == Label::Spam);
        }
    }
    // Theory quotas follow the annotated distribution: P1 6, P2 5, P3 1.
    let quota_by_bucket: Vec<(String, usize)> = output
        .manifest
        .plan
        .quotas
        .iter()
        .map(|q| (BucketKey::new(q.label, q.principle).id(), q.quota))
        .collect();
    assert_eq!(
        quota_by_bucket,
        vec![
            ("smishing/P1".to_string(), 6),
            ("smishing/P2".to_string(), 5),
            ("smishing/P3".to_string(), 1),
            ("spam".to_string(), 8),
        ]
    );
}

#[test]
fn refusal_fixture_hits_attempt_cap_with_zero_accepts() {
    let corpus = fixture_corpus();
    let mut plan = full_train_plan(&corpus, Method::LlmPlain, 2, 77);
    plan.attempt_cap_multiplier = 3; // keep the fixture small
    let templates = PromptTemplateSet::embedded_default();
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("refusals.jsonl");
    write_refusal_fixture(&plan, &corpus, &templates, &fixture).unwrap();

    let gateway = replay_gateway(&fixture);
    let output = run_llm_augmentation(
        &plan,
        &corpus,
        &templates,
        &gateway,
        &ValidationRules::default(),
        1,
    )
    .unwrap();
    match &output.manifest.outcome {
        RunOutcome::AttemptCapReached {
            bucket,
            requests,
            accepted,
        } => {
            assert_eq!(bucket, "smishing");
            assert_eq!(*accepted, 0);
            // quota 12, m 10 -> cap = 3 * ceil(12/10) = 6 requests
            assert_eq!(*requests, 6);
        }
        other => panic!("expected attempt cap, got {other:?}"),
    }
    // Partial output: the originals survived, nothing was fabricated.
    assert_eq!(output.corpus.len(), 20);
    assert_eq!(output.manifest.accepted, 0);
}

#[test]
fn without_theory_prompts_omit_the_persuasion_section() {
    let corpus = fixture_corpus();
    let plan = full_train_plan(&corpus, Method::LlmPlain, 2, 31);
    let templates = PromptTemplateSet::embedded_default();
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("plain.jsonl");
    write_fixture_for_plan(&plan, &corpus, &templates, &fixture, 4).unwrap();

    let gateway = replay_gateway(&fixture);
    let output = run_llm_augmentation(
        &plan,
        &corpus,
        &templates,
        &gateway,
        &ValidationRules::default(),
        2,
    )
    .unwrap();
    assert_eq!(output.manifest.outcome, RunOutcome::Success);
    assert_eq!(output.corpus.len(), 40);

    // Re-derive every consumed prompt and check its shape.
    let train = corpus.subset(&plan.fold.train_ids);
    for record in &output.manifest.prompts {
        let (label, principle) = match record.bucket.as_str() {
            "smishing" => (Label::Smishing, None),
            "spam" => (Label::Spam, None),
            other => panic!("unexpected bucket {other}"),
        };
        let pool: Vec<_> = train.iter().filter(|m| m.label == label).cloned().collect();
        let factory = PromptFactory::new(
            plan.run_seed,
            BucketKey::new(label, principle),
            &pool,
            &templates,
        );
        let bundle = factory.bundle(record.request_index).unwrap();
        assert_eq!(bundle.prompt_id, record.prompt_id, "prompt stream drifted");
        assert!(bundle.persuasion_text.is_none());
        assert!(!bundle.rendered.contains("persuasion principle"));
    }
}

#[test]
fn demos_never_come_from_the_test_fold() {
    // Real 5-fold split over the ham-free bundled corpus; run fold 0.
    let bundled = bundled_synthetic();
    let working = Corpus::new(
        bundled
            .messages
            .into_iter()
            .filter(|m| m.label != Label::Ham)
            .collect(),
    )
    .unwrap();
    let folds = make_folds(&working, 5, 99).unwrap();
    let fold = folds[0].clone();
    let train = working.subset(&fold.train_ids);
    let plan = AugmentationPlan::new(Method::LlmTheory, 2, fold.clone(), 99, &train, false).unwrap();

    let templates = PromptTemplateSet::embedded_default();
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fold0.jsonl");
    write_fixture_for_plan(&plan, &working, &templates, &fixture, 4).unwrap();
    let gateway = replay_gateway(&fixture);
    let output = run_llm_augmentation(
        &plan,
        &working,
        &templates,
        &gateway,
        &ValidationRules::default(),
        2,
    )
    .unwrap();
    assert_eq!(output.manifest.outcome, RunOutcome::Success);
    assert_eq!(output.corpus.len(), 2 * train.len());

    // Every demo in every consumed prompt is a train message.
    for record in &output.manifest.prompts {
        let (label, principle) = match record.bucket.as_str() {
            "spam" => (Label::Spam, None),
            bucket => {
                let code = bucket.split('/').nth(1).unwrap();
                (
                    Label::Smishing,
                    Some(smishkit_core::taxonomy::PersuasionPrinciple::parse(code).unwrap()),
                )
            }
        };
        let pool: Vec<_> = train
            .iter()
            .filter(|m| m.label == label && (principle.is_none() || m.principle == principle))
            .cloned()
            .collect();
        let factory =
            PromptFactory::new(plan.run_seed, BucketKey::new(label, principle), &pool, &templates);
        let bundle = factory.bundle(record.request_index).unwrap();
        assert_eq!(bundle.prompt_id, record.prompt_id);
        for demo in &bundle.demos {
            assert!(fold.train_ids.contains(&demo.id), "demo {} from test fold", demo.id);
            assert!(!fold.test_ids.contains(&demo.id));
        }
    }

    // And no augmented text collides with a train original or another
    // augmented text after normalization.
    let mut seen = std::collections::HashSet::new();
    for message in &output.corpus.messages {
        assert!(
            seen.insert(smishkit_core::validator::normalize(&message.text)),
            "normalized collision on {}",
            message.id
        );
    }
}
