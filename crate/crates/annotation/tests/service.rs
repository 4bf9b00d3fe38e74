mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::thread;

use common::{score_all, service};
use miko_annotation::{
    sample_pool, Agreement, AnnotationError, AnnotationService, Decision, NextTask, ReviewStatus, ServiceConfig,
};
use miko_core::eval::{BenchmarkEntry, BenchmarkManifest};
use miko_core::records::Provenance;
use miko_core::Relation;
use proptest::prelude::*;

fn task_post(t: NextTask) -> String {
    match t {
        NextTask::Task(t) => t.post.id,
        NextTask::Done => panic!("expected a task"),
    }
}

#[test]
fn fresh_pool_of_one_thousand_serves_ten_intentions() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::kb(&dir.path().join("kb"), 1000);
    let pool = sample_pool(&kb, 1000, 42).unwrap();
    assert_eq!(pool.post_ids.len(), 1000);
    let svc = AnnotationService::create(&dir.path().join("s"), kb, &pool, ServiceConfig::default()).unwrap();
    match svc.next_task("ann").unwrap() {
        NextTask::Task(t) => {
            assert_eq!(t.intentions.len(), 10);
            assert_eq!(t.post.id, pool.post_ids[0]);
            assert!(t.scored.is_empty());
        }
        NextTask::Done => panic!("expected a task"),
    }
}

#[test]
fn sampling_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::kb(dir.path(), 50);
    let a = sample_pool(&kb, 10, 7).unwrap();
    let b = sample_pool(&kb, 10, 7).unwrap();
    let c = sample_pool(&kb, 10, 8).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.post_ids, c.post_ids);
    assert_eq!(a.post_ids.iter().collect::<BTreeSet<_>>().len(), 10);
    assert_eq!(sample_pool(&kb, 500, 7).unwrap().post_ids.len(), 50);
}

#[test]
fn annotator_who_scored_everything_is_done() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 2, ServiceConfig::default());
    for _ in 0..2 {
        let post = task_post(svc.next_task("a").unwrap());
        score_all(&svc, &post, "a", 1, &[]);
    }
    assert_eq!(svc.next_task("a").unwrap(), NextTask::Done);
    assert!(matches!(svc.next_task("b").unwrap(), NextTask::Task(_)));
}

#[test]
fn refetch_before_finishing_returns_the_same_post() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 3, ServiceConfig::default());
    let first = task_post(svc.next_task("a").unwrap());
    svc.submit_score(&first, Relation::XNeed, "a", 1).unwrap();
    match svc.next_task("a").unwrap() {
        NextTask::Task(t) => {
            assert_eq!(t.post.id, first);
            assert_eq!(t.scored, BTreeMap::from([(Relation::XNeed, 1)]));
        }
        NextTask::Done => panic!(),
    }
    // Another annotator is steered to a different post while the lease holds.
    assert_ne!(task_post(svc.next_task("b").unwrap()), first);
}

#[test]
fn least_annotated_post_comes_first() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 3, ServiceConfig::default());
    score_all(&svc, "p0", "a", 1, &[]);
    score_all(&svc, "p1", "a", 1, &[]);
    assert_eq!(task_post(svc.next_task("b").unwrap()), "p2");
}

#[test]
fn interleaved_annotators_each_see_every_post_once() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Arc::new(service(dir.path(), 25, ServiceConfig::default()));
    let handles: Vec<_> = ["a", "b"]
        .into_iter()
        .map(|who| {
            let svc = svc.clone();
            thread::spawn(move || {
                let mut seen = Vec::new();
                while let NextTask::Task(t) = svc.next_task(who).unwrap() {
                    score_all(&svc, &t.post.id, who, 1, &[]);
                    seen.push(t.post.id);
                }
                seen
            })
        })
        .collect();
    for h in handles {
        let seen = h.join().unwrap();
        assert_eq!(seen.len(), 25);
        assert_eq!(seen.iter().collect::<BTreeSet<_>>().len(), 25);
    }
    assert!(svc.aggregate().iter().all(|a| a.complete_annotators == 2));
}

#[test]
fn score_validation_and_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 2, ServiceConfig::default());
    assert!(matches!(
        svc.submit_score("p0", Relation::XWant, "a", 2),
        Err(AnnotationError::InvalidValue(2))
    ));
    assert!(matches!(
        svc.submit_score("zzz", Relation::XWant, "a", 1),
        Err(AnnotationError::UnknownTask { .. })
    ));
    svc.submit_score("p0", Relation::XWant, "a", 1).unwrap();
    svc.submit_score("p0", Relation::XWant, "a", 0).unwrap();
    assert_eq!(svc.aggregate_post("p0").unwrap().per_relation_score[&Relation::XWant], 0.0);
}

#[test]
fn ten_submissions_complete_the_post() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 1, ServiceConfig::default());
    for (i, r) in Relation::ALL.iter().enumerate() {
        assert_eq!(svc.aggregate_post("p0").map(|a| a.complete_annotators).unwrap_or(0), 0);
        svc.submit_score("p0", *r, "a", (i % 3) as i64 - 1).unwrap();
    }
    assert_eq!(svc.aggregate_post("p0").unwrap().complete_annotators, 1);
    assert_eq!(svc.next_task("a").unwrap(), NextTask::Done);
}

#[test]
fn aggregate_hand_cases() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 3, ServiceConfig::default());
    score_all(&svc, "p0", "a", 1, &[]);
    score_all(&svc, "p1", "a", 0, &[]);
    score_all(&svc, "p2", "a", 1, &[(Relation::XWant, 1)]);
    score_all(&svc, "p2", "b", 1, &[(Relation::XWant, 0)]);
    let agg: BTreeMap<String, _> = svc.aggregate().into_iter().map(|a| (a.post_id.clone(), a)).collect();

    assert_eq!(agg["p0"].total, 10.0);
    assert!(agg["p0"].eligible);
    assert_eq!(agg["p0"].review_status, ReviewStatus::Pending);
    assert_eq!(agg["p1"].total, 0.0);
    assert!(!agg["p1"].eligible);
    assert_eq!(agg["p1"].review_status, ReviewStatus::NotEligible);
    assert_eq!(agg["p2"].per_relation_score[&Relation::XWant], 0.5);
    assert_eq!(agg["p2"].total, 9.5);
    assert!(agg["p2"].eligible);
}

#[test]
fn majority_agreement_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        agreement: Agreement::Majority,
        ..Default::default()
    };
    let svc = service(dir.path(), 1, cfg);
    score_all(&svc, "p0", "a", 1, &[(Relation::XWant, 1)]);
    score_all(&svc, "p0", "b", 1, &[(Relation::XWant, 0)]);
    score_all(&svc, "p0", "c", 1, &[(Relation::XWant, 0)]);
    let a = svc.aggregate_post("p0").unwrap();
    assert_eq!(a.per_relation_score[&Relation::XWant], 0.0);
    assert_eq!(a.total, 9.0);
}

#[test]
fn exactly_five_is_not_eligible() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 1, ServiceConfig::default());
    let half: Vec<(Relation, i64)> = Relation::ALL[5..].iter().map(|r| (*r, 0)).collect();
    score_all(&svc, "p0", "a", 1, &half);
    let a = svc.aggregate_post("p0").unwrap();
    assert_eq!(a.total, 5.0);
    assert!(!a.eligible);
    assert!(svc.review_queue().is_empty());
    assert!(matches!(
        svc.review_decision("p0", Decision::Admit, "r", &[]),
        Err(AnnotationError::NotEligible { .. })
    ));
}

#[test]
fn thirds_summing_to_five_stay_ineligible() {
    // Three annotators; each relation mean is 1/3 or 2/3 and they sum to exactly 5.
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 1, ServiceConfig::default());
    for (i, who) in ["a", "b", "c"].iter().enumerate() {
        let overrides: Vec<(Relation, i64)> = Relation::ALL
            .iter()
            .enumerate()
            .map(|(j, r)| (*r, if (i + j) % 3 == 0 { 0 } else { 1 }))
            .collect();
        score_all(&svc, "p0", who, 0, &overrides);
    }
    let a = svc.aggregate_post("p0").unwrap();
    assert!((a.total - 20.0 / 3.0).abs() < 1e-9);
    assert!(a.eligible);

    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 1, ServiceConfig::default());
    // Per relation two of three annotators give 1 on five relations and one of three on five: 5 * 2/3 + 5 * 1/3 = 5.
    for (i, who) in ["a", "b", "c"].iter().enumerate() {
        let overrides: Vec<(Relation, i64)> = Relation::ALL
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let ones = if j < 5 { 2 } else { 1 };
                (*r, if i < ones { 1 } else { 0 })
            })
            .collect();
        score_all(&svc, "p0", who, 0, &overrides);
    }
    let a = svc.aggregate_post("p0").unwrap();
    assert!((a.total - 5.0).abs() < 1e-9);
    assert!(!a.eligible);
}

#[test]
fn review_admit_and_reject() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 3, ServiceConfig::default());
    for p in ["p0", "p1"] {
        score_all(&svc, p, "a", 1, &[]);
    }
    assert_eq!(svc.review_queue().len(), 2);
    svc.review_decision("p0", Decision::Admit, "rev", &[]).unwrap();
    svc.review_decision("p1", Decision::Reject, "rev", &[]).unwrap();
    assert!(svc.review_queue().is_empty());
    assert!(matches!(
        svc.review_decision("p0", Decision::Reject, "rev", &[]),
        Err(AnnotationError::AlreadyReviewed(_))
    ));
    let entries = svc.benchmark_entries().unwrap();
    assert_eq!(entries.len(), 10);
    assert!(entries.iter().all(|e| e.post_id == "p0"));
    assert_eq!(entries[0].gold_text, "xNeed intention of p0");
    assert_eq!(svc.aggregate_post("p1").unwrap().review_status, ReviewStatus::Rejected);
}

#[test]
fn reviewer_may_exclude_only_low_scoring_relations() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 1, ServiceConfig::default());
    score_all(&svc, "p0", "a", 1, &[(Relation::XReact, 0)]);
    assert!(matches!(
        svc.review_decision("p0", Decision::Admit, "rev", &[Relation::XWant]),
        Err(AnnotationError::InvalidExclusion { .. })
    ));
    svc.review_decision("p0", Decision::Admit, "rev", &[Relation::XReact]).unwrap();
    let m = svc.benchmark_manifest().unwrap();
    assert_eq!(m.total, 9);
    assert_eq!(m.per_relation_counts[&Relation::XReact], 0);
}

#[test]
fn admissions_are_sticky() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 1, ServiceConfig::default());
    score_all(&svc, "p0", "a", 1, &[]);
    svc.review_decision("p0", Decision::Admit, "rev", &[]).unwrap();
    assert!(matches!(
        svc.submit_score("p0", Relation::XWant, "b", -1),
        Err(AnnotationError::AlreadyReviewed(_))
    ));
    for _ in 0..3 {
        assert_eq!(svc.aggregate()[0].review_status, ReviewStatus::Admitted);
    }
    assert_eq!(svc.next_task("b").unwrap(), NextTask::Done);
}

#[test]
fn export_counts() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 4, ServiceConfig::default());
    let out = dir.path().join("bench/benchmark.jsonl");
    assert!(matches!(svc.export_benchmark(&out), Err(AnnotationError::EmptyBenchmark)));

    score_all(&svc, "p0", "a", 1, &[]);
    svc.review_decision("p0", Decision::Admit, "rev", &[]).unwrap();
    let m = svc.export_benchmark(&out).unwrap();
    assert!(Relation::ALL.iter().all(|r| m.per_relation_counts[r] == 1));
    assert_eq!(m.total, 10);

    for p in ["p1", "p2"] {
        score_all(&svc, p, "a", 1, &[]);
        svc.review_decision(p, Decision::Admit, "rev", &[]).unwrap();
    }
    let m = svc.export_benchmark(&out).unwrap();
    assert_eq!(m.total, 30);
    assert_eq!(m.per_relation_counts.values().sum::<u64>(), m.total);
    assert_eq!(m.posts, 3);
    let lines = std::fs::read_to_string(&out).unwrap().lines().count();
    assert_eq!(lines, 30);
    let written: BenchmarkManifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("bench/benchmark.manifest.json")).unwrap()).unwrap();
    assert_eq!(written, m);
    let loaded = miko_core::eval::load_benchmark(&out).unwrap();
    assert_eq!(loaded.len(), 30);
}

#[test]
fn table_two_shaped_manifest() {
    let counts = [
        (Relation::XWant, 853),
        (Relation::OEffect, 837),
        (Relation::XAttr, 799),
        (Relation::XIntent, 818),
        (Relation::XReact, 654),
        (Relation::OReact, 772),
        (Relation::OWant, 828),
        (Relation::XEffect, 758),
        (Relation::XNeed, 717),
        (Relation::Open, 832),
    ];
    let entries: Vec<BenchmarkEntry> = counts
        .iter()
        .flat_map(|(r, n)| {
            (0..*n).map(move |i| BenchmarkEntry {
                post_id: format!("p{i}"),
                relation: *r,
                gold_text: "x".into(),
                source_provenance: Provenance {
                    caption_used: false,
                    keyinfo_digest: String::new(),
                    template_versions: BTreeMap::new(),
                    model_id: String::new(),
                    temperature: 0.0,
                },
            })
        })
        .collect();
    let m = BenchmarkManifest::from_entries(&entries);
    assert_eq!(m.total, 7868);
    assert_eq!(m.average, 787);
}

#[test]
fn session_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let svc = service(dir.path(), 3, ServiceConfig::default());
        score_all(&svc, "p0", "a", 1, &[(Relation::Open, -1)]);
        score_all(&svc, "p1", "b", 0, &[]);
        svc.review_decision("p0", Decision::Admit, "rev", &[Relation::Open]).unwrap();
        svc.aggregate()
    };
    let kb = Arc::new(miko_core::KnowledgeBase::open(dir.path().join("kb")).unwrap());
    let svc = AnnotationService::open(&dir.path().join("session"), kb, ServiceConfig::default()).unwrap();
    assert_eq!(svc.aggregate(), before);
    assert_eq!(svc.benchmark_manifest().unwrap().total, 9);
}

#[test]
fn replayed_submissions_have_no_further_effect() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 2, ServiceConfig::default());
    score_all(&svc, "p0", "a", 1, &[(Relation::XAttr, 0)]);
    let agg = svc.aggregate();
    let log = std::fs::read_to_string(svc.log_path()).unwrap();
    score_all(&svc, "p0", "a", 1, &[(Relation::XAttr, 0)]);
    assert_eq!(std::fs::read_to_string(svc.log_path()).unwrap(), log);
    assert_eq!(svc.aggregate(), agg);

    // The same events appended twice replay to the same state.
    let path = svc.log_path();
    drop(svc);
    std::fs::write(&path, format!("{log}{log}")).unwrap();
    let kb = Arc::new(miko_core::KnowledgeBase::open(dir.path().join("kb")).unwrap());
    let svc = AnnotationService::open(&dir.path().join("session"), kb, ServiceConfig::default()).unwrap();
    assert_eq!(svc.aggregate(), agg);
}

#[test]
fn allowlist_rejects_unknown_annotators() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        allowlist: Some(BTreeSet::from(["alice".to_string()])),
        ..Default::default()
    };
    let svc = service(dir.path(), 1, cfg);
    assert!(matches!(svc.next_task("mallory"), Err(AnnotationError::UnknownAnnotator(_))));
    assert!(matches!(
        svc.submit_score("p0", Relation::XWant, "mallory", 1),
        Err(AnnotationError::UnknownAnnotator(_))
    ));
    assert!(svc.next_task("alice").is_ok());
}

#[test]
fn typicality_exports() {
    let dir = tempfile::tempdir().unwrap();
    let svc = service(dir.path(), 2, ServiceConfig::default());
    score_all(&svc, "p0", "a", 1, &[(Relation::XWant, -1)]);
    let mut buf = Vec::new();
    assert_eq!(svc.write_typicality_csv(&mut buf).unwrap(), 10);
    let csv = String::from_utf8(buf).unwrap();
    assert!(csv.starts_with("post_id,relation,annotator_id,value\n"));
    assert!(csv.contains("p0,xWant,a,-1\n"));
    let dist = svc.typicality_distribution();
    assert_eq!(dist[&Relation::XWant][&-1], 1);
    assert_eq!(dist[&Relation::Open][&1], 1);
}

/// Eligibility by integer arithmetic: scale every per-relation mean by lcm(1..=4).
fn oracle_eligible(values: &[Vec<i64>]) -> bool {
    const L: i64 = 12;
    let scaled: i64 = values
        .iter()
        .filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<i64>() * (L / v.len() as i64))
        .sum();
    scaled > 5 * L
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eligibility_matches_strict_threshold(
        grid in proptest::collection::vec(proptest::collection::vec(proptest::option::of(-1i64..=1), 10), 1..=4)
    ) {
        let dir = tempfile::tempdir().unwrap();
        let svc = service(dir.path(), 1, ServiceConfig::default());
        let mut per_relation: Vec<Vec<i64>> = vec![Vec::new(); 10];
        for (a, row) in grid.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    svc.submit_score("p0", Relation::ALL[j], &format!("a{a}"), *v).unwrap();
                    per_relation[j].push(*v);
                }
            }
        }
        let expected = oracle_eligible(&per_relation);
        let eligible = svc.aggregate_post("p0").map(|a| a.eligible).unwrap_or(false);
        prop_assert_eq!(eligible, expected);
        let admitted = svc.review_decision("p0", Decision::Admit, "r", &[]);
        prop_assert_eq!(admitted.is_ok(), expected);
    }
}
