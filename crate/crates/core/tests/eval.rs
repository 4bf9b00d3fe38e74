mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use miko_core::eval::{
    augment, bertscore, evaluate, export_instructions, greedy_match, instruction_pair, AugmentOptions,
    BenchmarkEntry, CandidateSet, EvalError, EvalOptions, MissingCandidates, MissingPolicy, Variant,
};
use miko_core::kb::KnowledgeBase;
use miko_core::records::Provenance;
use miko_core::{PromptKit, Relation};
use miko_gateway::{EmbedBackend, Gateway, HashEmbedder, TokenEmbeddings};
use proptest::prelude::*;

/// Straightforward O(n*m) reference: every cosine from scratch, no normalisation reuse.
fn oracle(c: &[Vec<f64>], r: &[Vec<f64>]) -> (f64, f64, f64) {
    fn cos(a: &[f64], b: &[f64]) -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for k in 0..a.len() {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na.sqrt() * nb.sqrt())
        }
    }
    let mut p = 0.0;
    for a in c {
        let mut best = f64::MIN;
        for b in r {
            best = best.max(cos(a, b));
        }
        p += best;
    }
    p /= c.len() as f64;
    let mut rec = 0.0;
    for b in r {
        let mut best = f64::MIN;
        for a in c {
            best = best.max(cos(a, b));
        }
        rec += best;
    }
    rec /= r.len() as f64;
    let (p, rec) = (p.clamp(0.0, 1.0), rec.clamp(0.0, 1.0));
    let f = if p + rec == 0.0 { 0.0 } else { 2.0 * p * rec / (p + rec) };
    (p, rec, f)
}

fn matrix(rows: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 16), rows)
}

proptest! {
    #[test]
    fn greedy_match_equals_brute_force(
        (c, r) in (1usize..=10, 1usize..=10).prop_flat_map(|(n, m)| (matrix(n), matrix(m)))
    ) {
        let got = greedy_match(&c, &r);
        let (p, rec, f) = oracle(&c, &r);
        prop_assert!((got.precision - p).abs() < 1e-9);
        prop_assert!((got.recall - rec).abs() < 1e-9);
        prop_assert!((got.f1 - f).abs() < 1e-9);
    }

    #[test]
    fn self_similarity_is_one(a in matrix(5)) {
        prop_assume!(a.iter().all(|v| v.iter().any(|x| *x != 0.0)));
        prop_assert!((greedy_match(&a, &a).f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn precision_and_recall_swap(a in matrix(4), b in matrix(6)) {
        let ab = greedy_match(&a, &b);
        let ba = greedy_match(&b, &a);
        prop_assert!((ab.precision - ba.recall).abs() < 1e-12);
        prop_assert!((ab.recall - ba.precision).abs() < 1e-12);
    }
}

fn hash_gateway() -> Gateway {
    Gateway::builder().embed(Arc::new(HashEmbedder::new(3))).build().unwrap()
}

#[test]
fn bertscore_of_text_with_itself_is_one() {
    let gw = hash_gateway();
    let s = bertscore("inform followers about the fire", "inform followers about the fire", &gw).unwrap();
    assert!((s.f1 - 1.0).abs() < 1e-12);
    assert!(matches!(bertscore(" ", "x", &gw), Err(EvalError::EmptyText)));
}

/// Fixed vectors per whitespace token.
struct TableEmbedder(BTreeMap<&'static str, Vec<f64>>);

impl EmbedBackend for TableEmbedder {
    fn model_id(&self) -> &str {
        "table"
    }

    fn embed(&self, text: &str) -> miko_gateway::Result<TokenEmbeddings> {
        let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        let vectors = tokens.iter().map(|t| self.0[t.as_str()].clone()).collect();
        Ok(TokenEmbeddings { tokens, vectors, dim: 4 })
    }
}

fn table_gateway() -> Gateway {
    let table = BTreeMap::from([
        ("buy", vec![1.0, 0.0, 0.0, 0.0]),
        ("phone", vec![0.0, 1.0, 0.0, 0.0]),
        ("iphone", vec![0.0, 1.0, 1.0, 0.0]),
        ("travel", vec![0.0, 0.0, 0.0, 1.0]),
        ("relax", vec![0.0, 0.0, 1.0, 1.0]),
        ("sleep", vec![0.0, 0.0, 1.0, 0.0]),
    ]);
    Gateway::builder().embed(Arc::new(TableEmbedder(table))).build().unwrap()
}

fn entry(post: &str, relation: Relation, gold: &str) -> BenchmarkEntry {
    BenchmarkEntry {
        post_id: post.into(),
        relation,
        gold_text: gold.into(),
        source_provenance: Provenance {
            caption_used: false,
            keyinfo_digest: "d".into(),
            template_versions: BTreeMap::new(),
            model_id: "m".into(),
            temperature: 0.7,
        },
    }
}

fn two_pair_fixture() -> (CandidateSet, Vec<BenchmarkEntry>) {
    let mut c = CandidateSet::new("toy");
    c.insert("p1", Relation::XWant, "After posting this Tweet, the user wants to buy phone");
    c.insert("p1", Relation::Open, "travel");
    let gold = vec![
        entry("p1", Relation::XWant, "After posting this Tweet, the user wants to buy iphone"),
        entry("p1", Relation::Open, "relax"),
        entry("p1", Relation::XNeed, "sleep"),
    ];
    (c, gold)
}

#[test]
fn two_pair_fixture_matches_hand_computation() {
    // xWant: P = R = (1 + 1/sqrt2) / 2 -> 85.36; Open: P = R = 1/sqrt2 -> 70.71.
    let (c, gold) = two_pair_fixture();
    let gw = table_gateway();
    let report = evaluate(&c, &gold, &gw, &EvalOptions::default()).unwrap();
    assert_eq!(report.per_relation_f1[&Relation::XWant], 85.36);
    assert_eq!(report.per_relation_f1[&Relation::Open], 70.71);
    assert_eq!(report.average, 78.03);
    assert_eq!(report.n_scored, 2);
    assert_eq!(report.n_missing, 1);
    assert!(!report.per_relation_f1.contains_key(&Relation::XNeed));

    let zero = EvalOptions {
        missing: MissingCandidates::Zero,
        ..Default::default()
    };
    let report = evaluate(&c, &gold, &gw, &zero).unwrap();
    assert_eq!(report.per_relation_f1[&Relation::XNeed], 0.0);
    assert_eq!(report.average, 52.02);

    let micro = EvalOptions {
        micro: true,
        ..Default::default()
    };
    assert_eq!(evaluate(&c, &gold, &gw, &micro).unwrap().average, 78.03);
}

#[test]
fn identical_candidates_score_one_hundred_everywhere() {
    let gw = hash_gateway();
    let gold: Vec<BenchmarkEntry> = Relation::ALL
        .iter()
        .map(|r| entry("p", *r, &format!("some intention text for {r}")))
        .collect();
    let mut c = CandidateSet::new("copy");
    for e in &gold {
        c.insert(&e.post_id, e.relation, &e.gold_text);
    }
    let report = evaluate(&c, &gold, &gw, &EvalOptions::default()).unwrap();
    assert!(report.per_relation_f1.values().all(|v| *v == 100.0));
    assert_eq!(report.average, 100.0);
}

#[test]
fn evaluation_ignores_candidate_order() {
    let gw = hash_gateway();
    let gold: Vec<BenchmarkEntry> = (0..6)
        .map(|i| entry(&format!("p{i}"), Relation::XReact, &format!("feel proud of item {i}")))
        .collect();
    let texts: Vec<(String, String)> = (0..6).map(|i| (format!("p{i}"), format!("be happy about {i}"))).collect();
    let mut a = CandidateSet::new("m");
    let mut b = CandidateSet::new("m");
    for (p, t) in &texts {
        a.insert(p, Relation::XReact, t);
    }
    for (p, t) in texts.iter().rev() {
        b.insert(p, Relation::XReact, t);
    }
    let ra = evaluate(&a, &gold, &gw, &EvalOptions::default()).unwrap();
    let rb = evaluate(&b, &gold, &gw, &EvalOptions::default()).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn disjoint_candidates_are_no_overlap() {
    let gw = hash_gateway();
    let mut c = CandidateSet::new("m");
    c.insert("other", Relation::XWant, "x");
    let gold = vec![entry("p", Relation::XWant, "y")];
    assert!(matches!(evaluate(&c, &gold, &gw, &EvalOptions::default()), Err(EvalError::NoOverlap)));
}

#[test]
fn report_csv_follows_column_order() {
    let (c, gold) = two_pair_fixture();
    let report = evaluate(&c, &gold, &table_gateway(), &EvalOptions::default()).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    let csv = String::from_utf8(buf).unwrap();
    assert_eq!(
        csv,
        "model,xWant,oEffect,xAttr,xIntent,xReact,oReact,oWant,xEffect,xNeed,Open,Average\n\
         toy,85.36,,,,,,,,,70.71,78.03\n"
    );
}

#[test]
fn export_gives_seven_ten_turn_conversations() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::mock_kb(dir.path());
    let kit = PromptKit::bundled();
    let mut buf = Vec::new();
    let n = export_instructions(&kb, &kit, &kb.post_ids(), &mut buf).unwrap();
    assert_eq!(n, 7);
    let lines: Vec<serde_json::Value> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 7);
    for conv in &lines {
        let turns = conv["turns"].as_array().unwrap();
        assert_eq!(turns.len(), 20);
        for (i, t) in turns.iter().enumerate() {
            assert_eq!(t["role"], if i % 2 == 0 { "user" } else { "assistant" });
        }
    }
}

#[test]
fn fixture_conversation_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::mock_kb(dir.path());
    let pair = instruction_pair(&kb, &PromptKit::bundled(), "dubai").unwrap();
    let line = serde_json::to_string(&pair).unwrap() + "\n";
    let path = common::fixtures().join("golden/dubai_conversation.jsonl");
    if std::env::var_os("MIKO_BLESS").is_some() {
        std::fs::write(&path, &line).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(line, golden);
}

#[test]
fn missing_relation_is_incomplete_post() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::mock_kb(dir.path());
    let seg = dir.path().join("intentions.jsonl");
    let kept: String = std::fs::read_to_string(&seg)
        .unwrap()
        .lines()
        .filter(|l| !(l.contains("\"post_id\":\"p3\"") && l.contains("\"relation\":\"xReact\"")))
        .map(|l| format!("{l}\n"))
        .collect();
    drop(kb);
    std::fs::write(&seg, kept).unwrap();
    let kb = KnowledgeBase::open(dir.path()).unwrap();
    let mut buf = Vec::new();
    match export_instructions(&kb, &PromptKit::bundled(), &kb.post_ids(), &mut buf) {
        Err(EvalError::IncompletePost { post_id, missing }) => {
            assert_eq!(post_id, "p3");
            assert_eq!(missing, vec!["xReact"]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(buf.is_empty());
}

#[test]
fn augment_variants() {
    let dir = tempfile::tempdir().unwrap();
    let kb = common::mock_kb(dir.path());
    let posts = common::corpus();
    let opts = AugmentOptions::default();

    let (text, m) = augment(&posts, &kb, Variant::Text, &opts).unwrap();
    assert_eq!(text.len(), posts.len());
    assert!(text.iter().zip(&posts).all(|(a, p)| a.text == p.text && a.label == p.label));
    assert_eq!(m.count, 7);

    let (full, m) = augment(&posts, &kb, Variant::TextImgdesInte, &opts).unwrap();
    assert_eq!(full.len(), 4);
    assert_eq!(m.skipped, vec!["p5", "p6", "p7"]);
    let dubai = full.iter().find(|a| a.post_id == "dubai").unwrap();
    let desc = kb.description("dubai").unwrap().unwrap().text;
    let sections: Vec<&str> = dubai.text.split(" [SEP] ").collect();
    assert_eq!(sections.len(), 3);
    assert_eq!(sections[0], posts[0].text);
    assert_eq!(sections[1], desc);
    assert!(sections[2].contains("inform their followers about the tragic incident at Dubai airport."));
    let recs = kb.intentions_for("dubai").unwrap();
    let mut at = 0;
    for r in &recs {
        let pos = sections[2][at..].find(r.stripped_text.trim_end_matches('.')).unwrap();
        at += pos;
    }

    let (inte, _) = augment(&posts, &kb, Variant::TextInte, &opts).unwrap();
    assert_eq!(inte.len(), 7);

    let strict = AugmentOptions {
        on_missing: MissingPolicy::Error,
        ..Default::default()
    };
    assert!(matches!(
        augment(&posts, &kb, Variant::TextImgdes, &strict),
        Err(EvalError::MissingArtifact { .. })
    ));
}
