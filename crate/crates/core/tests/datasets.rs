mod common;

use std::collections::BTreeMap;

use serde::Deserialize;
use verichain::datasets::{export_jsonl, grade, load_dataset, parse_answer, subsample, DatasetKind, QARecord};
use verichain::Error;

use common::fixture;

#[test]
fn pubmedqa_records_keep_context_and_lowercase_gold() {
    let records = load_dataset(DatasetKind::Pubmedqa, &fixture("pubmedqa_small.json")).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        assert!(r.context.as_deref().is_some_and(|c| !c.is_empty()), "{}", r.id);
        assert!(r.options.is_none());
        assert!(["yes", "no", "maybe"].contains(&r.gold.as_str()), "{}", r.gold);
    }
    assert!(records.iter().any(|r| r.gold == "maybe"));
}

#[test]
fn medqa_ids_default_to_line_numbers() {
    let records = load_dataset(DatasetKind::Medqa, &fixture("medqa_small.jsonl")).unwrap();
    assert_eq!(records.len(), 3);
    assert_eq!(records[0].gold, "B");
    assert_eq!(records[0].gold_text(), "B. Myoglobin");
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    assert!(ids.contains(&"medqa-1"), "{ids:?}");
    assert!(ids.contains(&"medqa-custom-id"), "custom id lost: {ids:?}");
}

#[test]
fn medmcqa_maps_cop_to_letters() {
    let records = load_dataset(DatasetKind::Medmcqa, &fixture("medmcqa_small.jsonl")).unwrap();
    let golds: Vec<&str> = records.iter().map(|r| r.gold.as_str()).collect();
    assert_eq!(golds, ["C", "A", "D"]);
    for r in &records {
        assert_eq!(r.options.as_ref().unwrap().len(), 4);
    }
}

#[test]
fn malformed_file_reports_every_bad_record() {
    let err = load_dataset(DatasetKind::Medmcqa, &fixture("medmcqa_malformed.jsonl")).unwrap_err();
    let Error::DatasetParse { failures, .. } = err else {
        panic!("expected a parse error, got {err}");
    };
    assert_eq!(failures.len(), 3, "{failures:#?}");
    assert!(failures.iter().any(|f| f.contains("bad-cop")), "{failures:#?}");
    assert!(failures.iter().any(|f| f.contains("line 3")), "{failures:#?}");
    assert!(failures.iter().any(|f| f.contains("difficulty")), "{failures:#?}");
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_dataset(DatasetKind::Medqa, &fixture("no_such_file.jsonl")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
}

#[derive(Deserialize)]
struct ParseTable {
    options: BTreeMap<String, String>,
    cases: Vec<ParseCase>,
}

#[derive(Deserialize)]
struct ParseCase {
    kind: String,
    reply: String,
    expected: Option<String>,
}

#[test]
fn answer_parsing_table() {
    let table: ParseTable = serde_json::from_str(&common::read(&fixture("answer_parse_table.json"))).unwrap();
    let ternary = QARecord {
        id: "t".into(),
        dataset: DatasetKind::Pubmedqa,
        question: "Does it work?".into(),
        context: Some("Context.".into()),
        options: None,
        gold: "yes".into(),
    };
    let mcq = QARecord {
        id: "m".into(),
        dataset: DatasetKind::Medqa,
        question: "Which drug?".into(),
        context: None,
        options: Some(table.options.clone()),
        gold: "C".into(),
    };
    let mut wrong = Vec::new();
    for case in &table.cases {
        let record = if case.kind == "ternary" { &ternary } else { &mcq };
        let got = parse_answer(&case.reply, record);
        if got != case.expected {
            wrong.push(format!("{:?}: got {got:?}, want {:?}", case.reply, case.expected));
        }
    }
    assert!(wrong.is_empty(), "{}", wrong.join("\n"));
}

#[test]
fn grading_normalizes_case_and_rejects_unparsed() {
    let records = load_dataset(DatasetKind::Medmcqa, &fixture("medmcqa_small.jsonl")).unwrap();
    assert!(grade(Some(" c "), &records[0]));
    assert!(!grade(Some("A"), &records[0]));
    assert!(!grade(None, &records[0]));
}

#[test]
fn subsample_is_seeded_and_bounded() {
    let all = load_dataset(DatasetKind::Pubmedqa, &fixture("pubmedqa_eight.json")).unwrap();
    let a = subsample(all.clone(), Some(5), 7);
    let b = subsample(all.clone(), Some(5), 7);
    assert_eq!(a, b);
    assert_eq!(a.len(), 5);
    assert_eq!(subsample(all.clone(), Some(50), 7).len(), 8);
    assert_eq!(subsample(all.clone(), None, 7), all);
}

#[test]
fn export_round_trips_through_serde() {
    let records = load_dataset(DatasetKind::Medqa, &fixture("medqa_small.jsonl")).unwrap();
    let mut buf = Vec::new();
    export_jsonl(&records, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let back: Vec<QARecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, records);
}
