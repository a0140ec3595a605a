//! Ingest the fixture corpus and answer the fixture dataset with the lookup
//! mock.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use docrag_core::cost::PricingConfig;
use docrag_core::eval::{load_dataset, run_eval, EvalError, EvalOptions, EvalReport};
use docrag_core::generation::{answer_question, LookupMockLlm};
use docrag_core::index::{MetadataFilter, RetrievalConfig, VectorIndex};
use docrag_core::pipeline::{ingest_dir, IngestOptions};
use docrag_core::preprocess::FixtureChartProvider;
use docrag_core::{DefaultTokenizer, LocalHashEmbedder, TableFormat};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus")
}

fn ingest(format: TableFormat) -> VectorIndex {
    let charts = FixtureChartProvider::new(corpus().join("charts"));
    let options = IngestOptions {
        table_format: format,
        ..IngestOptions::default()
    };
    let (index, report) = ingest_dir(
        &corpus().join("layouts"),
        Some(&charts),
        &LocalHashEmbedder::default(),
        &DefaultTokenizer,
        options,
    )
    .unwrap();
    assert_eq!(report.documents.len(), 3);
    assert_eq!(report.zero_vectors, 0);
    index
}

fn eval(index: &VectorIndex) -> EvalReport {
    let dataset = load_dataset(&corpus().join("dataset.jsonl")).unwrap();
    let options = EvalOptions {
        cost_model: Some("gpt-4o".into()),
        ..EvalOptions::default()
    };
    run_eval(
        &dataset,
        index,
        &LocalHashEmbedder::default(),
        &LookupMockLlm::default(),
        &PricingConfig::default(),
        &options,
    )
    .unwrap()
}

#[test]
fn lookup_mock_answers_every_question() {
    let report = eval(&ingest(TableFormat::Json));
    for r in &report.results {
        assert!(r.correct, "{:?}: predicted {:?}, gold {:?}", r.question, r.predicted, r.gold_answer);
    }
    assert_eq!(report.total, 10);
    assert_eq!(report.accuracy, 1.0);
    assert_eq!(report.by_target["table"].total, 4);
    assert_eq!(report.by_target["chart"].total, 3);
    assert_eq!(report.by_target["text"].total, 3);
    let by_difficulty: usize = report.by_difficulty.values().map(|b| b.total).sum();
    assert_eq!(by_difficulty, report.total);
}

#[test]
fn eval_cost_is_sum_of_per_call_costs() {
    let report = eval(&ingest(TableFormat::Json));
    let pricing = PricingConfig::default();
    let expected: f64 = report
        .results
        .iter()
        .map(|r| docrag_core::cost::cost_per_call("gpt-4o", r.prompt_token_count, &pricing).unwrap())
        .sum();
    assert_eq!(report.total_cost_usd, expected);
    assert!(report.total_cost_usd > 0.0);
}

#[test]
fn two_runs_are_identical() {
    let first = eval(&ingest(TableFormat::Json));
    let second = eval(&ingest(TableFormat::Json));
    assert_eq!(
        serde_json::to_string(&first).unwrap(),
        serde_json::to_string(&second).unwrap()
    );
}

#[test]
fn retrieval_is_scoped_to_the_example_document() {
    let report = eval(&ingest(TableFormat::Json));
    let dataset = load_dataset(&corpus().join("dataset.jsonl")).unwrap();
    for (example, result) in dataset.iter().zip(&report.results) {
        assert!(!result.retrieved.is_empty());
        for id in &result.retrieved {
            assert!(id.starts_with(&format!("{}:", example.document_id)), "{id}");
        }
    }
}

#[test]
fn both_table_formats_retrieve_the_same_chunks() {
    let json = ingest(TableFormat::Json);
    let dataframe = ingest(TableFormat::Dataframe);
    let ids = |index: &VectorIndex| index.entries().into_iter().map(|e| e.chunk.chunk_id).collect::<Vec<_>>();
    assert_eq!(ids(&json), ids(&dataframe));

    let dataset = load_dataset(&corpus().join("dataset.jsonl")).unwrap();
    let embedder = LocalHashEmbedder::default();
    for example in &dataset {
        let config = RetrievalConfig::new(3, example.retrieval_filters().unwrap()).unwrap();
        let retrieved = |index: &VectorIndex| {
            answer_question(&example.question, index, &embedder, &config, &LookupMockLlm::default())
                .unwrap()
                .retrieved
                .into_iter()
                .map(|r| r.chunk_id)
                .collect::<BTreeSet<_>>()
        };
        assert_eq!(retrieved(&json), retrieved(&dataframe), "{}", example.question);
    }
}

#[test]
fn chart_and_table_text_reach_the_index() {
    let index = ingest(TableFormat::Json);
    let texts: Vec<String> = index.entries().into_iter().map(|e| e.chunk.text).collect();
    assert!(texts.iter().any(|t| t.contains("\"Orders: Americas\": \"478\"")));
    assert!(texts.iter().any(|t| t.contains("\"Three months ended;June 30, 2023;\": \"$ 1,204\"")));
    assert!(!texts.iter().any(|t| t.contains("Page 1")), "footers are dropped");
}

#[test]
fn filters_narrow_results() {
    let index = ingest(TableFormat::Json);
    let embedder = LocalHashEmbedder::default();
    let config = RetrievalConfig::new(10, vec!["company=GLOBEX".parse::<MetadataFilter>().unwrap()]).unwrap();
    let answer = answer_question("store count", &index, &embedder, &config, &LookupMockLlm::default()).unwrap();
    assert!(!answer.retrieved.is_empty());
    assert!(answer.retrieved.iter().all(|r| r.chunk_id.starts_with("globex-2022-q4:")));

    let nothing = RetrievalConfig::new(3, vec!["company=UMBRELLA".parse().unwrap()]).unwrap();
    let answer = answer_question("store count", &index, &embedder, &nothing, &LookupMockLlm::default()).unwrap();
    assert!(answer.retrieved.is_empty());
    assert_eq!(answer.warnings.len(), 1);
}

#[test]
fn missing_documents_fail_before_any_call() {
    let index = ingest(TableFormat::Json);
    let mut dataset = load_dataset(&corpus().join("dataset.jsonl")).unwrap();
    dataset[0].document_id = "unknown-doc".into();
    let llm = docrag_core::generation::MeteredLlm::new(LookupMockLlm::default());
    let err = run_eval(
        &dataset,
        &index,
        &LocalHashEmbedder::default(),
        &llm,
        &PricingConfig::default(),
        &EvalOptions {
            cost_model: Some("gpt-4o".into()),
            ..EvalOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, EvalError::MissingDocuments(ref d) if d == &vec!["unknown-doc".to_string()]));
    assert_eq!(llm.reading().calls, 0);
}
