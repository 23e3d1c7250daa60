//! Benchmark scoring: lexical metrics, closed-ended accuracy and stratified reports.

pub mod choice;
pub mod metrics;
pub mod report;

pub use choice::{choice_accuracy, judgment_accuracy, parse_choice, ChoiceOutcome};
pub use metrics::{bleu, composite_open, rouge_l, token_f1, tokenize, CompositeWeights};
pub use report::{
    read_samples, render_table, score_all, score_sample, stratified_report, Category, Cell,
    EvalSample, Organ, SampleId, Scored, StratifiedReport, TaskType,
};
