//! Explanations for a scored lecture: Shapley attributions of the text
//! forest and a rule-based feedback report.

mod report;
mod shapley;

pub use report::{
    feedback_report, rule_ids, FeedbackReport, Finding, ReportThresholds, ShapleyEntry,
    REPORT_FORMAT_VERSION,
};
pub use shapley::{
    background_rows, shap_summary, shapley_exact, shapley_sampled, write_shap_summary,
    ShapleyAttribution, MAX_EXACT_FEATURES,
};
