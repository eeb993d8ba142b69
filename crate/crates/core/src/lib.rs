//! # clue-core
//!
//! Predicts how engaging a recorded lecture is by fusing four branch scores:
//!
//! - **X1** context-agnostic engagement from linguistic features ([`forest`]),
//! - **X2** variability of the transcript's emotion ([`emolex`]),
//! - **X3** positivity and variability of vocal emotion over time ([`speechnet`]),
//! - **X4** on-screen object activity ([`objcount`]).
//!
//! The fused score is a convex combination `y = a*X1 + b*X2 + c*X3 + d*X4`
//! whose coefficients are fitted to user ratings under a Huber loss
//! ([`fusion`]). [`explain`] turns a scored lecture into Shapley attributions
//! and threshold-based suggestions for the content creator.
//!
//! ```text
//! manifest -> corpus -> textfeat -> forest ----\
//!                    -> emolex ----------------+-> fusion -> explain
//!                    -> dsp -> speechnet ------+
//!                    -> objcount -------------/
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corpus;
pub mod dsp;
pub mod emolex;
pub mod emotion;
pub mod error;
pub mod explain;
pub mod forest;
pub mod fusion;
pub mod io;
pub mod objcount;
pub mod pipeline;
pub mod seed;
pub mod speechnet;
pub mod textfeat;

pub use config::PipelineConfig;
pub use corpus::{DetectionTimeline, FeatureTable, LectureBundle};
pub use dsp::{DspConfig, SpeechFeatureVector};
pub use emolex::TextEmotionModel;
pub use emotion::EmotionDistribution;
pub use error::{Error, ErrorKind, Result};
pub use explain::{FeedbackReport, ShapleyAttribution};
pub use forest::{ForestConfig, ForestModel};
pub use fusion::{BranchScores, FusionCoefficients};
pub use objcount::ObjectActivity;
pub use speechnet::{CnnModel, EmotionTimeline};
pub use textfeat::{LexiconSet, TextFeatureVector};
