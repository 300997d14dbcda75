//! Grouped adverse drug event (ADE) summarization for patient forum posts.
//!
//! The pipeline runs in four stages: extract `(drug, ADE, severity)`
//! triplets from each post, group the mentions per drug and severity by
//! embedding clustering, write a severity-ordered summary per drug, and
//! build preference pairs for DPO alignment of the summarizer. The
//! [`metrics`] module scores every stage.

pub mod alignment;
pub mod corpus;
pub mod extraction;
pub mod fixtures;
pub mod grouping;
pub mod http;
pub mod metrics;
pub mod pipeline;
pub mod summarization;
pub mod text;
