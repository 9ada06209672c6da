//! Interactive re-ranking for text-to-image person re-identification.
//!
//! A baseline cross-modal model's embeddings are ranked exactly, then a
//! multimodal LLM oracle is consulted over a few rounds to locate an anchor
//! image for each query, refine the query from attribute questions about that
//! anchor, and fuse the refined similarities back into the ranking. The same
//! oracle drives a text augmentation pipeline and hard-negative SFT export.

pub mod corpus;
pub mod metrics;
pub mod oracle;
pub mod rda;
pub mod retrieval;
pub mod seeding;
pub mod thi;
