//! Core of the synthetic instruction-data pipeline: corpora and label
//! catalogs, feature extraction, clustering and cluster metrics, landmark
//! selection, augmentation, diagnostics, dataset emission and evaluation.
//!
//! The crate is `no_std` with `alloc`. Model access goes through the
//! [`llm::ChatModel`] and [`llm::Embedder`] traits; the companion crate
//! supplies HTTP-backed implementations and all file IO.

#![cfg_attr(not(test), no_std)]
extern crate alloc;

pub mod augment;
pub mod catalog;
pub mod cluster;
pub mod corpus;
pub mod diagnostics;
pub mod emit;
pub mod evaluate;
pub mod landmark;
pub mod llm;
pub mod matrix;
pub mod metrics;
pub mod prompts;
pub mod rng;
pub mod text;
pub mod vectorize;
