//! Downsampled blockchain nodes.
//!
//! A downsampled node keeps every block header but only some block bodies.
//! This crate provides
//!
//! * [`chain`]: a deterministic UTXO state machine with Merkle-committed blocks,
//! * [`entropy`]: the output-lifetime model, UTXO depth density and block entropy,
//! * [`downsample`]: uniform and entropy-guided body selection, partial-pool
//!   verification and broadcast-accuracy measurement,
//! * [`coding`]: soliton degree distributions, XOR codewords built from
//!   uncoded storage, a peeling decoder and a GF(2) elimination oracle,
//! * [`sim`]: a message-counting network simulator for block, transaction
//!   and coded segment recovery,
//! * [`synth`] and [`experiment`]: synthetic chains and the CLI experiments.

// NaN must fail these range checks
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod coding;
pub mod downsample;
pub mod entropy;
pub mod exec;
mod kv;
pub mod experiment;
pub mod sim;
pub mod synth;

pub use exec::Execution;
