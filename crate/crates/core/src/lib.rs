//! Test-time learning for extractive reading comprehension.
//!
//! For every test passage the engine synthesizes question/answer pairs with
//! rule-based generators ([`qgen`]), optionally widens the pool with
//! BM25-retrieved neighbor passages ([`retrieval`]), fits a small span
//! extraction model on them ([`spanmodel`]) and then answers the passage's
//! human-authored questions. [`ttl`] orchestrates the learning modes and
//! [`eval`] scores the predictions.

pub mod annotation;
pub mod bench;
pub mod eval;
pub mod qgen;
pub mod retrieval;
pub mod spanmodel;
pub mod ttl;

mod error;
mod util;

pub use error::{Error, Result};
