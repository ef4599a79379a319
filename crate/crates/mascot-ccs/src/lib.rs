//! Brute-force interleaving enumeration for small process terms.
//!
//! A [`Term`] is built from atomic tasks, prefix sequencing, parallel
//! composition, and guarded recursion. The enumerators produce the set of
//! admissible task orderings under three scheduling disciplines:
//!
//! - **free**: every linear extension of the per-component program order
//!   (independent threads),
//! - **event-loop**: a single FIFO queue where each task re-enqueues its
//!   successor on completion, one ordering per initial queue order,
//! - **executor(N)**: the same FIFO protocol consumed by up to N carriers.
//!
//! The sets nest: event-loop ⊆ executor(N) ⊆ free. Enumeration is exhaustive
//! and intended for desk-scale terms; it exists to serve as ground truth for
//! trace-level checks, so no effort is spent on pruning.

mod enumerate;
mod term;

pub use enumerate::{
    enumerate, enumerate_event_loop, enumerate_executor, enumerate_free, is_admissible,
    Discipline, InterleavingSet, QueueOrders,
};
pub use term::Term;

/// Errors from parsing or enumerating process terms.
#[derive(Debug, thiserror::Error)]
pub enum CcsError {
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("recursion `{0}` is unguarded (body must begin with an atom)")]
    UnguardedRecursion(String),
    #[error("term is recursive; an unrolling depth bound is required")]
    UnboundedTerm,
    #[error("term is not a parallel composition of sequential components")]
    NotSequentialComponents,
    #[error("executor carrier count must be >= 1")]
    InvalidCarrierCount,
    #[error("queue order {0:?} is not a permutation of the component indices")]
    InvalidQueueOrder(Vec<usize>),
    #[error("label `{0}` does not occur in the term")]
    UnknownLabel(String),
}
