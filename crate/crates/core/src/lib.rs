//! truledger-core: a deterministic traceability ledger engine.
//!
//! Traceable resource units (TRUs) and the primitive activities that consume,
//! use, and produce them are recorded through a guarded contract state
//! machine onto an append-only, hash-linked block log. The guards enforce
//! the traceability constraints as transaction validity: a TRU is produced
//! only once, and a consumed or used TRU is never accepted as an input
//! again. Provenance queries walk the recorded producer/consumer links
//! backward (origin) or forward (where-used), and a seeded simulator checks
//! that independently verifying replicas converge on identical state
//! digests.
//!
//! Module map:
//! - [`model`]    — TRUs, activities, activity states, quantity arithmetic.
//! - [`contract`] — the guarded state machine, events, rejections.
//! - [`ledger`]   — transactions, blocks, chains, replay, verification,
//!   and the canonical `.txlog` / `.chain` file formats.
//! - [`trace`]    — backward/forward provenance reports and rendering.
//! - [`sim`]      — proposer/replica replication simulation.
//! - [`canon`]    — the canonical encoding grammar and SHA-256 digests.

pub mod canon;
pub mod contract;
pub mod ledger;
pub mod model;
pub mod sim;
pub mod trace;

pub use canon::{sha256, Digest};
pub use contract::{ContractState, Event, EventKind, Guard, InputMode, Rejection, TxPayload};
pub use ledger::{
    parse_txlog, replay, state_digest, verify_chain_bytes, Accepted, Block, Chain, LedgerError,
    Transaction, VerifyOutcome,
};
pub use model::{
    ActivityId, ActivityState, PrimitiveActivity, Quantity, StateRole, Tru, TruId, UnknownTru,
};
pub use sim::{DeliveryReport, SimError, SimNetwork, SimNode};
pub use trace::{
    forward_trace, primitive_trace, render_trace, write_report_canon, TraceDirection, TraceNode,
    TraceNodeKind, TraceReport,
};
