//! Append-only hash-linked block log over contract transactions.
//!
//! A [`Chain`] accepts transactions one at a time (validating each against
//! the contract guards), batches accepted transactions into blocks on demand,
//! and links each block to its predecessor by SHA-256 digest. Every block
//! also carries the digest of the contract state it produced, so the whole
//! history can be replayed and checked for consistency, and any single-byte
//! tampering of a persisted chain file is detectable with the height where
//! the inconsistency starts.
//!
//! File formats (both line-delimited, one canonical record per line):
//! - `.txlog`  — accepted transactions in seq order: `tx(...)`.
//! - `.chain`  — sealed blocks in height order: `block(...)`.

use std::fmt;

use thiserror::Error;

use crate::canon::{
    sha256, write_string, write_uint, write_uint_list, Cursor, Digest, ParseError,
};
use crate::contract::{ContractState, Event, InputMode, Rejection, TxPayload};
use crate::model::{ActivityId, ActivityState, StateRole, TruId};

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

/// A validated state-transition request. `seq` is assigned at acceptance and
/// is dense from 0 across the accepted log; timestamps are caller-supplied
/// and non-decreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub seq: u64,
    pub timestamp: u64,
    pub payload: TxPayload,
}

impl Transaction {
    pub fn write_canon(&self, out: &mut String) {
        out.push_str("tx(");
        write_uint(out, self.seq);
        out.push(',');
        write_uint(out, self.timestamp);
        out.push(',');
        match &self.payload {
            TxPayload::Genesis { id } => {
                out.push_str("genesis,");
                write_uint(out, id.get());
            }
            TxPayload::Activity { id, name, inputs, outputs, mode } => {
                out.push_str("activity,");
                write_uint(out, id.get());
                out.push(',');
                write_string(out, name);
                out.push(',');
                write_uint_list(out, inputs.iter().map(|t| t.get()));
                out.push(',');
                write_uint_list(out, outputs.iter().map(|t| t.get()));
                out.push(',');
                out.push_str(mode.word());
            }
            TxPayload::Unknown { op, raw } => {
                out.push_str(op);
                out.push_str(raw);
            }
        }
        out.push(')');
    }

    pub fn canon_string(&self) -> String {
        let mut out = String::new();
        self.write_canon(&mut out);
        out
    }

    /// Strict parse of one `tx(...)` record. An op word other than
    /// `genesis`/`activity`, or a recognized op with the wrong parameter
    /// shape, parses into [`TxPayload::Unknown`] with the raw parameter bytes
    /// preserved, so that applying it reports a malformed rejection rather
    /// than failing at the wire layer.
    pub fn parse(cur: &mut Cursor<'_>) -> Result<Transaction, ParseError> {
        let err = |cur: &Cursor<'_>, msg: &str| ParseError { pos: cur.pos(), msg: msg.into() };
        let word = cur.expect_word()?;
        if word != "tx" {
            return Err(err(cur, "expected transaction record"));
        }
        cur.expect_byte(b'(')?;
        let seq = cur.expect_uint()?;
        cur.expect_byte(b',')?;
        let timestamp = cur.expect_uint()?;
        cur.expect_byte(b',')?;
        let op = cur.expect_word()?.to_string();
        let params_start = cur.pos();

        let strict = match op.as_str() {
            "genesis" => Self::parse_genesis_params(cur),
            "activity" => Self::parse_activity_params(cur),
            _ => None,
        };
        let payload = match strict {
            Some(payload) => payload,
            None => {
                // Rewind and swallow the parameters generically.
                cur.set_pos(params_start);
                while cur.peek_byte() == Some(b',') {
                    cur.set_pos(cur.pos() + 1);
                    cur.skip_generic_field()?;
                }
                let raw = std::str::from_utf8(cur.slice_from(params_start))
                    .map_err(|_| err(cur, "op parameters are not valid UTF-8"))?
                    .to_string();
                cur.expect_byte(b')')?;
                return Ok(Transaction { seq, timestamp, payload: TxPayload::Unknown { op, raw } });
            }
        };
        cur.expect_byte(b')')?;
        Ok(Transaction { seq, timestamp, payload })
    }

    fn parse_genesis_params(cur: &mut Cursor<'_>) -> Option<TxPayload> {
        let start = cur.pos();
        let attempt = (|| {
            cur.expect_byte(b',').ok()?;
            let id = cur.expect_uint().ok()?;
            if cur.peek_byte() != Some(b')') {
                return None;
            }
            Some(TxPayload::Genesis { id: TruId(id) })
        })();
        if attempt.is_none() {
            cur.set_pos(start);
        }
        attempt
    }

    fn parse_activity_params(cur: &mut Cursor<'_>) -> Option<TxPayload> {
        let start = cur.pos();
        let attempt = (|| {
            cur.expect_byte(b',').ok()?;
            let id = cur.expect_uint().ok()?;
            cur.expect_byte(b',').ok()?;
            let name = cur.expect_string().ok()?;
            cur.expect_byte(b',').ok()?;
            let inputs = cur.expect_uint_list().ok()?;
            cur.expect_byte(b',').ok()?;
            let outputs = cur.expect_uint_list().ok()?;
            cur.expect_byte(b',').ok()?;
            let mode = InputMode::from_word(cur.expect_word().ok()?)?;
            if cur.peek_byte() != Some(b')') {
                return None;
            }
            Some(TxPayload::Activity {
                id: ActivityId(id),
                name,
                inputs: inputs.into_iter().map(TruId).collect(),
                outputs: outputs.into_iter().map(TruId).collect(),
                mode,
            })
        })();
        if attempt.is_none() {
            cur.set_pos(start);
        }
        attempt
    }
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

/// A timestamped, hash-linked batch of accepted transactions together with
/// the events they emitted and the digest of the post-state.
///
/// `digest` is SHA-256 over the canonical encoding of
/// `(height, timestamp, prev_digest, txs, events, state_digest)`;
/// `prev_digest` of block h equals `digest` of block h-1, all-zero at h = 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub timestamp: u64,
    pub prev_digest: Digest,
    pub txs: Vec<Transaction>,
    pub events: Vec<Event>,
    pub state_digest: Digest,
    pub digest: Digest,
}

impl Block {
    fn write_body(&self, out: &mut String) {
        out.push_str("block(");
        write_uint(out, self.height);
        out.push(',');
        write_uint(out, self.timestamp);
        out.push(',');
        out.push_str(&self.prev_digest.to_hex());
        out.push(',');
        out.push('[');
        for (i, tx) in self.txs.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            tx.write_canon(out);
        }
        out.push_str("],[");
        for (i, ev) in self.events.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            ev.write_canon(out);
        }
        out.push_str("],");
        out.push_str(&self.state_digest.to_hex());
    }

    /// The digest preimage: every field except the digest itself.
    pub fn preimage(&self) -> String {
        let mut out = String::new();
        self.write_body(&mut out);
        out.push(')');
        out
    }

    pub fn compute_digest(&self) -> Digest {
        sha256(self.preimage().as_bytes())
    }

    /// One `.chain` line: the preimage fields plus the stored digest.
    pub fn canon_line(&self) -> String {
        let mut out = String::new();
        self.write_body(&mut out);
        out.push(',');
        out.push_str(&self.digest.to_hex());
        out.push(')');
        out
    }

    pub fn parse(cur: &mut Cursor<'_>) -> Result<Block, ParseError> {
        let err = |cur: &Cursor<'_>, msg: &str| ParseError { pos: cur.pos(), msg: msg.into() };
        let word = cur.expect_word()?;
        if word != "block" {
            return Err(err(cur, "expected block record"));
        }
        cur.expect_byte(b'(')?;
        let height = cur.expect_uint()?;
        cur.expect_byte(b',')?;
        let timestamp = cur.expect_uint()?;
        cur.expect_byte(b',')?;
        let prev_digest = cur.expect_digest()?;
        cur.expect_byte(b',')?;

        cur.expect_byte(b'[')?;
        let mut txs = Vec::new();
        if cur.peek_byte() == Some(b']') {
            cur.set_pos(cur.pos() + 1);
        } else {
            loop {
                txs.push(Transaction::parse(cur)?);
                match cur.peek_byte() {
                    Some(b',') => cur.set_pos(cur.pos() + 1),
                    Some(b']') => {
                        cur.set_pos(cur.pos() + 1);
                        break;
                    }
                    _ => return Err(err(cur, "expected ',' or ']' in transaction list")),
                }
            }
        }
        cur.expect_byte(b',')?;

        cur.expect_byte(b'[')?;
        let mut events = Vec::new();
        if cur.peek_byte() == Some(b']') {
            cur.set_pos(cur.pos() + 1);
        } else {
            loop {
                events.push(Event::parse(cur)?);
                match cur.peek_byte() {
                    Some(b',') => cur.set_pos(cur.pos() + 1),
                    Some(b']') => {
                        cur.set_pos(cur.pos() + 1);
                        break;
                    }
                    _ => return Err(err(cur, "expected ',' or ']' in event list")),
                }
            }
        }
        cur.expect_byte(b',')?;
        let state_digest = cur.expect_digest()?;
        cur.expect_byte(b',')?;
        let digest = cur.expect_digest()?;
        cur.expect_byte(b')')?;
        Ok(Block { height, timestamp, prev_digest, txs, events, state_digest, digest })
    }
}

// ---------------------------------------------------------------------------
// Errors and outcomes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("nothing to seal: no pending transactions")]
    EmptyPending,
    #[error("line {line}: {source}")]
    Parse { line: u64, source: ParseError },
    #[error("corrupt transaction log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("invalid block at height {height}: {reason}")]
    InvalidBlock { height: u64, reason: String },
}

/// Result of chain verification: consistent, or the lowest bad height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyOutcome {
    Ok,
    BadHeight(u64),
}

impl VerifyOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self, VerifyOutcome::Ok)
    }
}

impl fmt::Display for VerifyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyOutcome::Ok => f.write_str("ok"),
            VerifyOutcome::BadHeight(h) => write!(f, "bad height {h}"),
        }
    }
}

/// Acceptance receipt from [`Chain::submit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accepted {
    pub seq: u64,
    pub events: Vec<Event>,
}

// ---------------------------------------------------------------------------
// Digests
// ---------------------------------------------------------------------------

/// SHA-256 over the canonical state encoding (lookups in ascending key
/// order). Equal states yield equal digests on every platform and run.
pub fn state_digest(state: &ContractState) -> Digest {
    sha256(state.canon_string().as_bytes())
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

/// Fold a transaction log from the empty contract. Persisted logs contain
/// only accepted transactions, so a rejection (or a seq/timestamp
/// inconsistency) is a corrupt-log error naming the offending seq.
pub fn replay(txs: &[Transaction]) -> Result<(ContractState, Vec<Event>), LedgerError> {
    let mut state = ContractState::new();
    let mut events = Vec::new();
    let mut last_ts: Option<u64> = None;
    for (i, tx) in txs.iter().enumerate() {
        let seq = i as u64;
        if tx.seq != seq {
            return Err(LedgerError::CorruptLog {
                seq,
                reason: format!("expected seq {seq}, found {}", tx.seq),
            });
        }
        if last_ts.is_some_and(|last| tx.timestamp < last) {
            return Err(LedgerError::CorruptLog {
                seq,
                reason: "timestamp decreases".to_string(),
            });
        }
        match state.apply_transaction(&tx.payload) {
            Ok((next, emitted)) => {
                state = next;
                events.extend(emitted);
            }
            Err(rejection) => {
                return Err(LedgerError::CorruptLog { seq, reason: rejection.to_string() });
            }
        }
        last_ts = Some(tx.timestamp);
    }
    Ok((state, events))
}

/// Parse a `.txlog` body: one canonical transaction per line, each line
/// required to re-encode byte-identically.
pub fn parse_txlog(bytes: &[u8]) -> Result<Vec<Transaction>, LedgerError> {
    let mut txs = Vec::new();
    for (line_no, line) in split_lines(bytes).enumerate() {
        let tx = parse_exact_line(line, Transaction::parse, |t: &Transaction| t.canon_string())
            .map_err(|source| LedgerError::Parse { line: line_no as u64, source })?;
        txs.push(tx);
    }
    Ok(txs)
}

/// Render a transaction list as a `.txlog` body.
pub fn format_txlog<'a>(txs: impl IntoIterator<Item = &'a Transaction>) -> String {
    let mut out = String::new();
    for tx in txs {
        tx.write_canon(&mut out);
        out.push('\n');
    }
    out
}

/// Line iterator over raw bytes: pieces separated by `\n`, with only a final
/// empty piece (the usual trailing newline) dropped. An unterminated final
/// line is still yielded so corruption of the terminator itself is caught by
/// the strict per-line parser.
fn split_lines(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut pieces: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    if pieces.last().is_some_and(|last| last.is_empty()) {
        pieces.pop();
    }
    pieces.into_iter()
}

/// Strict single-line parse: full consumption plus byte-identical re-encode.
fn parse_exact_line<T>(
    line: &[u8],
    parse: impl Fn(&mut Cursor<'_>) -> Result<T, ParseError>,
    encode: impl Fn(&T) -> String,
) -> Result<T, ParseError> {
    let mut cur = Cursor::new(line);
    let value = parse(&mut cur)?;
    cur.expect_end()?;
    if encode(&value).as_bytes() != line {
        return Err(ParseError { pos: 0, msg: "non-canonical encoding".into() });
    }
    Ok(value)
}

// ---------------------------------------------------------------------------
// Chain
// ---------------------------------------------------------------------------

/// The append-only ledger: sealed blocks, the contract state at the tip
/// (pending included), and accepted-but-unsealed transactions. Single
/// logical writer; snapshots may be cloned and read concurrently.
#[derive(Debug, Clone, Default)]
pub struct Chain {
    blocks: Vec<Block>,
    tip_state: ContractState,
    pending: Vec<(Transaction, Vec<Event>)>,
    next_seq: u64,
    last_timestamp: Option<u64>,
}

impl Chain {
    pub fn new() -> Chain {
        Chain::default()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_state(&self) -> &ContractState {
        &self.tip_state
    }

    pub fn tip_state_digest(&self) -> Digest {
        state_digest(&self.tip_state)
    }

    /// Digest of the latest sealed block, all-zero before any seal.
    pub fn tip_block_digest(&self) -> Digest {
        self.blocks.last().map(|b| b.digest).unwrap_or(Digest::ZERO)
    }

    pub fn pending(&self) -> &[(Transaction, Vec<Event>)] {
        &self.pending
    }

    /// Timestamp of the most recently accepted transaction, if any.
    pub fn last_timestamp(&self) -> Option<u64> {
        self.last_timestamp
    }

    /// All accepted transactions in seq order: sealed first, then pending.
    pub fn accepted_transactions(&self) -> impl Iterator<Item = &Transaction> {
        self.blocks
            .iter()
            .flat_map(|b| b.txs.iter())
            .chain(self.pending.iter().map(|(tx, _)| tx))
    }

    /// Validate and accept one transaction. On rejection the chain is
    /// unchanged; a timestamp below the last accepted one is itself a
    /// malformed-transaction rejection.
    pub fn submit(&mut self, payload: TxPayload, timestamp: u64) -> Result<Accepted, Rejection> {
        if self.last_timestamp.is_some_and(|last| timestamp < last) {
            return Err(Rejection {
                guard: crate::contract::Guard::Malformed,
                offending_id: 0,
                detail: format!(
                    "timestamp {timestamp} earlier than last accepted {}",
                    self.last_timestamp.unwrap()
                ),
            });
        }
        let (next_state, events) = self.tip_state.apply_transaction(&payload)?;
        let tx = Transaction { seq: self.next_seq, timestamp, payload };
        let accepted = Accepted { seq: tx.seq, events: events.clone() };
        self.tip_state = next_state;
        self.pending.push((tx, events));
        self.next_seq += 1;
        self.last_timestamp = Some(timestamp);
        Ok(accepted)
    }

    /// Move all pending transactions into a new sealed block. An empty block
    /// is permitted only at height 0.
    pub fn seal_block(&mut self, timestamp: u64) -> Result<&Block, LedgerError> {
        if self.pending.is_empty() && !self.blocks.is_empty() {
            return Err(LedgerError::EmptyPending);
        }
        let height = self.height();
        let mut txs = Vec::with_capacity(self.pending.len());
        let mut events = Vec::new();
        for (tx, tx_events) in self.pending.drain(..) {
            txs.push(tx);
            events.extend(tx_events);
        }
        let mut block = Block {
            height,
            timestamp,
            prev_digest: self.tip_block_digest(),
            txs,
            events,
            state_digest: state_digest(&self.tip_state),
            digest: Digest::ZERO,
        };
        block.digest = block.compute_digest();
        self.blocks.push(block);
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Validate a foreign sealed block against this chain's tip and append
    /// it: link and digest checks first, then a full replay of its
    /// transactions with event and post-state comparison. Replica nodes and
    /// the chain-file loader share this path.
    pub fn append_sealed_block(&mut self, block: Block) -> Result<(), LedgerError> {
        let height = self.height();
        let fail = |reason: String| LedgerError::InvalidBlock { height, reason };

        if !self.pending.is_empty() {
            return Err(fail("pending transactions present".into()));
        }
        if block.height != height {
            return Err(fail(format!("expected height {height}, found {}", block.height)));
        }
        if block.prev_digest != self.tip_block_digest() {
            return Err(fail("previous-block link does not match tip".into()));
        }
        if block.digest != block.compute_digest() {
            return Err(fail("stored digest does not match content".into()));
        }

        let mut state = self.tip_state.clone();
        let mut events = Vec::new();
        let mut seq = self.next_seq;
        let mut last_ts = self.last_timestamp;
        for tx in &block.txs {
            if tx.seq != seq {
                return Err(fail(format!("expected seq {seq}, found {}", tx.seq)));
            }
            if last_ts.is_some_and(|last| tx.timestamp < last) {
                return Err(fail(format!("timestamp decreases at seq {seq}")));
            }
            match state.apply_transaction(&tx.payload) {
                Ok((next, emitted)) => {
                    state = next;
                    events.extend(emitted);
                }
                Err(rejection) => {
                    return Err(fail(format!("rejected transaction at seq {seq}: {rejection}")));
                }
            }
            seq += 1;
            last_ts = Some(tx.timestamp);
        }
        if events != block.events {
            return Err(fail("events do not match replay".into()));
        }
        if state_digest(&state) != block.state_digest {
            return Err(fail("state digest does not match replay".into()));
        }

        self.blocks.push(block);
        self.tip_state = state;
        self.next_seq = seq;
        self.last_timestamp = last_ts;
        Ok(())
    }

    /// Recompute every digest and link and replay every transaction,
    /// comparing each block's recorded events and state digest. Total
    /// function: returns the lowest inconsistent height, if any.
    pub fn verify(&self) -> VerifyOutcome {
        let mut check = Chain::new();
        for (h, block) in self.blocks.iter().enumerate() {
            if check.append_sealed_block(block.clone()).is_err() {
                return VerifyOutcome::BadHeight(h as u64);
            }
        }
        VerifyOutcome::Ok
    }

    /// `.txlog` body for the full accepted history (sealed plus pending).
    pub fn export_txlog(&self) -> String {
        format_txlog(self.accepted_transactions())
    }

    /// `.chain` body: one canonical block line per sealed block.
    pub fn export_chain(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&block.canon_line());
            out.push('\n');
        }
        out
    }

    /// Strict load of a `.chain` body: every line must parse, re-encode
    /// byte-identically, and append cleanly. The pending set starts empty.
    pub fn load_chain(bytes: &[u8]) -> Result<Chain, LedgerError> {
        let mut chain = Chain::new();
        for (h, line) in split_lines(bytes).enumerate() {
            let block = parse_exact_line(line, Block::parse, |b: &Block| b.canon_line())
                .map_err(|e| LedgerError::InvalidBlock {
                    height: h as u64,
                    reason: e.to_string(),
                })?;
            chain.append_sealed_block(block)?;
        }
        Ok(chain)
    }

    /// Derive the enabled produce/consume/use states of the accepted
    /// history, stamped with the timestamps of their transactions.
    pub fn activity_states(&self) -> Vec<ActivityState> {
        let mut out = Vec::new();
        for block in &self.blocks {
            let mut offset = 0;
            for tx in &block.txs {
                let n = payload_event_count(&tx.payload);
                collect_states(&mut out, tx.timestamp, &block.events[offset..offset + n]);
                offset += n;
            }
        }
        for (tx, events) in &self.pending {
            collect_states(&mut out, tx.timestamp, events);
        }
        out
    }
}

/// Verify a persisted `.chain` file without assuming it parses: any line
/// that fails the strict grammar, re-encodes differently, or fails the
/// digest/link/replay checks marks its height as the first bad one. Works on
/// raw bytes so tampering that breaks UTF-8 still yields a height.
pub fn verify_chain_bytes(bytes: &[u8]) -> VerifyOutcome {
    let mut chain = Chain::new();
    for (h, line) in split_lines(bytes).enumerate() {
        let parsed = parse_exact_line(line, Block::parse, |b: &Block| b.canon_line());
        let block = match parsed {
            Ok(block) => block,
            Err(_) => return VerifyOutcome::BadHeight(h as u64),
        };
        if chain.append_sealed_block(block).is_err() {
            return VerifyOutcome::BadHeight(h as u64);
        }
    }
    VerifyOutcome::Ok
}

/// Number of events an accepted transaction of this shape emits.
fn payload_event_count(payload: &TxPayload) -> usize {
    match payload {
        TxPayload::Genesis { .. } => 1,
        TxPayload::Activity { inputs, outputs, .. } => 1 + inputs.len() + outputs.len(),
        TxPayload::Unknown { .. } => 0,
    }
}

fn collect_states(out: &mut Vec<ActivityState>, timestamp: u64, events: &[Event]) {
    use crate::contract::EventKind;
    for event in events {
        let role = match event.kind {
            EventKind::TruCreated if !event.activity_id.is_null() => StateRole::Produce,
            EventKind::TruConsumed => StateRole::Consume,
            EventKind::TruUsed => StateRole::Use,
            _ => continue,
        };
        out.push(ActivityState {
            role,
            activity: event.activity_id,
            tru: event.tru_id,
            enabled_at: timestamp,
        });
    }
}
