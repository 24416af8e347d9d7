//! The Trace contract: a guarded state machine over TRUs and primitive
//! activities.
//!
//! Transactions are applied functionally: `ContractState` is an immutable
//! snapshot, every mutation returns a fresh state plus the ordered events it
//! emitted, and any guard failure rejects the whole transaction with the
//! first failing guard. A rejection implies zero state change and zero
//! events, mirroring EVM-style whole-transaction revert.
//!
//! Guard evaluation order is fixed and observable: for an activity, the
//! activity-id guards run first, then inputs in list order, then outputs in
//! list order; within each step the declared guard order of the underlying
//! operation applies.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::canon::{write_string, write_uint, Cursor, ParseError};
use crate::model::{
    ActivityId, PrimitiveActivity, Tru, TruId, UnknownTru, MAX_ACTIVITY_NAME_BYTES,
};

// ---------------------------------------------------------------------------
// Guards and rejections
// ---------------------------------------------------------------------------

/// Named transaction-validity guards. Each variant is the guard that failed;
/// the names match the contract's modifier vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Guard {
    /// An identity argument was zero.
    NonZero,
    /// A TRU that must not exist already does.
    TruDoesNotExist,
    /// A TRU input was already consumed or used.
    TruAvailable,
    /// A TRU that must exist does not.
    TruExists,
    /// An activity that must exist does not.
    PrimitiveActivityExists,
    /// An activity that must not exist already does.
    ActivityDoesNotExist,
    /// The transaction itself violates the wire schema.
    Malformed,
}

impl Guard {
    pub fn name(&self) -> &'static str {
        match self {
            Guard::NonZero => "nonZero",
            Guard::TruDoesNotExist => "truDoesNotExist",
            Guard::TruAvailable => "truAvailable",
            Guard::TruExists => "truExists",
            Guard::PrimitiveActivityExists => "primitiveActivityExists",
            Guard::ActivityDoesNotExist => "activityDoesNotExist",
            Guard::Malformed => "malformed",
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rejected transaction: which guard failed, on which identity, and a
/// short human-readable detail. Implies zero state change and zero events.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{guard} id={offending_id}: {detail}")]
pub struct Rejection {
    pub guard: Guard,
    pub offending_id: u64,
    pub detail: String,
}

impl Rejection {
    fn new(guard: Guard, offending_id: u64, detail: impl Into<String>) -> Rejection {
        Rejection { guard, offending_id, detail: detail.into() }
    }
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

/// Event discriminant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    TruCreated,
    TruConsumed,
    TruUsed,
    ActivityCreated,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TruCreated => "TruCreated",
            EventKind::TruConsumed => "TruConsumed",
            EventKind::TruUsed => "TruUsed",
            EventKind::ActivityCreated => "ActivityCreated",
        }
    }

    fn from_word(word: &str) -> Option<EventKind> {
        match word {
            "TruCreated" => Some(EventKind::TruCreated),
            "TruConsumed" => Some(EventKind::TruConsumed),
            "TruUsed" => Some(EventKind::TruUsed),
            "ActivityCreated" => Some(EventKind::ActivityCreated),
            _ => None,
        }
    }
}

/// The contract's only output channel: an ordered, persisted log record.
///
/// `msg_order` values across an accepted history are exactly 0,1,2,... with
/// no gaps or repeats. For `TruCreated` the `activity_id` is the producing
/// activity (zero for genesis TRUs), so the event log alone determines every
/// provenance edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub msg_order: u64,
    pub kind: EventKind,
    /// Zero when not applicable (ActivityCreated).
    pub tru_id: TruId,
    /// Zero when not applicable (genesis TruCreated).
    pub activity_id: ActivityId,
    /// Empty when not applicable (TruCreated).
    pub activity_name: String,
}

impl Event {
    pub fn write_canon(&self, out: &mut String) {
        out.push_str("ev(");
        write_uint(out, self.msg_order);
        out.push(',');
        out.push_str(self.kind.name());
        out.push(',');
        write_uint(out, self.tru_id.get());
        out.push(',');
        write_uint(out, self.activity_id.get());
        out.push(',');
        write_string(out, &self.activity_name);
        out.push(')');
    }

    pub fn canon_string(&self) -> String {
        let mut out = String::new();
        self.write_canon(&mut out);
        out
    }

    pub(crate) fn parse(cur: &mut Cursor<'_>) -> Result<Event, ParseError> {
        let err = |cur: &Cursor<'_>, msg: &str| ParseError { pos: cur.pos(), msg: msg.into() };
        let word = cur.expect_word()?;
        if word != "ev" {
            return Err(err(cur, "expected event record"));
        }
        cur.expect_byte(b'(')?;
        let msg_order = cur.expect_uint()?;
        cur.expect_byte(b',')?;
        let kind_word = cur.expect_word()?;
        let kind = EventKind::from_word(kind_word)
            .ok_or_else(|| err(cur, "unknown event kind"))?;
        cur.expect_byte(b',')?;
        let tru_id = TruId(cur.expect_uint()?);
        cur.expect_byte(b',')?;
        let activity_id = ActivityId(cur.expect_uint()?);
        cur.expect_byte(b',')?;
        let activity_name = cur.expect_string()?;
        cur.expect_byte(b')')?;
        Ok(Event { msg_order, kind, tru_id, activity_id, activity_name })
    }
}

/// Human-readable form, matching the contract's event signatures:
/// `TruCreated(msgOrder,truId)`, `TruConsumed(msgOrder,truId,activityId,"name")`,
/// `TruUsed(...)`, `ActivityCreated(msgOrder,activityId,"name")`.
impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut name = String::new();
        write_string(&mut name, &self.activity_name);
        match self.kind {
            EventKind::TruCreated => {
                write!(f, "TruCreated({},{})", self.msg_order, self.tru_id)
            }
            EventKind::TruConsumed => write!(
                f,
                "TruConsumed({},{},{},{})",
                self.msg_order, self.tru_id, self.activity_id, name
            ),
            EventKind::TruUsed => write!(
                f,
                "TruUsed({},{},{},{})",
                self.msg_order, self.tru_id, self.activity_id, name
            ),
            EventKind::ActivityCreated => {
                write!(f, "ActivityCreated({},{},{})", self.msg_order, self.activity_id, name)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Transaction payloads
// ---------------------------------------------------------------------------

/// Whether an activity's inputs are consumed or merely used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputMode {
    Consume,
    Use,
}

impl InputMode {
    pub fn word(&self) -> &'static str {
        match self {
            InputMode::Consume => "consume",
            InputMode::Use => "use",
        }
    }

    pub fn from_word(word: &str) -> Option<InputMode> {
        match word {
            "consume" => Some(InputMode::Consume),
            "use" => Some(InputMode::Use),
            _ => None,
        }
    }
}

/// The operation carried by a transaction. `Unknown` preserves wire payloads
/// whose op name or arity does not match the schema; applying one is always
/// rejected as malformed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TxPayload {
    Genesis {
        id: TruId,
    },
    Activity {
        id: ActivityId,
        name: String,
        inputs: Vec<TruId>,
        outputs: Vec<TruId>,
        mode: InputMode,
    },
    Unknown {
        op: String,
        raw: String,
    },
}

// ---------------------------------------------------------------------------
// Contract state
// ---------------------------------------------------------------------------

/// The Trace contract's world state: identity-keyed TRU and activity lookups
/// plus the monotone event counter. Snapshots are immutable values; all
/// transitions return a new state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ContractState {
    trus: BTreeMap<TruId, Tru>,
    activities: BTreeMap<ActivityId, PrimitiveActivity>,
    msg_order: u64,
}

impl ContractState {
    /// Fresh contract: empty lookups, event counter at zero.
    pub fn new() -> ContractState {
        ContractState::default()
    }

    /// Rebuild a state from raw parts. Only for in-crate tests that need
    /// guard-violating states (e.g. cyclic provenance links).
    #[cfg(test)]
    pub(crate) fn from_parts(
        trus: BTreeMap<TruId, Tru>,
        activities: BTreeMap<ActivityId, PrimitiveActivity>,
        msg_order: u64,
    ) -> ContractState {
        ContractState { trus, activities, msg_order }
    }

    pub fn tru(&self, id: TruId) -> Option<&Tru> {
        self.trus.get(&id)
    }

    pub fn activity(&self, id: ActivityId) -> Option<&PrimitiveActivity> {
        self.activities.get(&id)
    }

    pub fn trus(&self) -> impl Iterator<Item = &Tru> {
        self.trus.values()
    }

    pub fn activities(&self) -> impl Iterator<Item = &PrimitiveActivity> {
        self.activities.values()
    }

    /// Total number of events ever emitted by accepted transactions.
    pub fn msg_order(&self) -> u64 {
        self.msg_order
    }

    /// The single-valued producer link: `Some(activity)` when the TRU was
    /// produced by a recorded activity, `None` for genesis TRUs.
    pub fn producer_of(&self, id: TruId) -> Result<Option<ActivityId>, UnknownTru> {
        let tru = self.trus.get(&id).ok_or(UnknownTru(id))?;
        Ok(if tru.produced_by.is_null() { None } else { Some(tru.produced_by) })
    }

    /// Canonical encoding: lookups in ascending key order, then the counter.
    pub fn write_canon(&self, out: &mut String) {
        out.push_str("state([");
        for (i, tru) in self.trus.values().enumerate() {
            if i > 0 {
                out.push(',');
            }
            tru.write_canon(out);
        }
        out.push_str("],[");
        for (i, act) in self.activities.values().enumerate() {
            if i > 0 {
                out.push(',');
            }
            act.write_canon(out);
        }
        out.push_str("],");
        write_uint(out, self.msg_order);
        out.push(')');
    }

    pub fn canon_string(&self) -> String {
        let mut out = String::new();
        self.write_canon(&mut out);
        out
    }

    // -- public transitions --------------------------------------------------

    /// Record a TRU with no recorded producer.
    pub fn create_genesis_tru(&self, id: TruId) -> Result<(ContractState, Event), Rejection> {
        let mut next = self.clone();
        let event = next.new_tru(id)?;
        Ok((next, event))
    }

    /// The sole composite mutation: register the activity, then commit each
    /// input in list order, then create each output in list order. Any guard
    /// failure anywhere rejects the whole call.
    pub fn record_activity(
        &self,
        id: ActivityId,
        name: &str,
        inputs: &[TruId],
        outputs: &[TruId],
        mode: InputMode,
    ) -> Result<(ContractState, Vec<Event>), Rejection> {
        if name.len() > MAX_ACTIVITY_NAME_BYTES {
            return Err(Rejection::new(
                Guard::Malformed,
                id.get(),
                format!("activity name exceeds {MAX_ACTIVITY_NAME_BYTES} bytes"),
            ));
        }
        let mut next = self.clone();
        let mut events = Vec::with_capacity(1 + inputs.len() + outputs.len());

        events.push(next.new_activity(id, name, inputs, outputs)?);
        for &input in inputs {
            events.push(match mode {
                InputMode::Consume => next.consume_tru(input, id)?,
                InputMode::Use => next.use_tru(input, id)?,
            });
        }
        for &output in outputs {
            events.push(next.new_produced_tru(output, id)?);
        }
        Ok((next, events))
    }

    /// Dispatch a wire transaction payload. Deterministic: identical
    /// (state, payload) always yields the identical result, with events
    /// numbered continuously from `msg_order`.
    pub fn apply_transaction(
        &self,
        payload: &TxPayload,
    ) -> Result<(ContractState, Vec<Event>), Rejection> {
        match payload {
            TxPayload::Genesis { id } => {
                let (state, event) = self.create_genesis_tru(*id)?;
                Ok((state, vec![event]))
            }
            TxPayload::Activity { id, name, inputs, outputs, mode } => {
                self.record_activity(*id, name, inputs, outputs, *mode)
            }
            TxPayload::Unknown { op, .. } => Err(Rejection::new(
                Guard::Malformed,
                0,
                format!("unknown or malformed op {op:?}"),
            )),
        }
    }

    // -- guards ---------------------------------------------------------------

    fn guard_non_zero(num: u64) -> Result<(), Rejection> {
        if num == 0 {
            return Err(Rejection::new(Guard::NonZero, 0, "identity must be nonzero"));
        }
        Ok(())
    }

    fn guard_tru_does_not_exist(&self, id: TruId) -> Result<(), Rejection> {
        if self.trus.contains_key(&id) {
            return Err(Rejection::new(Guard::TruDoesNotExist, id.get(), "tru already exists"));
        }
        Ok(())
    }

    fn guard_tru_exists(&self, id: TruId) -> Result<(), Rejection> {
        if !self.trus.contains_key(&id) {
            return Err(Rejection::new(Guard::TruExists, id.get(), "tru does not exist"));
        }
        Ok(())
    }

    fn guard_tru_available(&self, id: TruId) -> Result<(), Rejection> {
        if let Some(tru) = self.trus.get(&id) {
            if tru.consumed || tru.used {
                return Err(Rejection::new(
                    Guard::TruAvailable,
                    id.get(),
                    "tru already consumed or used",
                ));
            }
        }
        Ok(())
    }

    fn guard_activity_exists(&self, id: ActivityId) -> Result<(), Rejection> {
        if !self.activities.contains_key(&id) {
            return Err(Rejection::new(
                Guard::PrimitiveActivityExists,
                id.get(),
                "activity does not exist",
            ));
        }
        Ok(())
    }

    fn guard_activity_does_not_exist(&self, id: ActivityId) -> Result<(), Rejection> {
        if self.activities.contains_key(&id) {
            return Err(Rejection::new(
                Guard::ActivityDoesNotExist,
                id.get(),
                "activity already exists",
            ));
        }
        Ok(())
    }

    // -- private transition steps ---------------------------------------------

    fn emit(
        &mut self,
        kind: EventKind,
        tru_id: TruId,
        activity_id: ActivityId,
        activity_name: &str,
    ) -> Event {
        let event = Event {
            msg_order: self.msg_order,
            kind,
            tru_id,
            activity_id,
            activity_name: activity_name.to_string(),
        };
        self.msg_order += 1;
        event
    }

    fn new_tru(&mut self, id: TruId) -> Result<Event, Rejection> {
        self.guard_tru_does_not_exist(id)?;
        Self::guard_non_zero(id.get())?;
        self.trus.insert(id, Tru::genesis(id));
        Ok(self.emit(EventKind::TruCreated, id, ActivityId::NULL, ""))
    }

    fn new_produced_tru(&mut self, id: TruId, activity_id: ActivityId) -> Result<Event, Rejection> {
        self.guard_tru_does_not_exist(id)?;
        Self::guard_non_zero(id.get())?;
        self.guard_activity_exists(activity_id)?;
        let mut tru = Tru::genesis(id);
        tru.produced_by = activity_id;
        self.trus.insert(id, tru);
        Ok(self.emit(EventKind::TruCreated, id, activity_id, ""))
    }

    fn consume_tru(&mut self, tru_id: TruId, activity_id: ActivityId) -> Result<Event, Rejection> {
        self.guard_tru_exists(tru_id)?;
        self.guard_tru_available(tru_id)?;
        self.guard_activity_exists(activity_id)?;
        let name = self.activities[&activity_id].name.clone();
        let tru = self.trus.get_mut(&tru_id).expect("guarded");
        tru.consumed = true;
        tru.consumed_by = activity_id;
        tru.committed = tru.quantity;
        Ok(self.emit(EventKind::TruConsumed, tru_id, activity_id, &name))
    }

    fn use_tru(&mut self, tru_id: TruId, activity_id: ActivityId) -> Result<Event, Rejection> {
        self.guard_tru_exists(tru_id)?;
        self.guard_tru_available(tru_id)?;
        self.guard_activity_exists(activity_id)?;
        let name = self.activities[&activity_id].name.clone();
        let tru = self.trus.get_mut(&tru_id).expect("guarded");
        tru.used = true;
        tru.used_by = activity_id;
        tru.committed = tru.quantity;
        Ok(self.emit(EventKind::TruUsed, tru_id, activity_id, &name))
    }

    fn new_activity(
        &mut self,
        id: ActivityId,
        name: &str,
        inputs: &[TruId],
        outputs: &[TruId],
    ) -> Result<Event, Rejection> {
        self.guard_activity_does_not_exist(id)?;
        Self::guard_non_zero(id.get())?;
        self.activities.insert(
            id,
            PrimitiveActivity {
                id,
                created: true,
                name: name.to_string(),
                input_tru_ids: inputs.to_vec(),
                output_tru_ids: outputs.to_vec(),
            },
        );
        Ok(self.emit(EventKind::ActivityCreated, TruId::NULL, id, name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Quantity;

    fn mix_scenario_state() -> ContractState {
        let state = ContractState::new();
        let (state, _) = state.create_genesis_tru(TruId(1)).unwrap();
        let (state, _) = state.create_genesis_tru(TruId(2)).unwrap();
        state
    }

    #[test]
    fn init_contract_is_empty_with_zero_counter() {
        let state = ContractState::new();
        assert_eq!(state.msg_order(), 0);
        assert_eq!(state.trus().count(), 0);
        assert_eq!(state.activities().count(), 0);
        assert_eq!(ContractState::new(), state);
        assert_eq!(state.canon_string(), "state([],[],0)");
    }

    #[test]
    fn genesis_tru_sets_defaults_and_emits() {
        let (state, event) = ContractState::new().create_genesis_tru(TruId(1)).unwrap();
        assert_eq!(event.canon_string(), "ev(0,TruCreated,1,0,\"\")");
        assert_eq!(event.to_string(), "TruCreated(0,1)");
        assert_eq!(state.msg_order(), 1);

        let tru = state.tru(TruId(1)).unwrap();
        assert!(tru.created && !tru.consumed && !tru.used);
        assert!(tru.produced_by.is_null() && tru.consumed_by.is_null() && tru.used_by.is_null());
        assert_eq!(tru.quantity, Quantity::one());
        assert_eq!(tru.committed, Quantity::zero());
        assert_eq!(state.producer_of(TruId(1)), Ok(None));
    }

    #[test]
    fn duplicate_genesis_is_rejected_by_tru_does_not_exist() {
        let (state, _) = ContractState::new().create_genesis_tru(TruId(1)).unwrap();
        let rejection = state.create_genesis_tru(TruId(1)).unwrap_err();
        assert_eq!(rejection.guard, Guard::TruDoesNotExist);
        assert_eq!(rejection.offending_id, 1);
    }

    #[test]
    fn zero_genesis_id_is_rejected_by_non_zero() {
        let rejection = ContractState::new().create_genesis_tru(TruId(0)).unwrap_err();
        assert_eq!(rejection.guard, Guard::NonZero);
    }

    #[test]
    fn record_activity_emits_in_pinned_order() {
        let state = mix_scenario_state();
        let k = state.msg_order();
        let (state, events) = state
            .record_activity(
                ActivityId(10),
                "mix",
                &[TruId(1), TruId(2)],
                &[TruId(3)],
                InputMode::Consume,
            )
            .unwrap();

        let rendered: Vec<String> = events.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            rendered,
            vec![
                format!("ActivityCreated({k},10,\"mix\")"),
                format!("TruConsumed({},1,10,\"mix\")", k + 1),
                format!("TruConsumed({},2,10,\"mix\")", k + 2),
                format!("TruCreated({},3)", k + 3),
            ]
        );
        assert_eq!(state.producer_of(TruId(3)), Ok(Some(ActivityId(10))));
        assert_eq!(state.tru(TruId(1)).unwrap().consumed_by, ActivityId(10));
        assert_eq!(state.msg_order(), k + 4);

        let act = state.activity(ActivityId(10)).unwrap();
        assert_eq!(act.name, "mix");
        assert_eq!(act.input_tru_ids, vec![TruId(1), TruId(2)]);
        assert_eq!(act.output_tru_ids, vec![TruId(3)]);
    }

    #[test]
    fn activity_id_reuse_is_rejected() {
        let state = mix_scenario_state();
        let (state, _) = state
            .record_activity(ActivityId(10), "mix", &[TruId(1)], &[], InputMode::Consume)
            .unwrap();
        let rejection = state
            .record_activity(ActivityId(10), "mix", &[TruId(2)], &[], InputMode::Consume)
            .unwrap_err();
        assert_eq!(rejection.guard, Guard::ActivityDoesNotExist);
        assert_eq!(rejection.offending_id, 10);
    }

    #[test]
    fn consumed_input_rejects_atomically() {
        let state = mix_scenario_state();
        let (state, _) = state
            .record_activity(ActivityId(10), "mix", &[TruId(1)], &[TruId(3)], InputMode::Consume)
            .unwrap();

        let before = state.canon_string();
        let rejection = state
            .record_activity(ActivityId(11), "again", &[TruId(1)], &[TruId(4)], InputMode::Consume)
            .unwrap_err();
        assert_eq!(rejection.guard, Guard::TruAvailable);
        assert_eq!(rejection.offending_id, 1);
        // Whole-call revert: the activity registration must not survive.
        assert_eq!(state.canon_string(), before);
        assert!(state.activity(ActivityId(11)).is_none());
    }

    #[test]
    fn consume_tru_guards_fire_in_declared_order() {
        let state = mix_scenario_state();
        let (state, _) = state
            .record_activity(ActivityId(11), "pack", &[], &[TruId(3)], InputMode::Consume)
            .unwrap();

        // Direct consumption path, as the composite entrypoint drives it.
        let mut work = state.clone();
        let event = work.consume_tru(TruId(3), ActivityId(11)).unwrap();
        assert_eq!(event.to_string(), format!("TruConsumed({},3,11,\"pack\")", state.msg_order()));

        // Already consumed -> truAvailable.
        let again = work.consume_tru(TruId(3), ActivityId(11)).unwrap_err();
        assert_eq!(again.guard, Guard::TruAvailable);

        // Absent activity -> primitiveActivityExists.
        let mut work = state.clone();
        let missing = work.consume_tru(TruId(1), ActivityId(99)).unwrap_err();
        assert_eq!(missing.guard, Guard::PrimitiveActivityExists);
        assert_eq!(missing.offending_id, 99);

        // Id zero was never created -> truExists.
        let mut work = state.clone();
        let zero = work.use_tru(TruId(0), ActivityId(11)).unwrap_err();
        assert_eq!(zero.guard, Guard::TruExists);
    }

    #[test]
    fn use_mode_sets_used_family_fields() {
        let state = mix_scenario_state();
        let (state, events) = state
            .record_activity(ActivityId(12), "inspect", &[TruId(1)], &[], InputMode::Use)
            .unwrap();
        assert_eq!(events[1].kind, EventKind::TruUsed);
        let tru = state.tru(TruId(1)).unwrap();
        assert!(tru.used && !tru.consumed);
        assert_eq!(tru.used_by, ActivityId(12));
        assert_eq!(tru.committed, tru.quantity);
        assert!(!tru.is_available());

        // A used TRU is terminally unavailable.
        let rejection = state
            .record_activity(ActivityId(13), "again", &[TruId(1)], &[], InputMode::Use)
            .unwrap_err();
        assert_eq!(rejection.guard, Guard::TruAvailable);
    }

    #[test]
    fn duplicate_and_overlapping_lists_fail_via_stepwise_guards() {
        let state = mix_scenario_state();

        let dup_inputs = state
            .record_activity(ActivityId(10), "a", &[TruId(1), TruId(1)], &[], InputMode::Consume)
            .unwrap_err();
        assert_eq!(dup_inputs.guard, Guard::TruAvailable);

        let dup_outputs = state
            .record_activity(ActivityId(10), "a", &[], &[TruId(3), TruId(3)], InputMode::Consume)
            .unwrap_err();
        assert_eq!(dup_outputs.guard, Guard::TruDoesNotExist);

        let overlap = state
            .record_activity(ActivityId(10), "a", &[TruId(1)], &[TruId(1)], InputMode::Consume)
            .unwrap_err();
        assert_eq!(overlap.guard, Guard::TruDoesNotExist);
    }

    #[test]
    fn output_guard_order_matches_new_tru_declaration() {
        let state = mix_scenario_state();

        // Zero output id: truDoesNotExist passes (0 is never created), then
        // nonZero fires.
        let zero_out = state
            .record_activity(ActivityId(10), "a", &[], &[TruId(0)], InputMode::Consume)
            .unwrap_err();
        assert_eq!(zero_out.guard, Guard::NonZero);

        // Existing output id: truDoesNotExist fires first.
        let existing_out = state
            .record_activity(ActivityId(10), "a", &[], &[TruId(2)], InputMode::Consume)
            .unwrap_err();
        assert_eq!(existing_out.guard, Guard::TruDoesNotExist);

        // Missing input: truExists.
        let missing_in = state
            .record_activity(ActivityId(10), "a", &[TruId(99)], &[], InputMode::Consume)
            .unwrap_err();
        assert_eq!(missing_in.guard, Guard::TruExists);
    }

    #[test]
    fn apply_transaction_dispatches_and_rejects_unknown_ops() {
        let state = ContractState::new();
        let (state, events) =
            state.apply_transaction(&TxPayload::Genesis { id: TruId(1) }).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].kind, EventKind::TruCreated);

        let unknown = state
            .apply_transaction(&TxPayload::Unknown { op: "frobnicate".into(), raw: String::new() })
            .unwrap_err();
        assert_eq!(unknown.guard, Guard::Malformed);
    }

    #[test]
    fn apply_transaction_is_deterministic() {
        let state = mix_scenario_state();
        let payload = TxPayload::Activity {
            id: ActivityId(10),
            name: "mix".into(),
            inputs: vec![TruId(1), TruId(2)],
            outputs: vec![TruId(3)],
            mode: InputMode::Consume,
        };
        let (s1, e1) = state.apply_transaction(&payload).unwrap();
        let (s2, e2) = state.apply_transaction(&payload).unwrap();
        assert_eq!(s1.canon_string(), s2.canon_string());
        assert_eq!(e1, e2);
    }

    #[test]
    fn oversized_activity_name_is_malformed() {
        let state = mix_scenario_state();
        let long = "x".repeat(MAX_ACTIVITY_NAME_BYTES + 1);
        let rejection = state
            .record_activity(ActivityId(10), &long, &[], &[], InputMode::Consume)
            .unwrap_err();
        assert_eq!(rejection.guard, Guard::Malformed);

        // Exactly at the limit is fine.
        let edge = "x".repeat(MAX_ACTIVITY_NAME_BYTES);
        assert!(state.record_activity(ActivityId(10), &edge, &[], &[], InputMode::Consume).is_ok());
    }

    #[test]
    fn event_canon_round_trips() {
        let state = mix_scenario_state();
        let (_, events) = state
            .record_activity(
                ActivityId(10),
                "mi\"x",
                &[TruId(1), TruId(2)],
                &[TruId(3)],
                InputMode::Consume,
            )
            .unwrap();
        for event in &events {
            let encoded = event.canon_string();
            let mut cur = Cursor::new(encoded.as_bytes());
            let parsed = Event::parse(&mut cur).unwrap();
            cur.expect_end().unwrap();
            assert_eq!(&parsed, event);
        }
    }
}
