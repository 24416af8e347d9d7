//! Provenance trace queries over a contract-state snapshot.
//!
//! A backward (primitive) trace walks from a TRU through its producing
//! activity to that activity's input TRUs, recursively, terminating at
//! genesis TRUs. A forward (where-used) trace walks the other way: from a
//! TRU to the activity that consumed or used it, then to that activity's
//! outputs. Both are pure functions of `(state, tru, direction)` and O(answer),
//! which the event-log oracle tests hold equivalent to scanning the history.
//!
//! Under the contract guards the provenance graph is a DAG, so the cycle
//! branch is unreachable on any accepted history; it exists because replayed
//! logs from foreign implementations may violate the guards, and a trace
//! must terminate anyway.

use crate::canon::{write_bool, write_string, write_uint, Digest};
use crate::contract::ContractState;
use crate::ledger::state_digest;
use crate::model::{TruId, UnknownTru};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceDirection {
    Backward,
    Forward,
}

impl TraceDirection {
    pub fn word(&self) -> &'static str {
        match self {
            TraceDirection::Backward => "backward",
            TraceDirection::Forward => "forward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceNodeKind {
    Tru,
    Activity,
}

/// One node of a trace tree. Activity names are carried so reports render
/// without a second lookup; `cycle_marker` nodes always have no children.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceNode {
    pub kind: TraceNodeKind,
    pub id: u64,
    pub name: String,
    pub children: Vec<TraceNode>,
    pub cycle_marker: bool,
}

/// A provenance tree plus the digest of the state it was computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceReport {
    pub root: TraceNode,
    pub direction: TraceDirection,
    pub state_digest: Digest,
}

/// Backward provenance: root TRU, child = producing activity (if any), an
/// activity's children = its input TRUs in recorded order.
pub fn primitive_trace(state: &ContractState, id: TruId) -> Result<TraceReport, UnknownTru> {
    if state.tru(id).is_none() {
        return Err(UnknownTru(id));
    }
    let mut path = Vec::new();
    let root = backward_tru_node(state, id, &mut path);
    Ok(TraceReport { root, direction: TraceDirection::Backward, state_digest: state_digest(state) })
}

/// Forward where-used: root TRU, child = the activity that consumed or used
/// it (if any), an activity's children = its output TRUs in recorded order.
pub fn forward_trace(state: &ContractState, id: TruId) -> Result<TraceReport, UnknownTru> {
    if state.tru(id).is_none() {
        return Err(UnknownTru(id));
    }
    let mut path = Vec::new();
    let root = forward_tru_node(state, id, &mut path);
    Ok(TraceReport { root, direction: TraceDirection::Forward, state_digest: state_digest(state) })
}

fn tru_node(id: TruId, children: Vec<TraceNode>, cycle: bool) -> TraceNode {
    TraceNode {
        kind: TraceNodeKind::Tru,
        id: id.get(),
        name: String::new(),
        children,
        cycle_marker: cycle,
    }
}

fn backward_tru_node(state: &ContractState, id: TruId, path: &mut Vec<TruId>) -> TraceNode {
    if path.contains(&id) {
        return tru_node(id, Vec::new(), true);
    }
    path.push(id);
    let mut children = Vec::new();
    if let Some(tru) = state.tru(id) {
        if !tru.produced_by.is_null() {
            let (name, inputs) = match state.activity(tru.produced_by) {
                Some(act) => (act.name.clone(), act.input_tru_ids.clone()),
                // Dangling link in a foreign history: show the bare activity.
                None => (String::new(), Vec::new()),
            };
            children.push(TraceNode {
                kind: TraceNodeKind::Activity,
                id: tru.produced_by.get(),
                name,
                children: inputs
                    .iter()
                    .map(|&input| backward_tru_node(state, input, path))
                    .collect(),
                cycle_marker: false,
            });
        }
    }
    path.pop();
    tru_node(id, children, false)
}

fn forward_tru_node(state: &ContractState, id: TruId, path: &mut Vec<TruId>) -> TraceNode {
    if path.contains(&id) {
        return tru_node(id, Vec::new(), true);
    }
    path.push(id);
    let mut children = Vec::new();
    if let Some(tru) = state.tru(id) {
        let taker = if !tru.consumed_by.is_null() {
            Some(tru.consumed_by)
        } else if !tru.used_by.is_null() {
            Some(tru.used_by)
        } else {
            None
        };
        if let Some(activity_id) = taker {
            let (name, outputs) = match state.activity(activity_id) {
                Some(act) => (act.name.clone(), act.output_tru_ids.clone()),
                None => (String::new(), Vec::new()),
            };
            children.push(TraceNode {
                kind: TraceNodeKind::Activity,
                id: activity_id.get(),
                name,
                children: outputs
                    .iter()
                    .map(|&output| forward_tru_node(state, output, path))
                    .collect(),
                cycle_marker: false,
            });
        }
    }
    path.pop();
    tru_node(id, children, false)
}

/// Deterministic indented text: one node per line, two spaces per depth,
/// `TRU <id>` or `ACTIVITY <id> "<name>"`, cycle nodes suffixed `(cycle)`,
/// then a footer naming the root TRU and the first 8 hex of the state digest.
pub fn render_trace(report: &TraceReport) -> String {
    let mut out = String::new();
    render_node(&report.root, 0, &mut out);
    out.push_str(&format!(
        "-- trace of TRU {}, state {} --\n",
        report.root.id,
        report.state_digest.short_hex()
    ));
    out
}

fn render_node(node: &TraceNode, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    match node.kind {
        TraceNodeKind::Tru => {
            out.push_str("TRU ");
            write_uint(out, node.id);
        }
        TraceNodeKind::Activity => {
            out.push_str("ACTIVITY ");
            write_uint(out, node.id);
            out.push(' ');
            write_string(out, &node.name);
        }
    }
    if node.cycle_marker {
        out.push_str(" (cycle)");
    }
    out.push('\n');
    for child in &node.children {
        render_node(child, depth + 1, out);
    }
}

/// Canonical machine encoding of a report:
/// `trace(direction,stateDigest,node)` with
/// `node := n(kind,id,name,cycle,[children])`, kind `tru` | `act`.
pub fn write_report_canon(report: &TraceReport, out: &mut String) {
    out.push_str("trace(");
    out.push_str(report.direction.word());
    out.push(',');
    out.push_str(&report.state_digest.to_hex());
    out.push(',');
    write_node_canon(&report.root, out);
    out.push(')');
}

fn write_node_canon(node: &TraceNode, out: &mut String) {
    out.push_str("n(");
    out.push_str(match node.kind {
        TraceNodeKind::Tru => "tru",
        TraceNodeKind::Activity => "act",
    });
    out.push(',');
    write_uint(out, node.id);
    out.push(',');
    write_string(out, &node.name);
    out.push(',');
    write_bool(out, node.cycle_marker);
    out.push_str(",[");
    for (i, child) in node.children.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write_node_canon(child, out);
    }
    out.push_str("])");
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::contract::InputMode;
    use crate::model::{ActivityId, PrimitiveActivity, Tru};

    /// genesis 1,2 -> activity 10 "mix" -> TRU 3 -> activity 11 "pack" -> TRU 4.
    fn scenario_state() -> ContractState {
        let state = ContractState::new();
        let (state, _) = state.create_genesis_tru(TruId(1)).unwrap();
        let (state, _) = state.create_genesis_tru(TruId(2)).unwrap();
        let (state, _) = state
            .record_activity(ActivityId(10), "mix", &[TruId(1), TruId(2)], &[TruId(3)], InputMode::Consume)
            .unwrap();
        let (state, _) = state
            .record_activity(ActivityId(11), "pack", &[TruId(3)], &[TruId(4)], InputMode::Consume)
            .unwrap();
        state
    }

    fn flatten(node: &TraceNode, out: &mut Vec<(TraceNodeKind, u64)>) {
        out.push((node.kind, node.id));
        for child in &node.children {
            flatten(child, out);
        }
    }

    #[test]
    fn genesis_tru_traces_to_a_single_node() {
        let (state, _) = ContractState::new().create_genesis_tru(TruId(1)).unwrap();
        let report = primitive_trace(&state, TruId(1)).unwrap();
        assert_eq!(report.root.id, 1);
        assert!(report.root.children.is_empty());
        assert_eq!(render_trace(&report).lines().count(), 2);
    }

    #[test]
    fn backward_trace_matches_the_scenario_shape() {
        let state = scenario_state();
        let report = primitive_trace(&state, TruId(4)).unwrap();
        let mut nodes = Vec::new();
        flatten(&report.root, &mut nodes);
        assert_eq!(
            nodes,
            vec![
                (TraceNodeKind::Tru, 4),
                (TraceNodeKind::Activity, 11),
                (TraceNodeKind::Tru, 3),
                (TraceNodeKind::Activity, 10),
                (TraceNodeKind::Tru, 1),
                (TraceNodeKind::Tru, 2),
            ]
        );

        let rendered = render_trace(&report);
        let expected = format!(
            "TRU 4\n  ACTIVITY 11 \"pack\"\n    TRU 3\n      ACTIVITY 10 \"mix\"\n        TRU 1\n        TRU 2\n-- trace of TRU 4, state {} --\n",
            report.state_digest.short_hex()
        );
        assert_eq!(rendered, expected);
    }

    #[test]
    fn forward_trace_matches_the_scenario_shape() {
        let state = scenario_state();
        let report = forward_trace(&state, TruId(1)).unwrap();
        let mut nodes = Vec::new();
        flatten(&report.root, &mut nodes);
        assert_eq!(
            nodes,
            vec![
                (TraceNodeKind::Tru, 1),
                (TraceNodeKind::Activity, 10),
                (TraceNodeKind::Tru, 3),
                (TraceNodeKind::Activity, 11),
                (TraceNodeKind::Tru, 4),
            ]
        );

        // Unconsumed leaf: single node.
        let leaf = forward_trace(&state, TruId(4)).unwrap();
        assert!(leaf.root.children.is_empty());
    }

    #[test]
    fn unknown_tru_is_an_error_in_both_directions() {
        let state = scenario_state();
        assert_eq!(primitive_trace(&state, TruId(999)).unwrap_err(), UnknownTru(TruId(999)));
        assert_eq!(forward_trace(&state, TruId(999)).unwrap_err(), UnknownTru(TruId(999)));
    }

    #[test]
    fn reports_are_deterministic() {
        let state = scenario_state();
        let a = primitive_trace(&state, TruId(4)).unwrap();
        let b = primitive_trace(&state, TruId(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(render_trace(&a), render_trace(&b));

        let mut canon_a = String::new();
        write_report_canon(&a, &mut canon_a);
        assert!(canon_a.starts_with("trace(backward,"));
        assert!(canon_a.contains("n(act,11,\"pack\",0,[n(tru,3"));
    }

    #[test]
    fn cycle_in_a_foreign_state_is_marked_not_hung() {
        // Guard-violating state: TRU 1 produced by activity 7 which lists
        // TRU 1 as its own input.
        let mut tru = Tru::genesis(TruId(1));
        tru.produced_by = ActivityId(7);
        let mut trus = BTreeMap::new();
        trus.insert(TruId(1), tru);
        let mut activities = BTreeMap::new();
        activities.insert(
            ActivityId(7),
            PrimitiveActivity {
                id: ActivityId(7),
                created: true,
                name: "loop".into(),
                input_tru_ids: vec![TruId(1)],
                output_tru_ids: vec![TruId(1)],
            },
        );
        let state = ContractState::from_parts(trus, activities, 0);

        let report = primitive_trace(&state, TruId(1)).unwrap();
        let inner = &report.root.children[0].children[0];
        assert!(inner.cycle_marker);
        assert!(inner.children.is_empty());
        assert!(render_trace(&report).contains("TRU 1 (cycle)"));

        // The marker must also bound the forward walk, where the activity's
        // output list points back at the same TRU.
        let mut tru = Tru::genesis(TruId(1));
        tru.consumed = true;
        tru.consumed_by = ActivityId(7);
        let mut trus = BTreeMap::new();
        trus.insert(TruId(1), tru);
        let mut activities = BTreeMap::new();
        activities.insert(
            ActivityId(7),
            PrimitiveActivity {
                id: ActivityId(7),
                created: true,
                name: "loop".into(),
                input_tru_ids: vec![TruId(1)],
                output_tru_ids: vec![TruId(1)],
            },
        );
        let state = ContractState::from_parts(trus, activities, 0);
        let report = forward_trace(&state, TruId(1)).unwrap();
        assert!(report.root.children[0].children[0].cycle_marker);
    }
}
