//! Deterministic desk-scale replication simulation.
//!
//! Node 0 is the proposer: it validates client transactions, seals blocks,
//! and broadcasts each sealed block's canonical encoding to every replica.
//! Replicas independently verify what arrives (strict parse, link and digest
//! checks, full replay) before appending; anything that fails is quarantined
//! and the node flagged as diverged, leaving its accepted state untouched.
//!
//! Delivery is per-destination FIFO with a seed-driven interleaving across
//! destinations, so one seed fully determines the schedule and the final
//! digests. Tampering is modeled en route: a delivery marked tampered has
//! one byte flipped just before the destination sees it.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::canon::Cursor;
use crate::contract::{Rejection, TxPayload};
use crate::ledger::{Accepted, Block, Chain, LedgerError};

/// One simulated participant and its independent chain copy.
#[derive(Debug, Clone)]
pub struct SimNode {
    pub node_id: usize,
    pub chain: Chain,
    /// Height of the last block this node verified and applied.
    pub last_verified: Option<u64>,
    /// Set once any delivery fails verification; never cleared.
    pub diverged: bool,
    /// Number of quarantined deliveries.
    pub quarantined: u64,
}

#[derive(Debug, Clone)]
struct Delivery {
    bytes: Vec<u8>,
    tampered: bool,
}

/// What happened on one `deliver_next` step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeliveryReport {
    /// No deliveries in flight.
    Idle,
    Applied { node: usize, height: u64 },
    Quarantined { node: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("network needs at least one node")]
    EmptyNetwork,
}

/// A proposer plus replicas with in-flight block deliveries.
#[derive(Debug)]
pub struct SimNetwork {
    nodes: Vec<SimNode>,
    queues: Vec<VecDeque<Delivery>>,
    rng: ChaCha8Rng,
    seed: u64,
    deliveries: u64,
    blocks_broadcast: u64,
}

impl SimNetwork {
    /// `n` nodes, all at the empty chain; node 0 proposes.
    pub fn new(n: usize, seed: u64) -> Result<SimNetwork, SimError> {
        if n == 0 {
            return Err(SimError::EmptyNetwork);
        }
        let nodes = (0..n)
            .map(|node_id| SimNode {
                node_id,
                chain: Chain::new(),
                last_verified: None,
                diverged: false,
                quarantined: 0,
            })
            .collect();
        Ok(SimNetwork {
            nodes,
            queues: vec![VecDeque::new(); n],
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            deliveries: 0,
            blocks_broadcast: 0,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn nodes(&self) -> &[SimNode] {
        &self.nodes
    }

    pub fn deliveries(&self) -> u64 {
        self.deliveries
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().map(|q| q.len()).sum()
    }

    /// Submit through the proposer. Rejections are terminal: nothing is
    /// broadcast for a rejected transaction.
    pub fn client_submit(&mut self, payload: TxPayload, timestamp: u64) -> Result<Accepted, Rejection> {
        self.nodes[0].chain.submit(payload, timestamp)
    }

    /// Seal the proposer's pending transactions and enqueue the block's
    /// canonical encoding to every replica.
    pub fn seal_and_broadcast(&mut self, timestamp: u64) -> Result<Block, LedgerError> {
        self.seal_and_broadcast_with(timestamp, None)
    }

    /// As `seal_and_broadcast`, but mark the copy addressed to `tamper_dest`
    /// for an en-route byte flip.
    pub fn seal_and_broadcast_with(
        &mut self,
        timestamp: u64,
        tamper_dest: Option<usize>,
    ) -> Result<Block, LedgerError> {
        let block = self.nodes[0].chain.seal_block(timestamp)?.clone();
        self.nodes[0].last_verified = Some(block.height);
        let line = block.canon_line();
        for dest in 1..self.nodes.len() {
            self.queues[dest].push_back(Delivery {
                bytes: line.clone().into_bytes(),
                tampered: tamper_dest == Some(dest),
            });
        }
        self.blocks_broadcast += 1;
        Ok(block)
    }

    /// Pop one in-flight delivery (seeded choice among destinations with
    /// queued items, FIFO within a destination) and let the destination
    /// verify and apply it.
    pub fn deliver_next(&mut self) -> DeliveryReport {
        let ready: Vec<usize> =
            (0..self.queues.len()).filter(|&i| !self.queues[i].is_empty()).collect();
        if ready.is_empty() {
            return DeliveryReport::Idle;
        }
        let dest = ready[self.rng.random_range(0..ready.len())];
        let mut delivery = self.queues[dest].pop_front().expect("nonempty queue");
        self.deliveries += 1;

        if delivery.tampered && !delivery.bytes.is_empty() {
            let pos = self.rng.random_range(0..delivery.bytes.len());
            let xor: u8 = self.rng.random_range(1..=255);
            delivery.bytes[pos] ^= xor;
        }

        let node = &mut self.nodes[dest];
        match validate_and_append(&mut node.chain, &delivery.bytes) {
            Ok(height) => {
                node.last_verified = Some(height);
                DeliveryReport::Applied { node: dest, height }
            }
            Err(reason) => {
                node.diverged = true;
                node.quarantined += 1;
                DeliveryReport::Quarantined { node: dest, reason }
            }
        }
    }

    /// Deliver until no items remain in flight; returns the step count.
    pub fn run_to_quiescence(&mut self) -> u64 {
        let mut steps = 0;
        while self.deliver_next() != DeliveryReport::Idle {
            steps += 1;
        }
        steps
    }

    /// True iff every non-diverged node reports the same tip block digest
    /// and the same tip state digest.
    pub fn check_convergence(&self) -> bool {
        let mut signature = None;
        for node in &self.nodes {
            if node.diverged {
                continue;
            }
            let sig = (node.chain.tip_block_digest(), node.chain.tip_state_digest());
            match &signature {
                None => signature = Some(sig),
                Some(first) if *first != sig => return false,
                Some(_) => {}
            }
        }
        true
    }

    /// Text report: nodes, blocks, deliveries, divergences, final digests.
    pub fn summary(&self) -> String {
        let diverged = self.nodes.iter().filter(|n| n.diverged).count();
        let mut out = String::new();
        out.push_str(&format!("nodes: {}\n", self.nodes.len()));
        out.push_str(&format!("blocks broadcast: {}\n", self.blocks_broadcast));
        out.push_str(&format!("deliveries: {}\n", self.deliveries));
        out.push_str(&format!("diverged: {diverged}\n"));
        for node in &self.nodes {
            out.push_str(&format!(
                "node {}: height {} state {}{}\n",
                node.node_id,
                node.chain.height(),
                node.chain.tip_state_digest().to_hex(),
                if node.diverged { " (diverged)" } else { "" },
            ));
        }
        out.push_str(&format!("converged: {}\n", self.check_convergence()));
        out
    }
}

/// Replica-side verification of one delivered block encoding.
fn validate_and_append(chain: &mut Chain, bytes: &[u8]) -> Result<u64, String> {
    let mut cur = Cursor::new(bytes);
    let block = Block::parse(&mut cur).map_err(|e| e.to_string())?;
    cur.expect_end().map_err(|e| e.to_string())?;
    if block.canon_line().as_bytes() != bytes {
        return Err("non-canonical block encoding".to_string());
    }
    let height = block.height;
    chain.append_sealed_block(block).map_err(|e| e.to_string())?;
    Ok(height)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ActivityId, TruId};

    fn workload(net: &mut SimNetwork, round: u64) {
        let base = round * 3;
        let ts = (round + 1) * 1000;
        net.client_submit(TxPayload::Genesis { id: TruId(base + 1) }, ts).unwrap();
        net.client_submit(TxPayload::Genesis { id: TruId(base + 2) }, ts + 1).unwrap();
        net.client_submit(
            TxPayload::Activity {
                id: ActivityId(round + 1),
                name: format!("step{round}"),
                inputs: vec![TruId(base + 1), TruId(base + 2)],
                outputs: vec![TruId(base + 3)],
                mode: crate::contract::InputMode::Consume,
            },
            ts + 2,
        )
        .unwrap();
    }

    #[test]
    fn single_node_network_is_a_standalone_chain() {
        let mut net = SimNetwork::new(1, 7).unwrap();
        workload(&mut net, 0);
        net.seal_and_broadcast(5000).unwrap();
        assert_eq!(net.in_flight(), 0);
        assert_eq!(net.deliver_next(), DeliveryReport::Idle);
        assert!(net.check_convergence());
        assert_eq!(net.nodes()[0].chain.height(), 1);
    }

    #[test]
    fn zero_node_network_is_an_error() {
        assert_eq!(SimNetwork::new(0, 1).unwrap_err(), SimError::EmptyNetwork);
    }

    #[test]
    fn fresh_nodes_start_with_equal_digests() {
        let net = SimNetwork::new(4, 9).unwrap();
        let digest = net.nodes()[0].chain.tip_state_digest();
        assert!(net.nodes().iter().all(|n| n.chain.tip_state_digest() == digest));
        assert!(net.check_convergence());
    }

    #[test]
    fn lossless_run_converges() {
        let mut net = SimNetwork::new(4, 42).unwrap();
        for round in 0..5 {
            workload(&mut net, round);
            net.seal_and_broadcast((round + 1) * 1000 + 500).unwrap();
        }
        assert!(!net.check_convergence(), "replicas lag before delivery");
        net.run_to_quiescence();
        assert!(net.check_convergence());
        for node in net.nodes() {
            assert_eq!(node.chain.height(), 5);
            assert!(!node.diverged);
            assert_eq!(node.last_verified, Some(4));
        }
    }

    #[test]
    fn same_seed_gives_identical_schedules_and_digests() {
        let run = |seed: u64| {
            let mut net = SimNetwork::new(5, seed).unwrap();
            let mut reports = Vec::new();
            for round in 0..4 {
                workload(&mut net, round);
                net.seal_and_broadcast((round + 1) * 1000 + 500).unwrap();
                reports.push(net.deliver_next());
            }
            net.run_to_quiescence();
            let digests: Vec<String> =
                net.nodes().iter().map(|n| n.chain.tip_state_digest().to_hex()).collect();
            (reports, digests, net.deliveries())
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).0, run(8).0);
    }

    #[test]
    fn tampered_delivery_quarantines_only_the_victim() {
        let mut net = SimNetwork::new(4, 11).unwrap();
        workload(&mut net, 0);
        net.seal_and_broadcast_with(1500, Some(2)).unwrap();

        let victim_before = net.nodes()[2].chain.tip_state_digest();
        net.run_to_quiescence();

        let victim = &net.nodes()[2];
        assert!(victim.diverged);
        assert_eq!(victim.quarantined, 1);
        assert_eq!(victim.chain.tip_state_digest(), victim_before);
        assert_eq!(victim.chain.height(), 0);

        for other in [1usize, 3] {
            assert!(!net.nodes()[other].diverged);
            assert_eq!(net.nodes()[other].chain.height(), 1);
        }
        // Non-diverged nodes still agree.
        assert!(net.check_convergence());
    }

    #[test]
    fn conflicting_submissions_resolve_to_first_submitted() {
        let mut net = SimNetwork::new(2, 3).unwrap();
        net.client_submit(TxPayload::Genesis { id: TruId(1) }, 100).unwrap();
        let second = net.client_submit(TxPayload::Genesis { id: TruId(1) }, 101).unwrap_err();
        assert_eq!(second.guard, crate::contract::Guard::TruDoesNotExist);
        // The rejection produced no broadcast traffic.
        assert_eq!(net.in_flight(), 0);
    }

    #[test]
    fn summary_reports_convergence() {
        let mut net = SimNetwork::new(2, 5).unwrap();
        workload(&mut net, 0);
        net.seal_and_broadcast(1500).unwrap();
        net.run_to_quiescence();
        let summary = net.summary();
        assert!(summary.contains("nodes: 2"));
        assert!(summary.contains("converged: true"));
    }
}
