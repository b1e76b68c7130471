use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{flip_random_bit, MessageKind, NodeKind, SimError, SimMetrics, SimTopology};
use crate::chain::{Block, Hash32, Transaction, TxId};
use crate::coding::{make_codeword, Codeword, CodingError, DecodeOutcome, PeelingDecoder, Segment};

const REQUEST_BYTES: usize = 32;

/// How a lookup reaches the requester's neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeMode {
    /// One neighbor at a time until a valid answer arrives.
    #[default]
    Sequential,
    /// Ask every neighbor at once; all holders answer.
    Parallel,
}

impl std::str::FromStr for ProbeMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sequential" => Ok(ProbeMode::Sequential),
            "parallel" => Ok(ProbeMode::Parallel),
            other => Err(format!("unknown mode {other:?} (sequential|parallel)")),
        }
    }
}

/// Generic neighbor probe. `serve` returns the bytes a node would send (None
/// for a miss); `accept` checks a response and returns the item.
fn probe<T, R, S, A>(
    topo: &SimTopology,
    requester: usize,
    mode: ProbeMode,
    metrics: &mut SimMetrics,
    rng: &mut R,
    serve: S,
    accept: A,
) -> Result<Option<T>, SimError>
where
    R: Rng + ?Sized,
    S: Fn(&super::SimNode) -> Option<Vec<u8>>,
    A: Fn(&[u8]) -> Option<T>,
{
    topo.requester(requester)?;
    metrics.lookups_attempted += 1;
    let mut found = None;
    for &nb in &topo.neighbors[requester] {
        if found.is_some() && mode == ProbeMode::Sequential {
            break;
        }
        metrics.record(requester, nb, MessageKind::Request, REQUEST_BYTES);
        let node = &topo.nodes[nb];
        if !node.alive {
            continue;
        }
        let Some(mut bytes) = serve(node) else {
            metrics.record(nb, requester, MessageKind::Miss, 0);
            continue;
        };
        if node.byzantine {
            flip_random_bit(&mut bytes, rng);
        }
        metrics.record(nb, requester, MessageKind::Response, bytes.len());
        match accept(&bytes) {
            Some(item) => {
                if found.is_none() {
                    found = Some(item);
                }
            }
            None => metrics.fraud_detected += 1,
        }
    }
    if found.is_some() {
        metrics.lookups_succeeded += 1;
    }
    Ok(found)
}

/// Fetches the body for a known header. Responses are checked against the
/// header and its Merkle root before acceptance.
pub fn recover_block<R: Rng + ?Sized>(
    topo: &SimTopology,
    requester: usize,
    header_hash: &Hash32,
    mode: ProbeMode,
    metrics: &mut SimMetrics,
    rng: &mut R,
) -> Result<Option<Block>, SimError> {
    let chain = topo.chain().ok_or(SimError::NoChain)?;
    let header = *chain
        .find_header(header_hash)
        .ok_or_else(|| SimError::UnknownHeader(header_hash.to_hex()))?;
    let h = header.height;
    probe(
        topo,
        requester,
        mode,
        metrics,
        rng,
        |node| {
            let b = match node.kind {
                NodeKind::Full => chain.block(h),
                NodeKind::Dsn => node.dsn.as_ref().and_then(|d| d.body(h)),
                NodeKind::CodingDsn => None,
            };
            b.map(Block::serialize)
        },
        |bytes| {
            Block::deserialize(bytes)
                .ok()
                .filter(|b| b.header == header && b.commitment_holds())
        },
    )
}

/// Fetches a transaction by id; answers must re-hash to the id.
pub fn recover_transaction<R: Rng + ?Sized>(
    topo: &SimTopology,
    requester: usize,
    id: &TxId,
    mode: ProbeMode,
    metrics: &mut SimMetrics,
    rng: &mut R,
) -> Result<Option<Transaction>, SimError> {
    let chain = topo.chain();
    let index = topo.tx_index.clone();
    probe(
        topo,
        requester,
        mode,
        metrics,
        rng,
        |node| node.holds_tx(chain, &index, id).map(|t| t.serialize()),
        |bytes| Transaction::deserialize(bytes).ok().filter(|t| t.id() == *id),
    )
}

/// Alive-or-not coding nodes to ask: the requester's neighbors first, then
/// the rest of the population in random order.
fn contact_order<R: Rng + ?Sized>(topo: &SimTopology, requester: usize, rng: &mut R) -> Vec<usize> {
    let is_coder = |i: usize| i != requester && topo.nodes[i].kind == NodeKind::CodingDsn;
    let mut order: Vec<usize> = topo.neighbors[requester].iter().copied().filter(|&i| is_coder(i)).collect();
    let seen: HashSet<usize> = order.iter().copied().collect();
    let mut rest: Vec<usize> = (0..topo.len())
        .filter(|&i| is_coder(i) && !seen.contains(&i) && topo.nodes[i].alive)
        .collect();
    rest.shuffle(rng);
    order.extend(rest);
    order
}

fn segment_subset(stored: Option<&Vec<Transaction>>, wanted: &HashSet<TxId>) -> Vec<Transaction> {
    stored
        .map(|s| s.iter().filter(|t| wanted.contains(&t.id())).cloned().collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct SegmentRecovery {
    pub outcome: DecodeOutcome,
    pub complete: bool,
    /// Codewords that arrived, accepted or not.
    pub consumed: usize,
    /// Codewords that passed every check, in arrival order.
    pub codewords: Vec<Codeword>,
    /// Codewords dropped by wire, ingest or re-hash checks.
    pub rejected: usize,
}

impl SegmentRecovery {
    pub fn decoded_fraction(&self) -> f64 {
        let k = self.outcome.decoded.len() + self.outcome.undecoded.len();
        self.outcome.decoded.len() as f64 / k as f64
    }
}

/// Streams one codeword per contacted coding node into a peeling decoder
/// until the segment is recovered or the population is exhausted.
pub fn recover_segment_coded<R: Rng + ?Sized>(
    topo: &SimTopology,
    requester: usize,
    segment: &Segment,
    metrics: &mut SimMetrics,
    rng: &mut R,
) -> Result<SegmentRecovery, SimError> {
    topo.requester(requester)?;
    let wanted: HashSet<TxId> = segment.spec.tx_ids.iter().copied().collect();
    let mut dec = PeelingDecoder::new(&segment.spec);
    let mut slots = Vec::new();
    let mut consumed = 0;
    let mut rejected = 0;
    for nb in contact_order(topo, requester, rng) {
        if dec.is_complete() {
            break;
        }
        metrics.record(requester, nb, MessageKind::Request, REQUEST_BYTES);
        let node = &topo.nodes[nb];
        if !node.alive {
            continue;
        }
        let subset = segment_subset(node.stored_txs.as_ref(), &wanted);
        if subset.is_empty() {
            metrics.degree0_skipped += 1;
            metrics.record(nb, requester, MessageKind::Miss, 0);
            continue;
        }
        let cw = make_codeword(&subset, segment.spec.payload_len)?;
        let mut wire = cw.encode();
        if node.byzantine {
            flip_random_bit(&mut wire, rng);
        }
        metrics.record(nb, requester, MessageKind::Response, wire.len());
        consumed += 1;
        let Ok(received) = Codeword::decode(&wire) else {
            rejected += 1;
            continue;
        };
        metrics.coded_payload_bytes += received.payload.len() as u64;
        let before = dec.received();
        match dec.push(&received) {
            Ok(_) | Err(CodingError::CorruptCodeword { .. }) => {}
            Err(
                CodingError::ForeignMember { .. }
                | CodingError::DegreeTooLarge { .. }
                | CodingError::DuplicateMember
                | CodingError::EmptyCodeword
                | CodingError::PayloadLength { .. },
            ) => rejected += 1,
            Err(e) => return Err(e.into()),
        }
        if dec.received() > before {
            slots.push(received);
        }
    }
    let dropped: HashSet<usize> = dec.rejected().iter().map(|&(slot, _)| slot).collect();
    rejected += dropped.len();
    metrics.fraud_detected += rejected as u64;
    let codewords = slots
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, c)| c)
        .collect();
    let complete = dec.is_complete();
    if complete {
        metrics.segments_recovered += 1;
    } else {
        metrics.segments_failed += 1;
    }
    metrics.codewords_consumed.push(consumed);
    Ok(SegmentRecovery {
        outcome: dec.outcome(),
        complete,
        consumed,
        codewords,
        rejected,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UncodedRecovery {
    pub complete: bool,
    pub nodes_contacted: usize,
    /// Transactions shipped, duplicates included.
    pub txs_received: usize,
    /// Serialized transaction bytes shipped.
    pub tx_bytes: u64,
}

/// Baseline without coding: every contacted node ships all of its stored
/// segment transactions; stop once all K have arrived.
pub fn recover_segment_uncoded<R: Rng + ?Sized>(
    topo: &SimTopology,
    requester: usize,
    segment: &Segment,
    metrics: &mut SimMetrics,
    rng: &mut R,
) -> Result<UncodedRecovery, SimError> {
    topo.requester(requester)?;
    let wanted: HashSet<TxId> = segment.spec.tx_ids.iter().copied().collect();
    let mut have: HashSet<TxId> = HashSet::new();
    let mut out = UncodedRecovery {
        complete: false,
        nodes_contacted: 0,
        txs_received: 0,
        tx_bytes: 0,
    };
    for nb in contact_order(topo, requester, rng) {
        if have.len() == wanted.len() {
            break;
        }
        out.nodes_contacted += 1;
        metrics.record(requester, nb, MessageKind::Request, REQUEST_BYTES);
        let node = &topo.nodes[nb];
        if !node.alive {
            continue;
        }
        let subset = segment_subset(node.stored_txs.as_ref(), &wanted);
        if subset.is_empty() {
            metrics.degree0_skipped += 1;
            metrics.record(nb, requester, MessageKind::Miss, 0);
            continue;
        }
        let mut items: Vec<Vec<u8>> = subset.iter().map(Transaction::serialize).collect();
        if node.byzantine {
            let i = rng.random_range(0..items.len());
            flip_random_bit(&mut items[i], rng);
        }
        let bytes: usize = items.iter().map(Vec::len).sum();
        metrics.record(nb, requester, MessageKind::Response, bytes);
        out.tx_bytes += bytes as u64;
        for item in items {
            out.txs_received += 1;
            match Transaction::deserialize(&item).ok().map(|t| t.id()).filter(|id| wanted.contains(id)) {
                Some(id) => {
                    have.insert(id);
                }
                None => metrics.fraud_detected += 1,
            }
        }
    }
    out.complete = have.len() == wanted.len();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{gauss_decode_oracle, robust_soliton, DegreeDistribution};
    use crate::sim::{build_topology, NodeMix};
    use crate::synth::generate_chain;
    use crate::entropy::DurationModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_chain() -> Arc<crate::chain::Chain> {
        Arc::new(generate_chain(30, 4, &DurationModel::BITCOIN, &mut rng(1)).unwrap().chain)
    }

    #[test]
    fn full_neighbor_answers_first_request() {
        let mut t = build_topology(5, 2, NodeMix::all(NodeKind::Full), &mut rng(0)).unwrap();
        let chain = small_chain();
        t.attach_chain(chain.clone());
        let mut m = SimMetrics::default();
        let h = chain.block(7).unwrap().header.hash();
        let b = recover_block(&t, 0, &h, ProbeMode::Sequential, &mut m, &mut rng(0)).unwrap();
        assert_eq!(b.as_ref(), chain.block(7));
        assert_eq!(m.messages, 2);
        assert_eq!(m.bytes_sent, chain.block(7).unwrap().serialize().len() as u64);
        assert_eq!(m.bytes_sent, m.logged_response_bytes());
    }

    #[test]
    fn all_pruned_is_not_found_after_m_requests() {
        let mut t = build_topology(6, 3, NodeMix::all(NodeKind::CodingDsn), &mut rng(0)).unwrap();
        let chain = small_chain();
        t.attach_chain(chain.clone());
        let mut m = SimMetrics::default();
        let h = chain.block(3).unwrap().header.hash();
        let b = recover_block(&t, 0, &h, ProbeMode::Sequential, &mut m, &mut rng(0)).unwrap();
        assert!(b.is_none());
        assert_eq!(m.log.iter().filter(|r| r.kind == MessageKind::Request).count(), 3);
        assert_eq!(m.lookups_succeeded, 0);
    }

    #[test]
    fn tampered_block_rejected_then_recovered() {
        let mut t = build_topology(3, 2, NodeMix::all(NodeKind::Full), &mut rng(0)).unwrap();
        let chain = small_chain();
        t.attach_chain(chain.clone());
        let first = t.neighbors[0][0];
        t.set_byzantine([first]);
        let mut m = SimMetrics::default();
        let h = chain.block(9).unwrap().header.hash();
        let b = recover_block(&t, 0, &h, ProbeMode::Sequential, &mut m, &mut rng(4)).unwrap();
        assert_eq!(b.as_ref(), chain.block(9));
        assert_eq!(m.fraud_detected, 1);
    }

    #[test]
    fn transaction_lookup_and_empty_neighbor_set() {
        let mut t = build_topology(4, 3, NodeMix::all(NodeKind::Full), &mut rng(0)).unwrap();
        let chain = small_chain();
        t.attach_chain(chain.clone());
        let tx = chain.block(5).unwrap().body[1].clone();
        let mut m = SimMetrics::default();
        let got = recover_transaction(&t, 2, &tx.id(), ProbeMode::Sequential, &mut m, &mut rng(0)).unwrap();
        assert_eq!(got, Some(tx.clone()));
        t.neighbors[1].clear();
        let mut m = SimMetrics::default();
        let got = recover_transaction(&t, 1, &tx.id(), ProbeMode::Sequential, &mut m, &mut rng(0)).unwrap();
        assert_eq!(got, None);
        assert_eq!(m.messages, 0);
    }

    #[test]
    fn dead_requester_is_an_error() {
        let mut t = build_topology(4, 2, NodeMix::all(NodeKind::Full), &mut rng(0)).unwrap();
        t.attach_chain(small_chain());
        t.nodes[0].alive = false;
        let mut m = SimMetrics::default();
        assert_eq!(
            recover_transaction(&t, 0, &Hash32::ZERO, ProbeMode::Sequential, &mut m, &mut rng(0)),
            Err(SimError::RequesterDead(0))
        );
    }

    #[test]
    fn coded_recovery_with_soliton_storage() {
        let seg = Segment::synthetic(100, 0.05, 0.1, 7).unwrap();
        let rs = robust_soliton(&seg.spec).unwrap();
        let mut t = build_topology(600, 8, NodeMix::all(NodeKind::CodingDsn), &mut rng(2)).unwrap();
        t.provision_coding(&seg, &rs.dist, &mut rng(3));
        let mut m = SimMetrics::default();
        let r = recover_segment_coded(&t, 0, &seg, &mut m, &mut rng(4)).unwrap();
        assert!(r.complete);
        assert!(r.consumed >= 100);
        for (i, id) in seg.spec.tx_ids.iter().enumerate() {
            assert_eq!(r.outcome.decoded[id], seg.payload(i));
        }
        assert_eq!(m.bytes_sent, m.logged_response_bytes());
        // storage stays uncoded
        for n in &t.nodes {
            for tx in n.stored_txs.as_ref().unwrap() {
                assert!(seg.spec.tx_ids.contains(&tx.id()));
            }
        }
    }

    #[test]
    fn high_degree_storage_needs_elimination() {
        let k = 16;
        let seg = Segment::synthetic(k, 0.05, 0.1, 7).unwrap();
        // odd weight; even-weight rows would only span a rank K-1 subspace
        let dist = DegreeDistribution::point(k, 7).unwrap();
        let mut t = build_topology(60, 4, NodeMix::all(NodeKind::CodingDsn), &mut rng(2)).unwrap();
        t.provision_coding(&seg, &dist, &mut rng(3));
        let mut m = SimMetrics::default();
        let r = recover_segment_coded(&t, 0, &seg, &mut m, &mut rng(4)).unwrap();
        assert!(!r.complete);
        assert_eq!(r.outcome.decoded.len(), 0);
        assert_eq!(m.segments_failed, 1);
        let g = gauss_decode_oracle(&seg.spec, &r.codewords).unwrap();
        assert!(g.complete());
    }

    #[test]
    fn uncoded_baseline_covers_segment() {
        let seg = Segment::synthetic(50, 0.05, 0.1, 7).unwrap();
        let rs = robust_soliton(&seg.spec).unwrap();
        let mut t = build_topology(400, 8, NodeMix::all(NodeKind::CodingDsn), &mut rng(2)).unwrap();
        t.provision_coding(&seg, &rs.dist, &mut rng(3));
        let mut m = SimMetrics::default();
        let u = recover_segment_uncoded(&t, 0, &seg, &mut m, &mut rng(4)).unwrap();
        assert!(u.complete);
        assert!(u.txs_received >= 50);
    }
}
