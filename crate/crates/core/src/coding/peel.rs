use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{payload_matches, xor_into, Codeword, CodingError, SegmentSpec};
use crate::chain::TxId;

/// Result of a decoding attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    /// Recovered zero-padded payloads keyed by transaction id.
    pub decoded: BTreeMap<TxId, Vec<u8>>,
    pub undecoded: Vec<TxId>,
    /// Segment positions in the order they were recovered.
    pub order: Vec<usize>,
    pub xor_ops: u64,
    pub max_xor_per_codeword: u32,
}

impl DecodeOutcome {
    pub fn complete(&self) -> bool {
        self.undecoded.is_empty()
    }
}

/// Incremental belief-propagation decoder.
///
/// Codewords may arrive one at a time. Whenever some codeword has exactly one
/// unresolved member, the lowest-index such codeword is resolved, verified by
/// re-hashing, and XORed out of every other codeword that references it.
pub struct PeelingDecoder<'a> {
    spec: &'a SegmentSpec,
    index: HashMap<TxId, usize>,
    decoded: Vec<Option<Vec<u8>>>,
    n_decoded: usize,
    order: Vec<usize>,
    payloads: Vec<Vec<u8>>,
    members: Vec<Vec<usize>>,
    xor_count: Vec<u32>,
    by_tx: Vec<Vec<usize>>,
    ripple: BTreeSet<usize>,
    received: usize,
    xor_ops: u64,
    rejected: Vec<(usize, TxId)>,
}

impl<'a> PeelingDecoder<'a> {
    pub fn new(spec: &'a SegmentSpec) -> Self {
        Self {
            spec,
            index: spec.tx_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect(),
            decoded: vec![None; spec.k],
            n_decoded: 0,
            order: Vec::new(),
            payloads: Vec::new(),
            members: Vec::new(),
            xor_count: Vec::new(),
            by_tx: vec![Vec::new(); spec.k],
            ripple: BTreeSet::new(),
            received: 0,
            xor_ops: 0,
            rejected: Vec::new(),
        }
    }

    pub fn received(&self) -> usize {
        self.received
    }

    pub fn decoded_count(&self) -> usize {
        self.n_decoded
    }

    pub fn is_complete(&self) -> bool {
        self.n_decoded == self.spec.k
    }

    pub fn is_decoded(&self, position: usize) -> bool {
        self.decoded[position].is_some()
    }

    fn validate(&self, cw: &Codeword) -> Result<Vec<usize>, CodingError> {
        if cw.members.is_empty() {
            return Err(CodingError::EmptyCodeword);
        }
        if cw.members.len() > self.spec.k {
            return Err(CodingError::DegreeTooLarge {
                degree: cw.members.len(),
                k: self.spec.k,
            });
        }
        if cw.payload.len() != self.spec.payload_len {
            return Err(CodingError::PayloadLength {
                got: cw.payload.len(),
                expected: self.spec.payload_len,
            });
        }
        let mut positions = Vec::with_capacity(cw.members.len());
        for id in &cw.members {
            let p = *self.index.get(id).ok_or(CodingError::ForeignMember { id: *id })?;
            positions.push(p);
        }
        let mut sorted = positions.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CodingError::DuplicateMember);
        }
        Ok(positions)
    }

    /// Feeds one codeword and peels as far as possible. Returns how many
    /// transactions became decoded.
    ///
    /// A codeword whose payload disagrees with the transaction ids is
    /// dropped and reported as `CorruptCodeword`; the decoder stays usable
    /// and keeps everything it had already verified.
    pub fn push(&mut self, cw: &Codeword) -> Result<usize, CodingError> {
        let positions = self.validate(cw)?;
        let slot = self.received;
        self.received += 1;
        let first_new = self.rejected.len();
        let before = self.n_decoded;
        if positions.iter().all(|&p| self.decoded[p].is_some()) {
            // nothing new; the payload must still be consistent
            let mut rest = cw.payload.clone();
            for &p in &positions {
                xor_into(&mut rest, self.decoded[p].as_deref().expect("decoded"));
            }
            if rest.iter().any(|&b| b != 0) {
                self.rejected.push((slot, self.spec.tx_ids[positions[0]]));
            }
            self.payloads.push(Vec::new());
            self.members.push(Vec::new());
            self.xor_count.push(0);
        } else {
            let mut payload = cw.payload.clone();
            let mut unresolved = Vec::with_capacity(positions.len());
            let mut xors = 0u32;
            for p in positions {
                match &self.decoded[p] {
                    Some(known) => {
                        xor_into(&mut payload, known);
                        xors += 1;
                    }
                    None => unresolved.push(p),
                }
            }
            self.xor_ops += xors as u64;
            for &p in &unresolved {
                self.by_tx[p].push(slot);
            }
            if unresolved.len() == 1 {
                self.ripple.insert(slot);
            }
            self.payloads.push(payload);
            self.members.push(unresolved);
            self.xor_count.push(xors);
            self.peel();
        }
        match self.rejected.get(first_new) {
            Some(&(codeword, tx)) => Err(CodingError::CorruptCodeword { codeword, tx }),
            None => Ok(self.n_decoded - before),
        }
    }

    fn drop_slot(&mut self, slot: usize, tx: TxId) {
        self.members[slot].clear();
        self.payloads[slot] = Vec::new();
        self.rejected.push((slot, tx));
    }

    fn peel(&mut self) {
        while let Some(slot) = self.ripple.pop_first() {
            if self.members[slot].len() != 1 {
                continue;
            }
            let tx = self.members[slot][0];
            let id = self.spec.tx_ids[tx];
            if !payload_matches(&self.payloads[slot], &id) {
                self.drop_slot(slot, id);
                continue;
            }
            let value = std::mem::take(&mut self.payloads[slot]);
            self.members[slot].clear();
            let holders = std::mem::take(&mut self.by_tx[tx]);
            for &other in &holders {
                if other == slot {
                    continue;
                }
                let m = &mut self.members[other];
                let Some(at) = m.iter().position(|&p| p == tx) else {
                    continue;
                };
                m.swap_remove(at);
                if m.is_empty() {
                    // fully explained by what is already known
                    if self.payloads[other] != value {
                        self.drop_slot(other, id);
                    } else {
                        self.payloads[other] = Vec::new();
                    }
                    continue;
                }
                xor_into(&mut self.payloads[other], &value);
                self.xor_count[other] += 1;
                self.xor_ops += 1;
                if m.len() == 1 {
                    self.ripple.insert(other);
                }
            }
            self.decoded[tx] = Some(value);
            self.n_decoded += 1;
            self.order.push(tx);
        }
    }

    /// Arrival indices of codewords dropped as corrupt, with the transaction
    /// they failed to reproduce.
    pub fn rejected(&self) -> &[(usize, TxId)] {
        &self.rejected
    }

    pub fn outcome(&self) -> DecodeOutcome {
        let mut decoded = BTreeMap::new();
        let mut undecoded = Vec::new();
        for (i, d) in self.decoded.iter().enumerate() {
            match d {
                Some(p) => {
                    decoded.insert(self.spec.tx_ids[i], p.clone());
                }
                None => undecoded.push(self.spec.tx_ids[i]),
            }
        }
        DecodeOutcome {
            decoded,
            undecoded,
            order: self.order.clone(),
            xor_ops: self.xor_ops,
            max_xor_per_codeword: self.xor_count.iter().copied().max().unwrap_or(0),
        }
    }
}

/// Batch peeling over a fixed codeword list.
pub fn peel_decode(spec: &SegmentSpec, codewords: &[Codeword]) -> Result<DecodeOutcome, CodingError> {
    let mut dec = PeelingDecoder::new(spec);
    for cw in codewords {
        dec.push(cw)?;
    }
    Ok(dec.outcome())
}
