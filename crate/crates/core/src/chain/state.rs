use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::types::ownership_token;
use super::{hash_header, Block, ChainError, Hash32, OutPoint, Transaction, TxId, TxOutput, BLOCK_REWARD};

/// Why a transaction failed verification. Checks run in declaration order
/// (after the structural `Malformed` check) and the first failure wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    Malformed,
    AlreadyProcessed,
    BadAddress,
    BadOwner,
    NotUtxo,
    Overspend,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Malformed => "malformed",
            Self::AlreadyProcessed => "already_processed",
            Self::BadAddress => "bad_address",
            Self::BadOwner => "bad_owner",
            Self::NotUtxo => "not_utxo",
            Self::Overspend => "overspend",
        };
        f.write_str(s)
    }
}

/// UTXO set plus processed ids and the position of the next transaction.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChainState {
    utxos: BTreeMap<OutPoint, TxOutput>,
    processed: BTreeSet<TxId>,
    tip: Option<(u64, Hash32)>,
    next_tx_index: u32,
}

impl ChainState {
    pub fn genesis() -> Self {
        Self::default()
    }

    pub fn utxos(&self) -> &BTreeMap<OutPoint, TxOutput> {
        &self.utxos
    }

    pub fn processed(&self) -> &BTreeSet<TxId> {
        &self.processed
    }

    pub fn is_processed(&self, id: &TxId) -> bool {
        self.processed.contains(id)
    }

    pub fn utxo(&self, at: &OutPoint) -> Option<&TxOutput> {
        self.utxos.get(at)
    }

    /// Height of the last applied block.
    pub fn height(&self) -> Option<u64> {
        self.tip.map(|(h, _)| h)
    }

    pub fn tip_hash(&self) -> Hash32 {
        self.tip.map(|(_, h)| h).unwrap_or(Hash32::ZERO)
    }

    /// Height at which the next transaction's outputs will be confirmed.
    pub fn pending_height(&self) -> u64 {
        self.tip.map(|(h, _)| h + 1).unwrap_or(0)
    }

    pub(crate) fn verify(&self, t: &Transaction) -> Result<(), RejectReason> {
        if t.is_coinbase() || !t.is_well_formed() {
            return Err(RejectReason::Malformed);
        }
        let here = self.pending_height();
        if t
            .inputs
            .iter()
            .any(|i| i.prev.height == here && i.prev.tx_index >= self.next_tx_index)
        {
            // would reference its own (or a later) position
            return Err(RejectReason::Malformed);
        }
        if self.processed.contains(&t.id()) {
            return Err(RejectReason::AlreadyProcessed);
        }
        let addrs_ok = t.inputs.iter().map(|i| &i.owner).chain(t.outputs.iter().map(|o| &o.owner));
        if !addrs_ok.into_iter().all(|a| a.is_well_formed()) {
            return Err(RejectReason::BadAddress);
        }
        let digest = t.signing_digest();
        for i in &t.inputs {
            if i.auth != ownership_token(&i.owner, &digest) {
                return Err(RejectReason::BadOwner);
            }
            if self.utxos.get(&i.prev).is_some_and(|o| o.owner != i.owner) {
                return Err(RejectReason::BadOwner);
            }
        }
        let mut total_in: u128 = 0;
        for i in &t.inputs {
            match self.utxos.get(&i.prev) {
                Some(o) => total_in += o.value as u128,
                None => return Err(RejectReason::NotUtxo),
            }
        }
        if total_in < t.total_out() {
            return Err(RejectReason::Overspend);
        }
        Ok(())
    }

    fn insert_outputs(&mut self, t: &Transaction) {
        let height = self.pending_height();
        for (k, o) in t.outputs.iter().enumerate() {
            self.utxos
                .insert(OutPoint::new(height, self.next_tx_index, k as u32), *o);
        }
        self.processed.insert(t.id());
        self.next_tx_index += 1;
    }

    /// In-place transaction application; verifies first.
    pub fn apply_transaction_mut(&mut self, t: &Transaction) -> Result<(), ChainError> {
        self.verify(t).map_err(|reason| ChainError::InvalidTransition { index: None, reason })?;
        for i in &t.inputs {
            self.utxos.remove(&i.prev);
        }
        self.insert_outputs(t);
        Ok(())
    }

    /// In-place block application. On error the state is left unchanged.
    pub fn apply_block_mut(&mut self, b: &Block) -> Result<(), ChainError> {
        let height = b.header.height;
        if height != self.pending_height() || b.header.prev_hash != self.tip_hash() {
            return Err(ChainError::BadChain { height });
        }
        if b.body.is_empty() {
            return Err(ChainError::EmptyBody);
        }
        if !b.commitment_holds() {
            return Err(ChainError::BadMerkle { height });
        }
        let mut next = self.clone();
        next.next_tx_index = 0;
        for (index, t) in b.body.iter().enumerate() {
            let fail = |reason| ChainError::InvalidTransition {
                index: Some(index),
                reason,
            };
            if index == 0 {
                let coinbase_ok = t.is_coinbase()
                    && t.nonce == height
                    && !t.outputs.is_empty()
                    && t.total_out() == BLOCK_REWARD as u128;
                if !coinbase_ok {
                    return Err(fail(RejectReason::Malformed));
                }
                if next.processed.contains(&t.id()) {
                    return Err(fail(RejectReason::AlreadyProcessed));
                }
                if !t.outputs.iter().all(|o| o.owner.is_well_formed()) {
                    return Err(fail(RejectReason::BadAddress));
                }
                next.insert_outputs(t);
            } else {
                next.verify(t).map_err(fail)?;
                for i in &t.inputs {
                    next.utxos.remove(&i.prev);
                }
                next.insert_outputs(t);
            }
        }
        // finalization: header checks passed and every transaction validated
        next.tip = Some((height, hash_header(&b.header)));
        next.next_tx_index = 0;
        *self = next;
        Ok(())
    }
}

/// Algorithm-1 style verification against a full-chain state.
pub fn verify_transaction_full(state: &ChainState, t: &Transaction) -> Result<(), RejectReason> {
    state.verify(t)
}

/// Returns the successor state; `state` is untouched.
pub fn apply_transaction(state: &ChainState, t: &Transaction) -> Result<ChainState, ChainError> {
    let mut next = state.clone();
    next.apply_transaction_mut(t)?;
    Ok(next)
}

pub fn apply_block(state: &ChainState, b: &Block) -> Result<ChainState, ChainError> {
    let mut next = state.clone();
    next.apply_block_mut(b)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Address, TxOutput};

    fn addr(n: u64) -> Address {
        Address::from_seed(n)
    }

    fn out(value: u64, owner: u64) -> TxOutput {
        TxOutput {
            value,
            owner: addr(owner),
        }
    }

    fn coinbase_block(prev: Option<&Block>, owner: u64, extra: Vec<Transaction>) -> Block {
        let height = prev.map(|b| b.header.height + 1).unwrap_or(0);
        let mut body = vec![Transaction::coinbase(height, addr(owner), BLOCK_REWARD)];
        body.extend(extra);
        Block::assemble(prev.map(|b| &b.header), height, body)
    }

    #[test]
    fn coinbase_only_genesis() {
        let g = coinbase_block(None, 1, vec![]);
        let s = apply_block(&ChainState::genesis(), &g).unwrap();
        assert_eq!(s.utxos().len(), 1);
        assert_eq!(s.height(), Some(0));
    }

    #[test]
    fn happy_path_and_resubmission() {
        let g = coinbase_block(None, 1, vec![]);
        let s = apply_block(&ChainState::genesis(), &g).unwrap();
        let t = Transaction::spend(1, &[(OutPoint::new(0, 0, 0), addr(1))], vec![out(100, 2)]);
        assert_eq!(verify_transaction_full(&s, &t), Ok(()));
        let s2 = apply_transaction(&s, &t).unwrap();
        assert_eq!(verify_transaction_full(&s2, &t), Err(RejectReason::AlreadyProcessed));
        // original state is unchanged
        assert_eq!(verify_transaction_full(&s, &t), Ok(()));
    }

    #[test]
    fn spent_in_earlier_block_is_not_utxo() {
        let g = coinbase_block(None, 1, vec![]);
        let spend = Transaction::spend(1, &[(OutPoint::new(0, 0, 0), addr(1))], vec![out(10, 2)]);
        let b1 = coinbase_block(Some(&g), 3, vec![spend]);
        let b2 = coinbase_block(Some(&b1), 3, vec![]);
        let mut s = ChainState::genesis();
        for b in [&g, &b1, &b2] {
            s.apply_block_mut(b).unwrap();
        }
        let again = Transaction::spend(2, &[(OutPoint::new(0, 0, 0), addr(1))], vec![out(10, 4)]);
        assert_eq!(verify_transaction_full(&s, &again), Err(RejectReason::NotUtxo));
    }

    #[test]
    fn two_inputs_three_outputs_net_plus_one() {
        let g = coinbase_block(None, 1, vec![]);
        let b1 = coinbase_block(Some(&g), 1, vec![]);
        let mut s = ChainState::genesis();
        s.apply_block_mut(&g).unwrap();
        s.apply_block_mut(&b1).unwrap();
        let t = Transaction::spend(
            5,
            &[(OutPoint::new(0, 0, 0), addr(1)), (OutPoint::new(1, 0, 0), addr(1))],
            vec![out(1, 2), out(2, 3), out(3, 4)],
        );
        let before = s.utxos().len();
        let after = apply_transaction(&s, &t).unwrap();
        assert_eq!(after.utxos().len(), before + 1);
    }

    #[test]
    fn intra_block_spend_sees_earlier_tx() {
        let g = coinbase_block(None, 1, vec![]);
        let a = Transaction::spend(1, &[(OutPoint::new(0, 0, 0), addr(1))], vec![out(20, 2)]);
        // spends output 0 of tx index 1 in the same block
        let b = Transaction::spend(2, &[(OutPoint::new(1, 1, 0), addr(2))], vec![out(20, 3)]);
        let b1 = coinbase_block(Some(&g), 9, vec![a, b]);
        let s = apply_block(&apply_block(&ChainState::genesis(), &g).unwrap(), &b1).unwrap();
        assert!(s.utxo(&OutPoint::new(1, 1, 0)).is_none());
        assert_eq!(s.utxo(&OutPoint::new(1, 2, 0)).unwrap().value, 20);
    }

    #[test]
    fn forward_reference_inside_block_is_malformed() {
        let g = coinbase_block(None, 1, vec![]);
        let selfref = Transaction::spend(1, &[(OutPoint::new(1, 1, 0), addr(1))], vec![out(1, 2)]);
        let b1 = coinbase_block(Some(&g), 9, vec![selfref]);
        let s = apply_block(&ChainState::genesis(), &g).unwrap();
        assert_eq!(
            apply_block(&s, &b1),
            Err(ChainError::InvalidTransition {
                index: Some(1),
                reason: RejectReason::Malformed
            })
        );
    }

    #[test]
    fn tampered_merkle_root() {
        let mut g = coinbase_block(None, 1, vec![]);
        g.header.merkle_root.0[0] ^= 1;
        assert_eq!(
            apply_block(&ChainState::genesis(), &g),
            Err(ChainError::BadMerkle { height: 0 })
        );
    }

    #[test]
    fn broken_hash_chain() {
        let g = coinbase_block(None, 1, vec![]);
        let mut b1 = coinbase_block(Some(&g), 1, vec![]);
        b1.header.prev_hash.0[31] ^= 1;
        let s = apply_block(&ChainState::genesis(), &g).unwrap();
        assert_eq!(apply_block(&s, &b1), Err(ChainError::BadChain { height: 1 }));
    }

    #[test]
    fn rejects_in_algorithm_order() {
        let g = coinbase_block(None, 1, vec![]);
        let s = apply_block(&ChainState::genesis(), &g).unwrap();
        let mut bad_addr = addr(2);
        bad_addr.0[0] ^= 1;
        // unknown input, bad address, bad token and overspend all at once
        let mut t = Transaction::spend(
            1,
            &[(OutPoint::new(7, 0, 0), addr(1))],
            vec![TxOutput {
                value: u64::MAX,
                owner: bad_addr,
            }],
        );
        t.inputs[0].auth.0[0] ^= 1;
        assert_eq!(verify_transaction_full(&s, &t), Err(RejectReason::BadAddress));
        t.outputs[0].owner = addr(2);
        assert_eq!(verify_transaction_full(&s, &t), Err(RejectReason::BadOwner));
        t.authorize();
        assert_eq!(verify_transaction_full(&s, &t), Err(RejectReason::NotUtxo));
        t.inputs[0].prev = OutPoint::new(0, 0, 0);
        t.authorize();
        assert_eq!(verify_transaction_full(&s, &t), Err(RejectReason::Overspend));
        t.outputs[0].value = BLOCK_REWARD;
        t.authorize();
        assert_eq!(verify_transaction_full(&s, &t), Ok(()));
    }

    #[test]
    fn wrong_owner_of_known_utxo() {
        let g = coinbase_block(None, 1, vec![]);
        let s = apply_block(&ChainState::genesis(), &g).unwrap();
        let t = Transaction::spend(1, &[(OutPoint::new(0, 0, 0), addr(5))], vec![out(1, 2)]);
        assert_eq!(verify_transaction_full(&s, &t), Err(RejectReason::BadOwner));
    }

    #[test]
    fn malformed_shapes() {
        let s = ChainState::genesis();
        let cb = Transaction::coinbase(0, addr(1), 5);
        assert_eq!(verify_transaction_full(&s, &cb), Err(RejectReason::Malformed));
        let dup = Transaction::spend(
            1,
            &[(OutPoint::new(0, 0, 0), addr(1)), (OutPoint::new(0, 0, 0), addr(1))],
            vec![out(1, 2)],
        );
        assert_eq!(verify_transaction_full(&s, &dup), Err(RejectReason::Malformed));
        let no_out = Transaction::spend(1, &[(OutPoint::new(0, 0, 0), addr(1))], vec![]);
        assert_eq!(verify_transaction_full(&s, &no_out), Err(RejectReason::Malformed));
    }

    #[test]
    fn rejecting_transaction_is_invalid_transition() {
        let s = apply_block(&ChainState::genesis(), &coinbase_block(None, 1, vec![])).unwrap();
        let t = Transaction::spend(1, &[(OutPoint::new(0, 0, 5), addr(1))], vec![out(1, 2)]);
        assert!(matches!(
            apply_transaction(&s, &t),
            Err(ChainError::InvalidTransition {
                index: None,
                reason: RejectReason::NotUtxo
            })
        ));
    }

    #[test]
    fn bad_coinbase_reward() {
        let mut body = vec![Transaction::coinbase(0, addr(1), BLOCK_REWARD + 1)];
        body[0].nonce = 0;
        let g = Block::assemble(None, 0, body);
        assert!(matches!(
            apply_block(&ChainState::genesis(), &g),
            Err(ChainError::InvalidTransition { index: Some(0), .. })
        ));
    }
}
