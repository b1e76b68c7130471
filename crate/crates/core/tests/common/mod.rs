#![allow(dead_code)]

use std::collections::BTreeMap;

use chainsample::chain::{Address, Block, Chain, OutPoint, Transaction, TxOutput, BLOCK_REWARD};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid chain with multi-input spends and spends of outputs created
/// earlier in the same block. Built independently of the library's synthetic
/// generator.
pub fn random_chain(seed: u64, blocks: u64) -> Chain {
    let mut r = rng(seed);
    let mut chain = Chain::new();
    // outpoint -> (value, owner), tracked by hand
    let mut live: BTreeMap<OutPoint, (u64, Address)> = BTreeMap::new();
    let mut owner = 0u64;
    let fresh = |owner: &mut u64| {
        *owner += 1;
        Address::from_seed(seed.wrapping_mul(1_000_003).wrapping_add(*owner))
    };
    for h in 0..blocks {
        let mut body = vec![Transaction::coinbase(h, fresh(&mut owner), BLOCK_REWARD)];
        live.insert(OutPoint::new(h, 0, 0), (BLOCK_REWARD, body[0].outputs[0].owner));
        let n_tx = r.random_range(0..5);
        for n in 0..n_tx {
            let keys: Vec<OutPoint> = live.keys().copied().collect();
            if keys.is_empty() {
                break;
            }
            let n_in = r.random_range(1..=3.min(keys.len()));
            let picks: Vec<OutPoint> = keys.choose_multiple(&mut r, n_in).copied().collect();
            let total: u64 = picks.iter().map(|p| live[p].0).sum();
            let inputs: Vec<(OutPoint, Address)> = picks.iter().map(|p| (*p, live[p].1)).collect();
            let n_out = r.random_range(1..=3u64);
            let mut outputs = Vec::new();
            let mut left = total;
            for i in 0..n_out {
                let v = if i + 1 == n_out { left } else { r.random_range(0..=left) };
                left -= v;
                outputs.push(TxOutput {
                    value: v,
                    owner: fresh(&mut owner),
                });
            }
            let tx = Transaction::spend((h << 16) | n as u64 | 1 << 40, &inputs, outputs);
            for p in &picks {
                live.remove(p);
            }
            let ti = body.len() as u32;
            for (oi, o) in tx.outputs.iter().enumerate() {
                live.insert(OutPoint::new(h, ti, oi as u32), (o.value, o.owner));
            }
            body.push(tx);
        }
        let block = Block::assemble(chain.tip(), h * 600, body);
        chain.push(block).expect("generator builds valid blocks");
    }
    chain
}

pub fn flip_bit(bytes: &mut [u8], bit: usize) {
    bytes[bit / 8] ^= 1 << (bit % 8);
}

use chainsample::chain::{derive_suffix_utxos, ChainState};
use chainsample::coding::{gauss_decode_oracle, peel_decode, Codeword, Segment};
use rand::seq::index::sample;
use std::collections::BTreeSet;

/// Checks suffix classification against full replay and the suffix pool
/// against the tip UTXO set at every split point. Returns
/// `(candidates checked, counterexamples)`.
pub fn suffix_counterexamples(chain: &Chain) -> (usize, usize) {
    let tip: BTreeSet<OutPoint> = chain.state().utxos().keys().copied().collect();
    let (mut checked, mut bad) = (0, 0);
    let mut before = ChainState::genesis();
    for k in 0..chain.len() as u64 {
        before.apply_block_mut(chain.block(k).unwrap()).unwrap();
        let suffix = &chain.blocks()[k as usize + 1..];
        let candidates: Vec<OutPoint> = before.utxos().keys().copied().collect();
        let cls = derive_suffix_utxos(suffix, &candidates).unwrap();
        for c in &candidates {
            checked += 1;
            if cls.unspent.contains(c) != tip.contains(c) || cls.spent.contains(c) == tip.contains(c) {
                bad += 1;
            }
        }
        for (op, o) in &cls.pool {
            checked += 1;
            if chain.state().utxo(op) != Some(o) {
                bad += 1;
            }
        }
        let expect: BTreeSet<OutPoint> = tip.iter().copied().filter(|o| o.height > k).collect();
        if cls.pool.keys().copied().collect::<BTreeSet<_>>() != expect {
            bad += 1;
        }
    }
    (checked, bad)
}

/// Codewords over random subsets, degrees skewed low so that peeling
/// sometimes succeeds.
pub fn random_instance(seg: &Segment, n: usize, seed: u64) -> Vec<Codeword> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            let d = if r.random_bool(0.35) { 1 } else { r.random_range(1..=seg.k().min(4)) };
            let pos = sample(&mut r, seg.k(), d).into_vec();
            seg.codeword_for(&pos)
        })
        .collect()
}

/// Peeling against elimination on one instance: `Err` describes a
/// disagreement, `Ok((peel complete, elimination complete))` otherwise.
pub fn compare_decoders(seg: &Segment, cws: &[Codeword]) -> Result<(bool, bool), String> {
    let peel = peel_decode(&seg.spec, cws).map_err(|e| e.to_string())?;
    let gauss = gauss_decode_oracle(&seg.spec, cws).map_err(|e| e.to_string())?;
    for (id, payload) in &peel.decoded {
        if gauss.decoded.get(id) != Some(payload) {
            return Err(format!("peeled {} not matched by elimination", id.to_hex()));
        }
    }
    if peel.complete() && (!gauss.complete() || peel.decoded != gauss.decoded) {
        return Err("peeling complete, elimination not".into());
    }
    Ok((peel.complete(), gauss.complete()))
}
