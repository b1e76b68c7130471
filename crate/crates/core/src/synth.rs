//! Synthetic chains whose spending pattern follows a [`DurationModel`].

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::chain::{Address, Block, Chain, ChainError, OutPoint, Transaction, TxOutput, BLOCK_REWARD};
use crate::entropy::{sample_usage_depth, DurationModel, DurationSample};

const MAX_DRAWS_PER_TX: usize = 64;
const BLOCK_INTERVAL: u64 = 600;

#[derive(Debug, Clone)]
pub struct GeneratedChain {
    pub chain: Chain,
    /// Depth draws that landed on a block with nothing left to spend.
    pub retries: u64,
    /// Spends abandoned after too many retries.
    pub skipped: u64,
}

/// Builds `n_blocks` blocks. Every non-coinbase transaction spends one
/// output from a block at a depth drawn with [`sample_usage_depth`] and
/// splits it into two outputs.
pub fn generate_chain<R: Rng + ?Sized>(
    n_blocks: u64,
    txs_per_block: usize,
    model: &DurationModel,
    rng: &mut R,
) -> Result<GeneratedChain, ChainError> {
    let mut chain = Chain::new();
    let mut available: BTreeMap<u64, Vec<OutPoint>> = BTreeMap::new();
    let mut owner_seq = 0u64;
    let mut next_owner = || {
        owner_seq += 1;
        Address::from_seed(owner_seq)
    };
    let (mut retries, mut skipped) = (0u64, 0u64);

    for h in 0..n_blocks {
        let mut body = vec![Transaction::coinbase(h, next_owner(), BLOCK_REWARD)];
        if h > 0 {
            for n in 0..txs_per_block {
                let mut chosen = None;
                for _ in 0..MAX_DRAWS_PER_TX {
                    let depth = sample_usage_depth(model, h, rng);
                    let src = h - depth;
                    match available.get_mut(&src) {
                        Some(v) if !v.is_empty() => {
                            let i = rng.random_range(0..v.len());
                            chosen = Some(v.swap_remove(i));
                            break;
                        }
                        _ => retries += 1,
                    }
                }
                let Some(prev) = chosen else {
                    skipped += 1;
                    continue;
                };
                let src = chain.state().utxo(&prev).expect("tracked outpoint is unspent");
                let half = src.value / 2;
                let outputs = vec![
                    TxOutput {
                        value: half,
                        owner: next_owner(),
                    },
                    TxOutput {
                        value: src.value - half,
                        owner: next_owner(),
                    },
                ];
                body.push(Transaction::spend(
                    (h << 20) | n as u64,
                    &[(prev, src.owner)],
                    outputs,
                ));
            }
        }
        let created: Vec<OutPoint> = body
            .iter()
            .enumerate()
            .flat_map(|(ti, tx)| {
                (0..tx.outputs.len()).map(move |oi| OutPoint::new(h, ti as u32, oi as u32))
            })
            .collect();
        let block = Block::assemble(chain.tip(), h * BLOCK_INTERVAL, body);
        chain.push(block)?;
        available.insert(h, created);
    }
    Ok(GeneratedChain {
        chain,
        retries,
        skipped,
    })
}

/// State durations of every spend in the chain, in whole blocks elapsed
/// between the creating block and the block before the spend
/// (`spend height − creation height − 1`).
pub fn state_durations(chain: &Chain) -> Vec<DurationSample> {
    chain
        .blocks()
        .iter()
        .flat_map(|b| {
            let h = b.header.height;
            b.body.iter().flat_map(move |tx| {
                tx.inputs
                    .iter()
                    .filter(move |i| i.prev.height < h)
                    .map(move |i| DurationSample::new((h - i.prev.height - 1) as f64).expect("non-negative"))
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub txs: Vec<Transaction>,
    /// Depth (tip = 1) of the block holding each transaction's input.
    pub depths: Vec<u64>,
    pub retries: u64,
}

/// `n` single-input transactions, each valid against the chain tip, whose
/// input depths follow [`sample_usage_depth`] over the whole chain.
pub fn generate_workload<R: Rng + ?Sized>(
    chain: &Chain,
    model: &DurationModel,
    n: usize,
    rng: &mut R,
) -> Workload {
    let tip = chain.tip_height().expect("workload needs a non-empty chain");
    let state = chain.state();
    let mut by_height: BTreeMap<u64, Vec<OutPoint>> = BTreeMap::new();
    for op in state.utxos().keys() {
        by_height.entry(op.height).or_default().push(*op);
    }
    let mut txs = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    let mut retries = 0;
    while txs.len() < n {
        let depth = sample_usage_depth(model, tip + 1, rng);
        let Some(op) = by_height.get(&(tip + 1 - depth)).and_then(|v| v.choose(rng)) else {
            retries += 1;
            continue;
        };
        let src = state.utxo(op).expect("indexed from state");
        let tx = Transaction::spend(
            (1 << 62) | txs.len() as u64,
            &[(*op, src.owner)],
            vec![TxOutput {
                value: src.value,
                owner: Address::from_seed(u64::MAX - txs.len() as u64),
            }],
        );
        txs.push(tx);
        depths.push(depth);
    }
    Workload { txs, depths, retries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::verify_transaction_full;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_block_is_genesis_coinbase() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = generate_chain(1, 10, &DurationModel::BITCOIN, &mut rng).unwrap();
        assert_eq!(g.chain.len(), 1);
        assert_eq!(g.chain.blocks()[0].body.len(), 1);
        assert!(g.chain.blocks()[0].body[0].is_coinbase());
    }

    #[test]
    fn same_seed_same_bytes() {
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_chain(40, 5, &DurationModel::BITCOIN, &mut rng).unwrap().chain.to_bytes()
        };
        assert_eq!(gen(9), gen(9));
        assert_ne!(gen(9), gen(10));
    }

    #[test]
    fn workload_is_valid_against_tip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = generate_chain(60, 6, &DurationModel::BITCOIN, &mut rng).unwrap();
        let w = generate_workload(&g.chain, &DurationModel::BITCOIN, 200, &mut rng);
        assert_eq!(w.txs.len(), 200);
        for tx in &w.txs {
            assert_eq!(verify_transaction_full(g.chain.state(), tx), Ok(()));
        }
        assert!(w.depths.iter().all(|&d| (1..=60).contains(&d)));
    }

    #[test]
    fn durations_are_non_negative_and_counted() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = generate_chain(50, 4, &DurationModel::BITCOIN, &mut rng).unwrap();
        let spends: usize = g.chain.blocks().iter().map(|b| b.body.len() - 1).sum();
        assert_eq!(state_durations(&g.chain).len(), spends);
    }
}
