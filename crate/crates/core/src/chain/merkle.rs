use super::{sha256, ChainError, Hash32};

/// Binary Merkle root over an ordered id list.
///
/// Odd layers duplicate their last element. A single leaf is its own root.
pub fn merkle_root(ids: &[Hash32]) -> Result<Hash32, ChainError> {
    if ids.is_empty() {
        return Err(ChainError::EmptyBody);
    }
    let mut layer = ids.to_vec();
    while layer.len() > 1 {
        layer = layer
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                sha256(&[&pair[0].0, &right.0])
            })
            .collect();
    }
    Ok(layer[0])
}
