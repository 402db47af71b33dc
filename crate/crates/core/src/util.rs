//! Small shared helpers: integrity digest and seed derivation.

/// FNV-1a 64-bit digest. Integrity check for checkpoints, not cryptography.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a list of stream coordinates
/// (replicate index, model index, purpose tag, ...). Stable across runs.
pub fn derive_seed(master: u64, coords: &[u64]) -> u64 {
    let mut x = splitmix64(master);
    for &c in coords {
        x = splitmix64(x ^ c.wrapping_mul(0xd1342543de82ef95).wrapping_add(1));
    }
    x
}
