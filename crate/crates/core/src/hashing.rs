//! Seeded pairwise-independent hashing into `m` bins.
//!
//! Functions come from the multilinear family over the Mersenne field
//! `p = 2^61 - 1`: a key is split into 32-bit limbs `x_1, x_2, ...` and hashed
//! as `(c_0 + sum_j c_j x_j) mod p mod m` with coefficients drawn uniformly
//! from the field. For a fixed pair of distinct keys the two field values are
//! independent and uniform, so collisions after the `mod m` reduction happen
//! with probability `1/m` up to an `m/p` rounding term.
//!
//! Bins are 1-indexed at the public surface (`eval`), matching the `[m]`
//! convention used for values; `index` gives the 0-based slot for table
//! storage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mersenne prime `2^61 - 1`.
pub const FIELD_PRIME: u64 = (1 << 61) - 1;

/// Limbs needed for any `u64` key.
const SCALAR_LIMBS: usize = 2;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed and a coordinate path.
///
/// Distinct paths give unrelated seeds, and the result depends only on the
/// path, never on the order in which seeds are requested.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = splitmix_finalize(master.wrapping_add(GOLDEN_GAMMA));
    for (depth, &coord) in path.iter().enumerate() {
        let salt = (depth as u64 + 1).wrapping_mul(GOLDEN_GAMMA);
        state = splitmix_finalize(state ^ splitmix_finalize(coord.wrapping_add(salt)));
    }
    state
}

#[inline]
fn reduce(x: u128) -> u64 {
    // x < 2^122 for every accumulator we build, so two folds suffice.
    let folded = (x as u64 & FIELD_PRIME) as u128 + (x >> 61);
    let mut s = (folded as u64 & FIELD_PRIME) + (folded >> 61) as u64;
    if s >= FIELD_PRIME {
        s -= FIELD_PRIME;
    }
    s
}

/// One hash function `N -> [m]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "HashFnRepr", into = "HashFnRepr")]
pub struct HashFn {
    seed: u64,
    bins: u64,
    /// `coeffs[0]` is the additive term, `coeffs[j]` multiplies limb `j - 1`.
    coeffs: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct HashFnRepr {
    seed: u64,
    bins: u64,
    limbs: usize,
}

impl TryFrom<HashFnRepr> for HashFn {
    type Error = Error;

    fn try_from(r: HashFnRepr) -> Result<Self> {
        HashFn::wide(r.seed, r.bins, r.limbs)
    }
}

impl From<HashFn> for HashFnRepr {
    fn from(h: HashFn) -> Self {
        HashFnRepr { seed: h.seed, bins: h.bins, limbs: h.limbs() }
    }
}

impl HashFn {
    /// Hash function over `u64` keys.
    pub fn new(seed: u64, bins: u64) -> Result<Self> {
        Self::wide(seed, bins, SCALAR_LIMBS)
    }

    /// Hash function over keys of up to `limbs` 32-bit limbs.
    ///
    /// Coefficients are drawn in order from one seeded stream, so a wide
    /// function agrees with [`HashFn::new`] on every `u64` key.
    pub fn wide(seed: u64, bins: u64, limbs: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::ZeroBins);
        }
        let limbs = limbs.max(SCALAR_LIMBS);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = (0..=limbs).map(|_| rng.random_range(0..FIELD_PRIME)).collect();
        Ok(HashFn { seed, bins, coeffs })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bins(&self) -> u64 {
        self.bins
    }

    pub fn limbs(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Bin of `key` in `1..=m`.
    pub fn eval(&self, key: u64) -> u64 {
        self.index(key) as u64 + 1
    }

    /// 0-based slot of `key`.
    #[inline]
    pub fn index(&self, key: u64) -> usize {
        let lo = key & 0xffff_ffff;
        let hi = key >> 32;
        let acc = self.coeffs[0] as u128
            + self.coeffs[1] as u128 * lo as u128
            + self.coeffs[2] as u128 * hi as u128;
        (reduce(acc) % self.bins) as usize
    }

    /// 0-based slot of a key given as little-endian 32-bit limbs.
    ///
    /// Trailing zero limbs do not change the result, so the same natural
    /// number hashes identically however it is padded.
    ///
    /// # Panics
    ///
    /// If `limbs` is longer than the width this function was built for.
    #[inline]
    pub fn index_limbs(&self, limbs: &[u32]) -> usize {
        assert!(
            limbs.len() <= self.limbs(),
            "key has {} limbs, hash function supports {}",
            limbs.len(),
            self.limbs()
        );
        // Each product is below 2^93; the sum stays far from u128 overflow.
        let acc = limbs
            .iter()
            .zip(&self.coeffs[1..])
            .fold(self.coeffs[0] as u128, |acc, (&x, &c)| acc + c as u128 * x as u128);
        (reduce(acc) % self.bins) as usize
    }
}

/// One hash function per model variable, all with the same bin count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashTuple {
    fns: Vec<HashFn>,
}

impl HashTuple {
    /// Derives `h_1..h_K` for replica `replica` from a master seed.
    pub fn derive(master: u64, replica: usize, variables: usize, bins: u64) -> Result<Self> {
        let fns = (0..variables)
            .map(|k| HashFn::new(derive_seed(master, &[replica as u64, k as u64]), bins))
            .collect::<Result<_>>()?;
        Ok(HashTuple { fns })
    }

    pub fn len(&self) -> usize {
        self.fns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fns.is_empty()
    }

    pub fn get(&self, k: usize) -> &HashFn {
        &self.fns[k]
    }

    pub fn iter(&self) -> impl Iterator<Item = &HashFn> {
        self.fns.iter()
    }
}

/// Encodes a (child, parent) value pair as `child + M (parent - 1)`, where
/// `M` is the child's cardinality. Injective over `[M] x N+`.
pub fn pair_key(child: u64, parent: u64, child_cardinality: u64) -> Result<u64> {
    if child == 0 || child > child_cardinality {
        return Err(Error::ValueOutOfRange { what: "child value", value: child, max: child_cardinality });
    }
    if parent == 0 {
        return Err(Error::ValueOutOfRange { what: "parent value", value: parent, max: u64::MAX });
    }
    child_cardinality
        .checked_mul(parent - 1)
        .and_then(|v| v.checked_add(child))
        .ok_or_else(|| Error::InvalidParameter(format!("pair key ({child}, {parent}) overflows u64")))
}
