//! Fibonacci-style linear feedback shift register.
//!
//! The register holds stages `s1..sn`, loaded from the seed in big-endian
//! order (`s1` takes the most significant seed bit). Each step emits `sn`,
//! computes the feedback as the XOR of the tapped stages of the pre-shift
//! state, shifts every stage one position toward `sn`, and loads the feedback
//! into `s1`. A consequence used by the recovery path: the first
//! `register_length` output bits are exactly the seed reversed.
//!
//! The generator is linear over XOR, and the all-zero seed is a fixed point
//! producing the all-zero signal.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Register length plus the tap positions that feed back into stage 1.
///
/// Tap positions are one-based stage indices. The set must be non-empty and
/// every tap must lie in `1..=register_length`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LfsrKey {
    register_length: usize,
    taps: BTreeSet<usize>,
}

impl LfsrKey {
    pub fn new(register_length: usize, taps: impl IntoIterator<Item = usize>) -> Result<Self> {
        if register_length < 2 {
            return Err(Error::invalid(format!(
                "register length must be at least 2, got {register_length}"
            )));
        }
        let taps: BTreeSet<usize> = taps.into_iter().collect();
        if taps.is_empty() {
            return Err(Error::invalid("tap set must not be empty"));
        }
        if let Some(&bad) = taps.iter().find(|&&t| t == 0 || t > register_length) {
            return Err(Error::invalid(format!(
                "tap {bad} is outside stages 1..={register_length}"
            )));
        }
        Ok(LfsrKey {
            register_length,
            taps,
        })
    }

    pub fn register_length(&self) -> usize {
        self.register_length
    }

    pub fn taps(&self) -> impl Iterator<Item = usize> + '_ {
        self.taps.iter().copied()
    }
}

/// Runs the register for `count` steps and returns the emitted bits.
/// The seed width must equal the key's register length.
pub fn generate(seed: &BitString, key: &LfsrKey, count: usize) -> Result<BitString> {
    if seed.len() != key.register_length() {
        return Err(Error::invalid(format!(
            "seed has {} bits but the register holds {}",
            seed.len(),
            key.register_length()
        )));
    }
    if count == 0 {
        return Err(Error::invalid("output length must be positive"));
    }

    let n = key.register_length();
    let mut state: Vec<u8> = seed.as_slice().to_vec();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(state[n - 1]);
        let feedback = key.taps().fold(0u8, |acc, t| acc ^ state[t - 1]);
        for i in (1..n).rev() {
            state[i] = state[i - 1];
        }
        state[0] = feedback;
    }
    BitString::new(out)
}

/// Recovers the seed from a signal produced by [`generate`].
///
/// The first `register_length` signal bits are the seed reversed. The whole
/// signal is then regenerated from the candidate seed; any mismatch means the
/// signal was not produced by this key and is reported as tampering.
pub fn recover_seed(signal: &BitString, key: &LfsrKey) -> Result<BitString> {
    let n = key.register_length();
    if signal.len() < n {
        return Err(Error::invalid(format!(
            "signal has {} bits, need at least {n} to recover a seed",
            signal.len()
        )));
    }
    let head = BitString::new(signal.as_slice()[..n].to_vec())?;
    let seed = head.reversed();
    let regenerated = generate(&seed, key, signal.len())?;
    if &regenerated != signal {
        return Err(Error::tampered(
            "signal does not regenerate from its recovered seed",
        ));
    }
    Ok(seed)
}
