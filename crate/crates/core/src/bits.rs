//! Fixed-width binary strings and the grouping operations the watermark
//! pipeline is built on.
//!
//! Bit strings are ordered most significant bit first. `encode_value(120, 8)`
//! yields `01111000` and `decode_bits` reverses it; `partition` splits a
//! string into equally sized groups without reordering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Non-empty sequence of bits, most significant first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    /// Builds a bit string from raw bits. Every element must be 0 or 1 and
    /// the sequence must be non-empty.
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::invalid("bit string must not be empty"));
        }
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::invalid(format!("bit value {bad} is not 0 or 1")));
        }
        Ok(BitString { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    /// Always false: empty bit strings are unrepresentable.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Bit at zero-based position, counting from the most significant end.
    pub fn bit(&self, index: usize) -> u8 {
        self.bits[index]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        self.bits.iter().copied()
    }

    /// Reverses bit order; the register recovery path reads seeds this way.
    pub fn reversed(&self) -> BitString {
        let mut bits = self.bits.clone();
        bits.reverse();
        BitString { bits }
    }

    /// Bitwise XOR of two equal-length strings.
    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len() != other.len() {
            return Err(Error::invalid(format!(
                "xor needs equal lengths, got {} and {}",
                self.len(),
                other.len()
            )));
        }
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitString { bits })
    }

    /// Concatenates groups back into one string.
    pub fn concat(groups: &[BitString]) -> Result<BitString> {
        let bits: Vec<u8> = groups.iter().flat_map(|g| g.iter()).collect();
        BitString::new(bits)
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({self})")
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::invalid(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        BitString::new(bits)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Encodes a non-negative integer as a fixed-width big-endian bit string.
pub fn encode_value(value: u64, width: usize) -> Result<BitString> {
    if width == 0 || width > 64 {
        return Err(Error::invalid(format!(
            "bit width must be in 1..=64, got {width}"
        )));
    }
    if width < 64 && value >> width != 0 {
        return Err(Error::ValueOutOfRange { value, width });
    }
    let bits = (0..width).rev().map(|i| ((value >> i) & 1) as u8).collect();
    BitString::new(bits)
}

/// Decodes a big-endian bit string back into an integer.
pub fn decode_bits(bits: &BitString) -> Result<u64> {
    if bits.len() > 64 {
        return Err(Error::invalid(format!(
            "cannot decode {} bits into a 64-bit value",
            bits.len()
        )));
    }
    Ok(bits.iter().fold(0u64, |acc, b| (acc << 1) | u64::from(b)))
}

/// Splits a bit string into consecutive groups of `group` bits.
/// The total length must divide evenly.
pub fn partition(bits: &BitString, group: usize) -> Result<Vec<BitString>> {
    if group == 0 {
        return Err(Error::invalid("group size must be positive"));
    }
    if !bits.len().is_multiple_of(group) {
        return Err(Error::UnevenPartition {
            length: bits.len(),
            group,
        });
    }
    bits.as_slice()
        .chunks(group)
        .map(|chunk| BitString::new(chunk.to_vec()))
        .collect()
}
