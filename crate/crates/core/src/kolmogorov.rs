//! Kolmogorov numbering rule: one 28-bit register signal is read twice.
//!
//! Split into four 7-bit groups, bit position `i` (one-based, left to right)
//! of a group marks error variable `i` as a member of that group's constraint
//! selection. Split into seven 4-bit groups, each group decodes big-endian to
//! a weight factor in `0..=15` for the matching error variable. Both readings
//! are lossless, so the factors alone rebuild the signal.
//!
//! The seven error variables are ordered: timing error, then the three
//! anchor time-of-flight errors, then the three distance tolerances.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bits::{decode_bits, encode_value, partition, BitString};
use crate::error::{Error, Result};

/// Bits in a full register signal.
pub const SIGNAL_BITS: usize = 28;
/// Error variables addressed by the numbering rule.
pub const VARIABLE_COUNT: usize = 7;
/// Bits per constraint selection group.
pub const SELECTION_GROUP_BITS: usize = 7;
/// Constraint selections carried by one signal.
pub const SELECTION_COUNT: usize = SIGNAL_BITS / SELECTION_GROUP_BITS;
/// Bits per weight factor group.
pub const FACTOR_GROUP_BITS: usize = 4;
/// Weight factors carried by one signal.
pub const FACTOR_COUNT: usize = SIGNAL_BITS / FACTOR_GROUP_BITS;
/// Largest value a 4-bit factor group can hold.
pub const FACTOR_MAX: u8 = 15;

/// One-based index of an error variable, in `1..=7`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VariableIndex(u8);

impl VariableIndex {
    pub fn new(index: u8) -> Result<Self> {
        if index == 0 || index as usize > VARIABLE_COUNT {
            return Err(Error::invalid(format!(
                "variable index {index} is outside 1..={VARIABLE_COUNT}"
            )));
        }
        Ok(VariableIndex(index))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based offset into an error vector.
    pub fn offset(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn name(self) -> &'static str {
        match self.0 {
            1 => "eps_t",
            2 => "eps_da",
            3 => "eps_db",
            4 => "eps_dc",
            5 => "delta_1",
            6 => "delta_2",
            _ => "delta_3",
        }
    }
}

impl fmt::Debug for VariableIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VariableIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Set of error variables named by one 7-bit group.
///
/// An all-zero group selects nothing; such a selection still becomes a
/// constraint downstream, just a vacuous one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSelection {
    variables: BTreeSet<VariableIndex>,
    source_group: BitString,
}

impl ConstraintSelection {
    /// Reads membership from a 7-bit group: set bit `i` selects variable `i`.
    pub fn from_group(group: &BitString) -> Result<Self> {
        if group.len() != SELECTION_GROUP_BITS {
            return Err(Error::invalid(format!(
                "selection group must be {SELECTION_GROUP_BITS} bits, got {}",
                group.len()
            )));
        }
        let variables = group
            .iter()
            .enumerate()
            .filter(|&(_, bit)| bit == 1)
            .map(|(i, _)| VariableIndex::new(i as u8 + 1))
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(ConstraintSelection {
            variables,
            source_group: group.clone(),
        })
    }

    pub fn variables(&self) -> impl Iterator<Item = VariableIndex> + '_ {
        self.variables.iter().copied()
    }

    pub fn contains(&self, index: VariableIndex) -> bool {
        self.variables.contains(&index)
    }

    pub fn is_vacuous(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn source_group(&self) -> &BitString {
        &self.source_group
    }

    /// Stable 7-bit mask form, used for ordering and equality of constraints.
    pub fn mask(&self) -> u8 {
        self.variables.iter().fold(0u8, |acc, v| {
            acc | 1 << (SELECTION_GROUP_BITS - usize::from(v.get()))
        })
    }
}

/// Full payload carried by one signal: the signal itself plus both readings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatermarkPayload {
    pub signal: BitString,
    pub selections: Vec<ConstraintSelection>,
    pub weight_factors: Vec<u8>,
}

impl WatermarkPayload {
    pub fn from_signal(signal: &BitString) -> Result<Self> {
        Ok(WatermarkPayload {
            signal: signal.clone(),
            selections: constraint_selections(signal)?,
            weight_factors: weight_factors(signal)?,
        })
    }
}

fn check_signal_length(signal: &BitString) -> Result<()> {
    if signal.len() != SIGNAL_BITS {
        return Err(Error::invalid(format!(
            "signal must be {SIGNAL_BITS} bits, got {}",
            signal.len()
        )));
    }
    Ok(())
}

/// Derives the four constraint selections of a 28-bit signal.
pub fn constraint_selections(signal: &BitString) -> Result<Vec<ConstraintSelection>> {
    check_signal_length(signal)?;
    partition(signal, SELECTION_GROUP_BITS)?
        .iter()
        .map(ConstraintSelection::from_group)
        .collect()
}

/// Derives the seven weight factors of a 28-bit signal.
pub fn weight_factors(signal: &BitString) -> Result<Vec<u8>> {
    check_signal_length(signal)?;
    partition(signal, FACTOR_GROUP_BITS)?
        .iter()
        .map(|group| decode_bits(group).map(|v| v as u8))
        .collect()
}

/// Rebuilds the signal from seven weight factors; inverse of [`weight_factors`].
pub fn factors_to_signal(factors: &[u8]) -> Result<BitString> {
    if factors.len() != FACTOR_COUNT {
        return Err(Error::invalid(format!(
            "expected {FACTOR_COUNT} weight factors, got {}",
            factors.len()
        )));
    }
    let groups = factors
        .iter()
        .map(|&f| {
            if f > FACTOR_MAX {
                return Err(Error::ValueOutOfRange {
                    value: u64::from(f),
                    width: FACTOR_GROUP_BITS,
                });
            }
            encode_value(u64::from(f), FACTOR_GROUP_BITS)
        })
        .collect::<Result<Vec<_>>>()?;
    BitString::concat(&groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn reference_signal() -> BitString {
        "0001111000001101110011000111".parse().unwrap()
    }

    fn selection_sets(signal: &BitString) -> Vec<Vec<u8>> {
        constraint_selections(signal)
            .unwrap()
            .iter()
            .map(|sel| sel.variables().map(VariableIndex::get).collect())
            .collect()
    }

    #[test]
    fn derives_reference_selections() {
        assert_eq!(
            selection_sets(&reference_signal()),
            vec![
                vec![4, 5, 6, 7],
                vec![6, 7],
                vec![2, 3, 4, 7],
                vec![1, 5, 6, 7]
            ]
        );
    }

    #[test]
    fn derives_reference_factors() {
        assert_eq!(
            weight_factors(&reference_signal()).unwrap(),
            vec![1, 14, 0, 13, 12, 12, 7]
        );
    }

    #[test]
    fn all_ones_signal_selects_everything() {
        let signal = BitString::new(vec![1; SIGNAL_BITS]).unwrap();
        assert_eq!(
            selection_sets(&signal),
            vec![vec![1, 2, 3, 4, 5, 6, 7]; SELECTION_COUNT]
        );
        assert_eq!(weight_factors(&signal).unwrap(), vec![15; FACTOR_COUNT]);
    }

    #[test]
    fn all_zero_signal_is_vacuous_everywhere() {
        let signal = BitString::new(vec![0; SIGNAL_BITS]).unwrap();
        let selections = constraint_selections(&signal).unwrap();
        assert!(selections.iter().all(ConstraintSelection::is_vacuous));
        assert_eq!(weight_factors(&signal).unwrap(), vec![0; FACTOR_COUNT]);
    }

    #[test]
    fn rejects_wrong_signal_length() {
        let short = BitString::new(vec![1; 27]).unwrap();
        assert!(constraint_selections(&short).is_err());
        assert!(weight_factors(&short).is_err());
    }

    #[test]
    fn factors_rebuild_signal() {
        let rebuilt = factors_to_signal(&[1, 14, 0, 13, 12, 12, 7]).unwrap();
        assert_eq!(rebuilt, reference_signal());
    }

    #[test]
    fn rejects_out_of_range_factor() {
        assert!(factors_to_signal(&[16, 0, 0, 0, 0, 0, 0]).is_err());
        assert!(factors_to_signal(&[1, 2, 3]).is_err());
    }

    #[test]
    fn variable_indices_are_bounded() {
        assert!(VariableIndex::new(0).is_err());
        assert!(VariableIndex::new(8).is_err());
        assert_eq!(VariableIndex::new(5).unwrap().name(), "delta_1");
    }

    proptest! {
        #[test]
        fn factor_reading_round_trips(raw in prop::collection::vec(0u8..=15, FACTOR_COUNT)) {
            let signal = factors_to_signal(&raw).unwrap();
            prop_assert_eq!(weight_factors(&signal).unwrap(), raw);
        }

        #[test]
        fn signal_round_trips_through_factors(bits in prop::collection::vec(any::<bool>(), SIGNAL_BITS)) {
            let signal = BitString::new(bits.iter().map(|&b| b as u8).collect()).unwrap();
            let rebuilt = factors_to_signal(&weight_factors(&signal).unwrap()).unwrap();
            prop_assert_eq!(rebuilt, signal);
        }

        #[test]
        fn setting_a_bit_grows_the_selection(
            bits in prop::collection::vec(any::<bool>(), SIGNAL_BITS),
            flip in 0usize..SIGNAL_BITS,
        ) {
            let mut raw: Vec<u8> = bits.iter().map(|&b| b as u8).collect();
            raw[flip] = 0;
            let base = BitString::new(raw.clone()).unwrap();
            raw[flip] = 1;
            let grown = BitString::new(raw).unwrap();
            let group = flip / SELECTION_GROUP_BITS;
            let sel_base = &constraint_selections(&base).unwrap()[group];
            let sel_grown = &constraint_selections(&grown).unwrap()[group];
            prop_assert!(sel_base.variables().all(|v| sel_grown.contains(v)));
            let added = VariableIndex::new((flip % SELECTION_GROUP_BITS) as u8 + 1).unwrap();
            prop_assert!(sel_grown.contains(added));
            prop_assert!(!sel_base.contains(added));
        }
    }
}
