//! Adversarial transformations of watermarked programs.
//!
//! Every attack is a pure function of `(problem, spec)`: the attacker's
//! randomness comes from its own seed stream, independent of the defender's,
//! and the input program is never mutated. Attacks that tighten or invent
//! constraints (insertion, modification) place their bounds the way a
//! motivated adversary would: between the tightest level the program can
//! satisfy at all and the level its current solution reaches, where a bound
//! perturbs the solution without making the program unsolvable. The exact
//! position inside that window comes from the embedder's truncated-Gaussian
//! sampler, keyed to the attacker's own seed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bits::{encode_value, BitString};
use crate::error::{Error, Result};
use crate::kolmogorov::{
    constraint_selections, ConstraintSelection, SELECTION_GROUP_BITS, SIGNAL_BITS,
};
use crate::lfsr::{self, LfsrKey};
use crate::sampling::{derive_seed, stream_rng, truncated_normal01};
use crate::solver::{constrained_minimum_probe, feasibility_probe, solve, SolverConfig};
use crate::trilateration::{CoverMedium, WatermarkConstraint};

/// Maximum constraint violation the feasibility probe may report for an
/// attacked candidate to count as solvable.
const PROBE_FEASIBILITY_TOLERANCE: f64 = 1e-5;
/// Separation between sampled bounds and the probed window endpoints.
const TAU_WINDOW_MARGIN: f64 = 1e-3;
/// Escalation steps toward the window's harmless end before giving up on
/// the feasibility probe.
const MAX_TAU_ESCALATIONS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    FalseInsertion,
    Modification,
    Deletion,
    Replication,
    Sybil,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::FalseInsertion,
        AttackKind::Modification,
        AttackKind::Deletion,
        AttackKind::Replication,
        AttackKind::Sybil,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::FalseInsertion => "false_insertion",
            AttackKind::Modification => "modification",
            AttackKind::Deletion => "deletion",
            AttackKind::Replication => "replication",
            AttackKind::Sybil => "sybil",
        }
    }

    /// Default number of constraints each attack touches or adds.
    pub fn default_intensity(self) -> usize {
        match self {
            AttackKind::FalseInsertion => 4,
            AttackKind::Modification => 2,
            AttackKind::Deletion => 1,
            AttackKind::Replication => 2,
            AttackKind::Sybil => 3,
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|kind| kind.name() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown attack {s:?}; expected one of: false_insertion, \
                     modification, deletion, replication, sybil"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub intensity: usize,
    pub rng_seed: u64,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, intensity: usize, rng_seed: u64) -> Result<Self> {
        if intensity == 0 {
            return Err(Error::invalid("attack intensity must be at least 1"));
        }
        Ok(AttackSpec {
            kind,
            intensity,
            rng_seed,
        })
    }

    /// Spec with the kind's default intensity.
    pub fn with_defaults(kind: AttackKind, rng_seed: u64) -> Self {
        AttackSpec {
            kind,
            intensity: kind.default_intensity(),
            rng_seed,
        }
    }
}

/// Applies one attack, returning the transformed program.
pub fn apply_attack(problem: &CoverMedium, spec: &AttackSpec) -> Result<CoverMedium> {
    if spec.intensity == 0 {
        return Err(Error::invalid("attack intensity must be at least 1"));
    }
    let count = problem.watermark_constraints.len();
    if count == 0 && spec.kind != AttackKind::FalseInsertion {
        return Err(Error::invalid(format!(
            "{} requires at least one watermark constraint",
            spec.kind
        )));
    }
    if spec.kind == AttackKind::Deletion && spec.intensity > count {
        return Err(Error::invalid(format!(
            "cannot delete {} of {count} watermark constraints",
            spec.intensity
        )));
    }

    let mut rng = stream_rng(spec.rng_seed, spec.kind.name(), 0);
    let probe_seed = derive_seed(spec.rng_seed, "attack-probe", 0);
    let mut attacked = problem.clone();
    match spec.kind {
        AttackKind::FalseInsertion => {
            let selections = fresh_pipeline_selections(&mut rng, spec.intensity)?;
            let touched: Vec<usize> = (count..count + spec.intensity).collect();
            for selection in selections {
                attacked.watermark_constraints.push(WatermarkConstraint {
                    selection,
                    tau: 0.0,
                });
            }
            attacked = with_feasible_bounds(problem, attacked, &touched, &mut rng, probe_seed);
        }
        AttackKind::Modification => {
            let touched = pick_distinct(&mut rng, count, spec.intensity.min(count));
            for &i in &touched {
                attacked.watermark_constraints[i].selection = fresh_mask(&mut rng);
            }
            attacked = with_feasible_bounds(problem, attacked, &touched, &mut rng, probe_seed);
        }
        AttackKind::Deletion => {
            let mut picks = pick_distinct(&mut rng, count, spec.intensity);
            picks.sort_unstable_by(|a, b| b.cmp(a));
            for i in picks {
                attacked.watermark_constraints.remove(i);
            }
        }
        AttackKind::Replication => {
            for _ in 0..spec.intensity {
                let i = rng.gen_range(0..count);
                let copy = attacked.watermark_constraints[i].clone();
                attacked.watermark_constraints.push(copy);
            }
        }
        AttackKind::Sybil => {
            for _ in 0..spec.intensity {
                let i = rng.gen_range(0..count);
                let original = &attacked.watermark_constraints[i];
                // A forged identity re-asserts an existing selection with its
                // own sampled bound; bounds below the genuine one would turn
                // the forgery into an edit, so they are floored at it.
                let forged = WatermarkConstraint {
                    selection: original.selection.clone(),
                    tau: truncated_normal01(&mut rng).max(original.tau),
                };
                attacked.watermark_constraints.push(forged);
            }
        }
    }
    Ok(attacked)
}

/// First `k` entries of a seeded partial shuffle of `0..n`.
fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k.min(n));
    indices
}

/// Random non-vacuous selection from a uniform 7-bit mask.
fn fresh_mask(rng: &mut ChaCha8Rng) -> ConstraintSelection {
    loop {
        let bits: Vec<u8> = (0..SELECTION_GROUP_BITS)
            .map(|_| rng.gen_range(0..=1))
            .collect();
        if bits.iter().all(|&b| b == 0) {
            continue;
        }
        let group = BitString::new(bits).expect("non-empty group");
        return ConstraintSelection::from_group(&group).expect("7-bit group");
    }
}

/// Selections generated the way a counterfeiting attacker would: fresh
/// random register seeds and tap sets, run through the same signal pipeline
/// as genuine watermarks. Vacuous groups are skipped — they would constrain
/// nothing.
fn fresh_pipeline_selections(
    rng: &mut ChaCha8Rng,
    need: usize,
) -> Result<Vec<ConstraintSelection>> {
    let mut selections = Vec::with_capacity(need);
    while selections.len() < need {
        let seed_value = rng.gen_range(1..=255u64);
        let taps: Vec<usize> = loop {
            let taps: Vec<usize> = (1..=8).filter(|_| rng.gen_bool(0.5)).collect();
            if !taps.is_empty() {
                break taps;
            }
        };
        let key = LfsrKey::new(8, taps)?;
        let seed_bits = encode_value(seed_value, key.register_length())?;
        let signal = lfsr::generate(&seed_bits, &key, SIGNAL_BITS)?;
        for selection in constraint_selections(&signal)? {
            if selections.len() < need && !selection.is_vacuous() {
                selections.push(selection);
            }
        }
    }
    Ok(selections)
}

/// Places bounds on the touched constraints inside the binding window of
/// the original program.
///
/// The window's low end is the least each touched selection can sum to
/// while the original constraints hold (aggressive probe); its high end is
/// what the original program's own solution spends there, above which a
/// bound cannot bind. A truncated-Gaussian fraction picks the spot, so the
/// bound perturbs the solution with high probability yet a feasible witness
/// is guaranteed to exist. If the feasibility probe still dislikes the
/// draw, the bounds escalate stepwise toward the harmless high end, which
/// the original solution itself witnesses.
fn with_feasible_bounds(
    original: &CoverMedium,
    mut attacked: CoverMedium,
    touched: &[usize],
    rng: &mut ChaCha8Rng,
    probe_seed: u64,
) -> CoverMedium {
    let selections: Vec<ConstraintSelection> = touched
        .iter()
        .map(|&i| attacked.watermark_constraints[i].selection.clone())
        .collect();
    let sums_at = |error: &[f64]| -> Vec<f64> {
        selections
            .iter()
            .map(|s| s.variables().map(|v| error[v.offset()]).sum())
            .collect()
    };
    let fractions: Vec<f64> = touched.iter().map(|_| truncated_normal01(rng)).collect();

    let attacker_config = SolverConfig {
        rng_seed: probe_seed,
        ..SolverConfig::default()
    };
    let reference = solve(original, &attacker_config)
        .ok()
        .map(|solution| sums_at(&solution.error_vector));
    let floor = constrained_minimum_probe(original, &selections, probe_seed);

    let (low, high): (Vec<f64>, Vec<f64>) = match (floor, reference) {
        (Some(floor), Some(reference)) => floor
            .iter()
            .zip(&reference)
            .map(|(&f, &r)| {
                let low = f + TAU_WINDOW_MARGIN;
                (low, (r + TAU_WINDOW_MARGIN).max(low))
            })
            .unzip(),
        // Without a floor estimate, sit at the level the original solution
        // witnesses; without any solvable structure, keep the raw samples.
        (None, Some(reference)) => reference
            .iter()
            .map(|&r| (r + TAU_WINDOW_MARGIN, r + TAU_WINDOW_MARGIN))
            .unzip(),
        (Some(floor), None) => floor
            .iter()
            .map(|&f| (f + TAU_WINDOW_MARGIN, f + TAU_WINDOW_MARGIN))
            .unzip(),
        (None, None) => {
            for (j, &i) in touched.iter().enumerate() {
                attacked.watermark_constraints[i].tau = fractions[j];
            }
            return attacked;
        }
    };

    let mut levels: Vec<f64> = fractions
        .iter()
        .zip(low.iter().zip(&high))
        .map(|(&f, (&l, &h))| l + f * (h - l))
        .collect();
    for attempt in 0..=MAX_TAU_ESCALATIONS {
        if attempt == MAX_TAU_ESCALATIONS {
            levels.clone_from_slice(&high);
        }
        for (j, &i) in touched.iter().enumerate() {
            attacked.watermark_constraints[i].tau = levels[j];
        }
        if attempt == MAX_TAU_ESCALATIONS {
            break;
        }
        let (violation, _) = feasibility_probe(&attacked, probe_seed);
        if violation <= PROBE_FEASIBILITY_TOLERANCE {
            break;
        }
        for (level, &h) in levels.iter_mut().zip(&high) {
            *level = 0.5 * (*level + h);
        }
    }
    attacked
}
