//! Embedding, detection, and extraction of watermarks in cover-medium
//! programs.
//!
//! Embedding rewrites the objective weights to the signal's seven factors
//! and appends the four selection constraints with bounds sampled from a
//! truncated Gaussian, then raised just above their value at the
//! unwatermarked optimum so the marked program keeps the same solutions.
//! Detection solves the unwatermarked, watermarked, and suspect programs
//! and compares error vectors by normalized correlation; because the solver
//! is bit-deterministic, an attack that leaves the effective program intact
//! produces an exact tie between similarity and threshold, while an attack
//! that tightens or rewrites constraints displaces the solution and breaks
//! the tie by orders of magnitude more than solver noise. Extraction reads
//! the factors back from the coefficients, rebuilds the signal, checks the
//! program's constraints against the re-derived selections, and reverses
//! the shift register to recover the sensed value.

use serde::{Deserialize, Serialize};

use crate::bits::{decode_bits, encode_value};
use crate::error::{Error, Result};
use crate::kolmogorov::{WatermarkPayload, SELECTION_COUNT, SIGNAL_BITS, VARIABLE_COUNT};
use crate::lfsr::{self, LfsrKey};
use crate::sampling::{stream_rng, truncated_normal01};
use crate::solver::{solve, SolverConfig};
use crate::trilateration::{
    build_cover_medium, default_schema_version, CoverMedium, SensorScenario, WatermarkConstraint,
};

/// Norm gap below which two solved error vectors count as the same solution.
pub const NORM_EQUALITY_TOLERANCE: f64 = 1e-9;
/// Similarity-threshold gap below which a suspect counts as an exact tie,
/// i.e. the attack failed to move the solution.
pub const ROBUSTNESS_TIE_TOLERANCE: f64 = 1e-3;
/// Slack added above the unwatermarked optimum when repairing sampled τ
/// bounds, so appended constraints never cut off the incumbent solution.
pub const TAU_REPAIR_MARGIN: f64 = 1e-6;

/// Everything produced by one embedding: the payload, the final constraint
/// bounds, the key, and both programs (weights applied, without and with
/// the watermark constraints).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub payload: WatermarkPayload,
    pub tau_values: Vec<f64>,
    pub key: LfsrKey,
    pub base_problem: CoverMedium,
    pub watermarked_problem: CoverMedium,
}

/// Outcome of one detection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    /// Error vector of the unwatermarked program.
    pub x: [f64; VARIABLE_COUNT],
    /// Error vector of the watermarked program.
    pub x_prime: [f64; VARIABLE_COUNT],
    /// Error vector of the suspect program.
    pub x_double_prime: [f64; VARIABLE_COUNT],
    pub n: f64,
    pub n_prime: f64,
    pub n_double_prime: f64,
    pub threshold: f64,
    pub similarity: f64,
    pub watermark_present: bool,
    pub robust: bool,
}

fn norm(v: &[f64; VARIABLE_COUNT]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Correlation of `candidate - base` with the unit direction of
/// `reference`. Threshold and similarity both route through here so that
/// identical inputs produce bitwise-identical outputs.
fn normalized_correlation(
    base: &[f64; VARIABLE_COUNT],
    candidate: &[f64; VARIABLE_COUNT],
    reference: &[f64; VARIABLE_COUNT],
) -> Result<f64> {
    let norm_sq: f64 = reference.iter().map(|x| x * x).sum();
    if norm_sq == 0.0 {
        return Err(Error::invalid("correlation reference vector has zero norm"));
    }
    let dot: f64 = candidate
        .iter()
        .zip(base)
        .zip(reference)
        .map(|((c, b), r)| (c - b) * r)
        .sum();
    Ok(dot / norm_sq.sqrt())
}

/// Correlation of the watermarked displacement with itself; the bar a
/// suspect's similarity is compared against.
pub fn compute_threshold(
    x: &[f64; VARIABLE_COUNT],
    x_prime: &[f64; VARIABLE_COUNT],
) -> Result<f64> {
    normalized_correlation(x, x_prime, x_prime)
}

/// Correlation of the suspect's displacement with the watermarked
/// direction.
pub fn similarity(
    x: &[f64; VARIABLE_COUNT],
    x_prime: &[f64; VARIABLE_COUNT],
    x_double_prime: &[f64; VARIABLE_COUNT],
) -> Result<f64> {
    normalized_correlation(x, x_double_prime, x_prime)
}

/// Embeds `sensed_value` into the scenario's program with the default
/// solver configuration.
pub fn embed(
    scenario: &SensorScenario,
    sensed_value: u64,
    key: &LfsrKey,
    rng_seed: u64,
) -> Result<EmbeddingRecord> {
    embed_with(
        scenario,
        sensed_value,
        key,
        rng_seed,
        &SolverConfig::default(),
    )
}

/// Embeds `sensed_value`: generates the signal from the value and key,
/// applies the weight factors to the objective, samples the four constraint
/// bounds from the truncated Gaussian, repairs them against the
/// unwatermarked optimum, and appends the selection constraints.
pub fn embed_with(
    scenario: &SensorScenario,
    sensed_value: u64,
    key: &LfsrKey,
    rng_seed: u64,
    solver_config: &SolverConfig,
) -> Result<EmbeddingRecord> {
    if sensed_value == 0 {
        return Err(Error::invalid(
            "sensed value 0 produces an all-zero signal and cannot be embedded",
        ));
    }
    let seed_bits = encode_value(sensed_value, key.register_length())?;
    let signal = lfsr::generate(&seed_bits, key, SIGNAL_BITS)?;
    let payload = WatermarkPayload::from_signal(&signal)?;

    let mut base_problem = build_cover_medium(scenario)?;
    for (coefficient, &factor) in base_problem
        .objective_coefficients
        .iter_mut()
        .zip(&payload.weight_factors)
    {
        *coefficient = f64::from(factor);
    }

    let base_solution = solve(&base_problem, solver_config)?;
    let mut rng = stream_rng(rng_seed, "tau", 0);
    let mut watermarked_problem = base_problem.clone();
    let mut tau_values = Vec::with_capacity(SELECTION_COUNT);
    for selection in &payload.selections {
        let sample = truncated_normal01(&mut rng);
        let incumbent: f64 = selection
            .variables()
            .map(|v| base_solution.error_vector[v.offset()])
            .sum();
        let tau = sample.max(incumbent + TAU_REPAIR_MARGIN);
        tau_values.push(tau);
        watermarked_problem
            .watermark_constraints
            .push(WatermarkConstraint {
                selection: selection.clone(),
                tau,
            });
    }

    Ok(EmbeddingRecord {
        schema_version: default_schema_version(),
        payload,
        tau_values,
        key: key.clone(),
        base_problem,
        watermarked_problem,
    })
}

/// Solves the record's two reference programs and the suspect, then scores
/// the suspect: present if its solution norm departs from the
/// unwatermarked norm, robust if its correlation ties the threshold,
/// meaning the attack left the effective program unchanged.
pub fn detect(
    record: &EmbeddingRecord,
    suspect_problem: &CoverMedium,
    config: &SolverConfig,
) -> Result<DetectionReport> {
    let stage_solve = |problem: &CoverMedium, stage: &'static str| {
        solve(problem, config).map_err(|source| Error::DetectionFailed {
            stage,
            source: Box::new(source),
        })
    };
    let base = stage_solve(&record.base_problem, "base")?;
    let marked = stage_solve(&record.watermarked_problem, "watermarked")?;
    let suspect = stage_solve(suspect_problem, "suspect")?;

    let x = base.error_vector;
    let x_prime = marked.error_vector;
    let x_double_prime = suspect.error_vector;
    let threshold = compute_threshold(&x, &x_prime)?;
    let similarity = similarity(&x, &x_prime, &x_double_prime)?;
    let n = norm(&x);
    let n_double_prime = norm(&x_double_prime);

    Ok(DetectionReport {
        schema_version: default_schema_version(),
        x,
        x_prime,
        x_double_prime,
        n,
        n_prime: norm(&x_prime),
        n_double_prime,
        threshold,
        similarity,
        watermark_present: (n - n_double_prime).abs() > NORM_EQUALITY_TOLERANCE,
        robust: (similarity - threshold).abs() <= ROBUSTNESS_TIE_TOLERANCE,
    })
}

/// Reads the sensed value back out of a watermarked program.
///
/// The objective coefficients must still be the embedded integer factors;
/// the signal they rebuild must re-derive every selection used by the
/// program's watermark constraints (so rewritten or foreign constraints are
/// flagged, while a deleted constraint merely shrinks the checked set); and
/// the signal must be consistent with the key's shift register.
pub fn extract(problem: &CoverMedium, key: &LfsrKey) -> Result<u64> {
    let mut factors = Vec::with_capacity(VARIABLE_COUNT);
    for &coefficient in &problem.objective_coefficients {
        if !coefficient.is_finite()
            || coefficient.fract() != 0.0
            || !(0.0..=15.0).contains(&coefficient)
        {
            return Err(Error::tampered(format!(
                "objective coefficient {coefficient} is not an embedded weight factor"
            )));
        }
        factors.push(coefficient as u8);
    }
    let signal = crate::kolmogorov::factors_to_signal(&factors)?;
    let selections = crate::kolmogorov::constraint_selections(&signal)?;
    for constraint in &problem.watermark_constraints {
        if !selections.contains(&constraint.selection) {
            return Err(Error::tampered(
                "watermark constraint does not match the embedded selections",
            ));
        }
    }
    let seed_bits = lfsr::recover_seed(&signal, key)?;
    decode_bits(&seed_bits)
}
