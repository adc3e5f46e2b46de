//! Acceptance suite: ten checks covering the pinned watermark artifacts,
//! solver accuracy against independent oracles, detection statistics, and
//! end-to-end integrity. One pass/fail line is printed per criterion; the
//! test fails if any criterion fails. Tolerances are pinned in the code
//! next to each check.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use covermark::bits::{encode_value, BitString};
use covermark::experiment::{run_experiment, ExperimentConfig};
use covermark::kolmogorov::{
    constraint_selections, weight_factors, ConstraintSelection, SIGNAL_BITS,
};
use covermark::lfsr::{self, LfsrKey};
use covermark::solver::{solve, SolverConfig};
use covermark::trilateration::{
    build_cover_medium, speed_of_sound, synthesize_scenario, synthesize_scenario_with, CoverMedium,
    Point, ScenarioMode, ScenarioRanges, SensorScenario,
};
use covermark::watermark::{compute_threshold, embed_with, extract, similarity};
use covermark::Error;

const REFERENCE_SIGNAL: &str = "0001111000001101110011000111";
const REFERENCE_FACTORS: [u8; 7] = [1, 14, 0, 13, 12, 12, 7];
const REFERENCE_SELECTIONS: [&[u8]; 4] = [&[4, 5, 6, 7], &[6, 7], &[2, 3, 4, 7], &[1, 5, 6, 7]];

fn reference_key() -> LfsrKey {
    LfsrKey::new(8, [1, 2, 5, 6]).expect("reference key is valid")
}

fn reference_signal() -> BitString {
    let key = reference_key();
    let seed = encode_value(120, key.register_length()).expect("120 fits eight bits");
    lfsr::generate(&seed, &key, SIGNAL_BITS).expect("signal generation succeeds")
}

/// Criterion 1: the sensed value 120 with taps {1,2,5,6} expands to the
/// exact 28-bit signal, in under a millisecond.
fn criterion_signal() -> Result<String, String> {
    let started = Instant::now();
    let signal = reference_signal();
    let elapsed = started.elapsed();
    if signal.to_string() != REFERENCE_SIGNAL {
        return Err(format!("signal {signal} != {REFERENCE_SIGNAL}"));
    }
    if elapsed >= Duration::from_millis(1) {
        return Err(format!("took {elapsed:?}, budget 1ms"));
    }
    Ok(format!("bit-exact signal in {elapsed:?}"))
}

/// Criterion 2: the same signal decodes to exactly the seven reference
/// weight factors.
fn criterion_factors() -> Result<String, String> {
    let factors = weight_factors(&reference_signal()).map_err(|e| e.to_string())?;
    if factors != REFERENCE_FACTORS {
        return Err(format!("factors {factors:?} != {REFERENCE_FACTORS:?}"));
    }
    Ok(format!("factors {factors:?}"))
}

/// Criterion 3: the same signal partitions into exactly the four reference
/// variable selections (set equality per selection, in order).
fn criterion_selections() -> Result<String, String> {
    let selections = constraint_selections(&reference_signal()).map_err(|e| e.to_string())?;
    if selections.len() != REFERENCE_SELECTIONS.len() {
        return Err(format!("expected 4 selections, got {}", selections.len()));
    }
    for (index, (selection, expected)) in selections.iter().zip(REFERENCE_SELECTIONS).enumerate() {
        let got: BTreeSet<u8> = selection.variables().map(|v| v.get()).collect();
        let want: BTreeSet<u8> = expected.iter().copied().collect();
        if got != want {
            return Err(format!("selection {index}: {got:?} != {want:?}"));
        }
    }
    Ok("all four selections match".to_string())
}

/// Criterion 4: embed followed by extract is the identity for 100 random
/// sensed values under 20 random valid keys, with zero failures, in under
/// ten seconds.
fn criterion_round_trip() -> Result<String, String> {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(401);
    let keys: Vec<LfsrKey> = (0..20)
        .map(|_| {
            let count = rng.gen_range(1..=8usize);
            let mut taps = BTreeSet::new();
            while taps.len() < count {
                taps.insert(rng.gen_range(1..=8usize));
            }
            LfsrKey::new(8, taps).expect("sampled taps are valid")
        })
        .collect();
    let scenario = synthesize_scenario_with(
        77,
        ScenarioMode::Sampled,
        &ScenarioRanges::undershooting_field(),
    );
    let config = SolverConfig::default();
    for round in 0..100 {
        let value = rng.gen_range(1..=255u64);
        let key = &keys[round % keys.len()];
        let record = embed_with(&scenario, value, key, round as u64, &config)
            .map_err(|e| format!("round {round}: embed({value}) failed: {e}"))?;
        let recovered = extract(&record.watermarked_problem, key)
            .map_err(|e| format!("round {round}: extract failed: {e}"))?;
        if recovered != value {
            return Err(format!(
                "round {round}: embedded {value}, extracted {recovered}"
            ));
        }
    }
    let elapsed = started.elapsed();
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("took {elapsed:?}, budget 10s"));
    }
    Ok(format!("100 round trips over 20 keys in {elapsed:.1?}"))
}

/// Criterion 5: on ten seeded noise-free scenarios the solver recovers the
/// hidden node to 1e-3 and drives the objective to at most 1e-3.
fn criterion_noise_free() -> Result<String, String> {
    let config = SolverConfig::default();
    let mut worst_distance = 0.0f64;
    let mut worst_objective = 0.0f64;
    for seed in 0..10u64 {
        let scenario = synthesize_scenario(seed, ScenarioMode::NoiseFree);
        let truth = scenario
            .ground_truth
            .expect("noise-free scenarios carry ground truth");
        let problem = build_cover_medium(&scenario).map_err(|e| e.to_string())?;
        let solution = solve(&problem, &config).map_err(|e| format!("seed {seed}: {e}"))?;
        let distance = solution.position.distance(&truth);
        worst_distance = worst_distance.max(distance);
        worst_objective = worst_objective.max(solution.objective_value);
        if distance > 1e-3 {
            return Err(format!(
                "seed {seed}: position off by {distance:.3e} > 1e-3"
            ));
        }
        if solution.objective_value > 1e-3 {
            return Err(format!(
                "seed {seed}: objective {:.3e} > 1e-3",
                solution.objective_value
            ));
        }
    }
    Ok(format!(
        "worst position error {worst_distance:.2e}, worst objective {worst_objective:.2e}"
    ))
}

/// One hand-built small instance for the grid oracle: anchors well inside
/// [5, 35]^2 and reported times consistent with a node near (20, 20) up to
/// a few meters of range error, so the coarse grid always contains
/// feasible nodes.
fn grid_instance(seed: u64) -> SensorScenario {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut anchors: Vec<Point> = Vec::new();
    while anchors.len() < 3 {
        let candidate = Point::new(rng.gen_range(5.0..=35.0), rng.gen_range(5.0..=35.0));
        if anchors.iter().all(|a| a.distance(&candidate) >= 8.0) {
            anchors.push(candidate);
        }
    }
    let center = Point::new(20.0, 20.0);
    let speed = speed_of_sound(36.0);
    let mut time = |anchor: &Point| (anchor.distance(&center) + rng.gen_range(-4.0..=4.0)) / speed;
    SensorScenario {
        anchor_a: anchors[0],
        anchor_b: anchors[1],
        anchor_c: anchors[2],
        temperature_c: 36.0,
        time_da: time(&anchors[0]),
        time_db: time(&anchors[1]),
        time_dc: time(&anchors[2]),
        ground_truth: None,
    }
}

/// Exhaustive coarse-grid oracle: enumerates every node of a fixed grid
/// over all nine variables, keeps the feasible ones, and returns the best
/// directly-evaluated objective. Returns None if no grid node is feasible.
fn grid_optimum(problem: &CoverMedium) -> Option<f64> {
    const POSITIONS: [f64; 11] = [
        0.0, 4.0, 8.0, 12.0, 16.0, 20.0, 24.0, 28.0, 32.0, 36.0, 40.0,
    ];
    const EPS_T: [f64; 2] = [0.0, 0.5];
    const EPS: [f64; 4] = [0.0, 0.01, 0.02, 0.05];
    const DELTA: [f64; 4] = [0.0, 1.0, 3.0, 10.0];
    const FEASIBILITY_SLOP: f64 = 1e-9;

    let mut best: Option<f64> = None;
    let mut error = [0.0f64; 7];
    for &x in &POSITIONS {
        for &y in &POSITIONS {
            let node = Point::new(x, y);
            let distances: Vec<f64> = problem.anchors.iter().map(|a| a.distance(&node)).collect();
            for &eps_t in &EPS_T {
                let speed = problem.effective_speed(eps_t);
                error[0] = eps_t;
                // Plain enumeration of every (eps, delta) grid combination
                // for the three anchors, discarding infeasible nodes.
                for &e1 in &EPS {
                    for &d1 in &DELTA {
                        if (distances[0] - speed * (problem.times[0] + e1)).abs()
                            > d1 + FEASIBILITY_SLOP
                        {
                            continue;
                        }
                        for &e2 in &EPS {
                            for &d2 in &DELTA {
                                if (distances[1] - speed * (problem.times[1] + e2)).abs()
                                    > d2 + FEASIBILITY_SLOP
                                {
                                    continue;
                                }
                                for &e3 in &EPS {
                                    for &d3 in &DELTA {
                                        if (distances[2] - speed * (problem.times[2] + e3)).abs()
                                            > d3 + FEASIBILITY_SLOP
                                        {
                                            continue;
                                        }
                                        error[1] = e1;
                                        error[2] = e2;
                                        error[3] = e3;
                                        error[4] = d1;
                                        error[5] = d2;
                                        error[6] = d3;
                                        let objective = problem.objective(&error);
                                        if best.is_none_or(|b| objective < b) {
                                            best = Some(objective);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    best
}

/// Criterion 6: on five seeded small instances the solver is at least as
/// good as an exhaustive coarse-grid enumeration, within 1e-2.
fn criterion_grid_oracle() -> Result<String, String> {
    let config = SolverConfig::default();
    let mut worst_gap = f64::NEG_INFINITY;
    for seed in 0..5u64 {
        let scenario = grid_instance(600 + seed);
        let problem = build_cover_medium(&scenario).map_err(|e| e.to_string())?;
        let oracle =
            grid_optimum(&problem).ok_or_else(|| format!("seed {seed}: no feasible grid node"))?;
        let solution = solve(&problem, &config).map_err(|e| format!("seed {seed}: {e}"))?;
        let gap = solution.objective_value - oracle;
        worst_gap = worst_gap.max(gap);
        if gap > 1e-2 {
            return Err(format!(
                "seed {seed}: solver {:.6} exceeds grid optimum {oracle:.6} by {gap:.3e}",
                solution.objective_value
            ));
        }
    }
    Ok(format!("worst solver-minus-grid gap {worst_gap:.3e}"))
}

/// Criterion 7: when the suspect solution equals the watermarked solution,
/// similarity equals the detection threshold to 1e-12.
fn criterion_similarity_identity() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(700);
    let mut worst = 0.0f64;
    for round in 0..50 {
        let x: [f64; 7] = std::array::from_fn(|_| rng.gen_range(0.0..10.0));
        let x_prime: [f64; 7] = std::array::from_fn(|i| x[i] + rng.gen_range(-1.0..1.0));
        if x_prime.iter().zip(&x).all(|(a, b)| a == b) {
            continue;
        }
        let threshold = compute_threshold(&x, &x_prime).map_err(|e| e.to_string())?;
        let value = similarity(&x, &x_prime, &x_prime).map_err(|e| e.to_string())?;
        let gap = (value - threshold).abs();
        worst = worst.max(gap);
        if gap > 1e-12 {
            return Err(format!(
                "round {round}: |similarity - threshold| = {gap:.3e}"
            ));
        }
    }
    Ok(format!("worst identity gap {worst:.3e}"))
}

/// Criterion 8: the default robustness matrix (five attacks at default
/// intensities, 20 seeded trials each) reproduces the qualitative verdict
/// pattern: deletion, replication, and sybil read Robust in at least 80% of
/// trials; false insertion and modification read Not Robust in at least
/// 80%; every row detects the watermark as present in at least 80%; and the
/// whole matrix completes within five minutes.
fn criterion_robustness_matrix() -> Result<(String, String), String> {
    let started = Instant::now();
    let config = ExperimentConfig::default();
    if config.trials < 20 {
        return Err(format!(
            "default config runs {} trials, need >= 20",
            config.trials
        ));
    }
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    let mut summary = Vec::new();
    for row in &report.rows {
        let trials = row.trials as f64;
        let robust_rate = row.robust_count as f64 / trials;
        let not_robust_rate = row.not_robust_count as f64 / trials;
        let name = row.kind.name();
        if row.degenerate {
            return Err(format!("{name}: every trial failed"));
        }
        let expect_robust = matches!(name, "deletion" | "replication" | "sybil");
        let (rate, wanted) = if expect_robust {
            (robust_rate, "Robust")
        } else {
            (not_robust_rate, "Not Robust")
        };
        if rate < 0.8 {
            return Err(format!(
                "{name}: {wanted} in {:.0}% of trials, need >= 80%",
                rate * 100.0
            ));
        }
        if row.presence_rate < 0.8 {
            return Err(format!(
                "{name}: watermark present in {:.0}% of trials, need >= 80%",
                row.presence_rate * 100.0
            ));
        }
        summary.push(format!("{name} {wanted} {:.0}%", rate * 100.0));
    }
    if elapsed >= Duration::from_secs(300) {
        return Err(format!("matrix took {elapsed:?}, budget 5min"));
    }
    let detail = format!("{} in {elapsed:.1?}", summary.join(", "));
    let json = report.to_json().map_err(|e| e.to_string())?;
    Ok((detail, json))
}

/// Criterion 9: rerunning the full default experiment produces a
/// byte-identical JSON report.
fn criterion_determinism(first_json: &str) -> Result<String, String> {
    let report = run_experiment(&ExperimentConfig::default()).map_err(|e| e.to_string())?;
    let second_json = report.to_json().map_err(|e| e.to_string())?;
    if first_json != second_json {
        let divergence = first_json
            .bytes()
            .zip(second_json.bytes())
            .position(|(a, b)| a != b)
            .unwrap_or_else(|| first_json.len().min(second_json.len()));
        return Err(format!("reports diverge at byte {divergence}"));
    }
    Ok(format!("two runs, {} identical bytes", first_json.len()))
}

/// Criterion 10: every single-field tampering of an embedded artifact —
/// one objective coefficient changed or one constraint selection rewritten
/// — makes extraction fail with a tamper error, across 50 seeded
/// mutations.
fn criterion_tamper_detection() -> Result<String, String> {
    let key = reference_key();
    let scenario = synthesize_scenario_with(
        42,
        ScenarioMode::Sampled,
        &ScenarioRanges::undershooting_field(),
    );
    let record = embed_with(&scenario, 120, &key, 4242, &SolverConfig::default())
        .map_err(|e| e.to_string())?;
    if !matches!(extract(&record.watermarked_problem, &key), Ok(120)) {
        return Err("untampered artifact must extract to 120".to_string());
    }

    let mut rng = StdRng::seed_from_u64(1000);
    for mutation in 0..50 {
        let mut tampered = record.watermarked_problem.clone();
        let description;
        if rng.gen_bool(0.5) {
            let index = rng.gen_range(0..tampered.objective_coefficients.len());
            let old = tampered.objective_coefficients[index];
            let new = if rng.gen_bool(0.5) {
                // A different valid-looking integer weight.
                (old + rng.gen_range(1.0f64..15.0).floor()) % 16.0
            } else {
                old + 0.5
            };
            tampered.objective_coefficients[index] = new;
            description = format!("coefficient {index}: {old} -> {new}");
        } else {
            let index = rng.gen_range(0..tampered.watermark_constraints.len());
            let group = tampered.watermark_constraints[index]
                .selection
                .source_group()
                .clone();
            let mut bits: Vec<u8> = group.iter().collect();
            let flip = rng.gen_range(0..bits.len());
            bits[flip] ^= 1;
            let rewritten = BitString::new(bits)
                .and_then(|b| ConstraintSelection::from_group(&b))
                .map_err(|e| format!("mutation {mutation}: rebuilding selection: {e}"))?;
            tampered.watermark_constraints[index].selection = rewritten;
            description = format!("constraint {index} selection bit {flip} flipped");
        }
        match extract(&tampered, &key) {
            Err(Error::Tampered(_)) => {}
            Err(other) => {
                return Err(format!(
                    "mutation {mutation} ({description}): wrong error kind: {other}"
                ));
            }
            Ok(value) => {
                return Err(format!(
                    "mutation {mutation} ({description}): extraction still returned {value}"
                ));
            }
        }
    }
    Ok("50/50 mutations flagged as tampering".to_string())
}

#[test]
fn acceptance() {
    let mut failures = Vec::new();
    let mut outcome = |index: usize, label: &str, result: Result<String, String>| match result {
        Ok(detail) => println!("criterion {index:>2}: PASS — {label}: {detail}"),
        Err(detail) => {
            println!("criterion {index:>2}: FAIL — {label}: {detail}");
            failures.push(format!("criterion {index} ({label}): {detail}"));
        }
    };

    outcome(1, "watermark signal", criterion_signal());
    outcome(2, "weight factors", criterion_factors());
    outcome(3, "constraint selections", criterion_selections());
    outcome(4, "embed/extract round trip", criterion_round_trip());
    outcome(5, "noise-free solver oracle", criterion_noise_free());
    outcome(6, "grid solver oracle", criterion_grid_oracle());
    outcome(7, "similarity identity", criterion_similarity_identity());

    let mut first_json = None;
    let matrix = match criterion_robustness_matrix() {
        Ok((detail, json)) => {
            first_json = Some(json);
            Ok(detail)
        }
        Err(detail) => Err(detail),
    };
    outcome(8, "robustness matrix", matrix);
    let determinism = match &first_json {
        Some(json) => criterion_determinism(json),
        None => Err("skipped: robustness matrix did not produce a report".to_string()),
    };
    outcome(9, "experiment determinism", determinism);
    outcome(10, "tamper detection", criterion_tamper_detection());

    assert!(
        failures.is_empty(),
        "failed criteria:\n{}",
        failures.join("\n")
    );
}
