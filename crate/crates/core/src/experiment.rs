//! Seeded robustness experiments: embed, attack, detect, tabulate.
//!
//! Each trial's seed is a stable hash of `(base_seed, attack name, trial
//! index)`, so adding or removing an attack from the list never shifts the
//! randomness of the others, and the whole report is reproducible
//! byte-for-byte from its configuration.

use serde::{Deserialize, Serialize};

use crate::attacks::{apply_attack, AttackKind, AttackSpec};
use crate::error::{Error, Result};
use crate::lfsr::LfsrKey;
use crate::sampling::derive_seed;
use crate::solver::SolverConfig;
use crate::trilateration::{
    default_schema_version, synthesize_scenario_with, ScenarioMode, ScenarioRanges, SensorScenario,
};
use crate::watermark::{detect, embed_with};

fn default_sensed_value() -> u64 {
    120
}

fn default_register_length() -> usize {
    8
}

fn default_taps() -> Vec<usize> {
    vec![1, 2, 5, 6]
}

fn default_trials() -> usize {
    20
}

fn default_mode() -> ScenarioMode {
    ScenarioMode::Sampled
}

/// Default sampling regime for robustness trials: times undershoot the true
/// distances, keeping solved error vectors well away from zero, which is
/// what gives tightened or counterfeit constraints something to bite on.
fn default_experiment_ranges() -> ScenarioRanges {
    ScenarioRanges::undershooting_field()
}

fn default_attacks() -> Vec<AttackConfig> {
    AttackKind::ALL
        .into_iter()
        .map(|kind| AttackConfig {
            kind,
            intensity: None,
        })
        .collect()
}

/// Where each trial's scenario comes from: a fixed measurement, or seeded
/// synthesis from ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Fixed scenario used for every trial; overrides synthesis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<SensorScenario>,
    #[serde(default = "default_mode")]
    pub mode: ScenarioMode,
    #[serde(default = "default_experiment_ranges")]
    pub ranges: ScenarioRanges,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            fixed: None,
            mode: default_mode(),
            ranges: default_experiment_ranges(),
        }
    }
}

/// One attack entry in the experiment; `intensity: None` uses the kind's
/// default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intensity: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default = "default_sensed_value")]
    pub sensed_value: u64,
    #[serde(default = "default_register_length")]
    pub register_length: usize,
    #[serde(default = "default_taps")]
    pub taps: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            schema_version: default_schema_version(),
            sensed_value: default_sensed_value(),
            register_length: default_register_length(),
            taps: default_taps(),
            trials: default_trials(),
            base_seed: 0,
            scenario: ScenarioConfig::default(),
            solver: SolverConfig::default(),
            attacks: default_attacks(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.attacks.is_empty() {
            return Err(Error::invalid("configure at least one attack"));
        }
        if let Some(intensity) = self
            .attacks
            .iter()
            .filter_map(|a| a.intensity)
            .find(|&i| i == 0)
        {
            return Err(Error::invalid(format!(
                "attack intensity must be at least 1, got {intensity}"
            )));
        }
        LfsrKey::new(self.register_length, self.taps.iter().copied())?;
        self.scenario.ranges.validate()?;
        if let Some(scenario) = &self.scenario.fixed {
            scenario.validate()?;
        }
        self.solver.validate()?;
        Ok(())
    }

    pub fn key(&self) -> Result<LfsrKey> {
        LfsrKey::new(self.register_length, self.taps.iter().copied())
    }
}

/// One embed-attack-detect run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub kind: AttackKind,
    pub trial: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<bool>,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Aggregated verdicts for one attack kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub kind: AttackKind,
    pub intensity: usize,
    pub trials: usize,
    pub robust_count: usize,
    pub not_robust_count: usize,
    pub failed_count: usize,
    pub presence_rate: f64,
    pub mean_similarity: f64,
    pub mean_threshold: f64,
    pub min_threshold: f64,
    pub max_threshold: f64,
    /// True when every trial failed and the statistics are meaningless.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub rows: Vec<AttackRow>,
    pub trial_records: Vec<TrialRecord>,
}

/// Runs every configured attack for the configured number of trials.
/// Individual trial failures (e.g. an unsolvable sampled scenario) are
/// recorded and skipped; they never abort the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let key = config.key()?;

    let mut trial_records = Vec::with_capacity(config.attacks.len() * config.trials);
    let mut rows = Vec::with_capacity(config.attacks.len());
    for attack in &config.attacks {
        let intensity = attack
            .intensity
            .unwrap_or_else(|| attack.kind.default_intensity());
        for trial in 0..config.trials {
            let seed = derive_seed(config.base_seed, attack.kind.name(), trial as u64);
            trial_records.push(run_trial(config, &key, attack.kind, intensity, trial, seed));
        }
        let kind_records = &trial_records[trial_records.len() - config.trials..];
        rows.push(summarize(attack.kind, intensity, kind_records));
    }

    Ok(ExperimentReport {
        schema_version: default_schema_version(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        rows,
        trial_records,
    })
}

fn run_trial(
    config: &ExperimentConfig,
    key: &LfsrKey,
    kind: AttackKind,
    intensity: usize,
    trial: usize,
    seed: u64,
) -> TrialRecord {
    let failure = |failure: String| TrialRecord {
        kind,
        trial,
        seed,
        threshold: None,
        similarity: None,
        present: None,
        robust: None,
        failed: true,
        failure: Some(failure),
    };

    let scenario = match &config.scenario.fixed {
        Some(fixed) => fixed.clone(),
        None => synthesize_scenario_with(seed, config.scenario.mode, &config.scenario.ranges),
    };
    let record = match embed_with(
        &scenario,
        config.sensed_value,
        key,
        derive_seed(seed, "embed", 0),
        &config.solver,
    ) {
        Ok(record) => record,
        Err(e) => return failure(format!("embed: {e}")),
    };
    let spec = AttackSpec {
        kind,
        intensity,
        rng_seed: derive_seed(seed, "attack", 0),
    };
    let attacked = match apply_attack(&record.watermarked_problem, &spec) {
        Ok(attacked) => attacked,
        Err(e) => return failure(format!("attack: {e}")),
    };
    match detect(&record, &attacked, &config.solver) {
        Ok(report) => TrialRecord {
            kind,
            trial,
            seed,
            threshold: Some(report.threshold),
            similarity: Some(report.similarity),
            present: Some(report.watermark_present),
            robust: Some(report.robust),
            failed: false,
            failure: None,
        },
        Err(e) => failure(format!("detect: {e}")),
    }
}

fn summarize(kind: AttackKind, intensity: usize, records: &[TrialRecord]) -> AttackRow {
    let completed: Vec<&TrialRecord> = records.iter().filter(|r| !r.failed).collect();
    let robust_count = completed.iter().filter(|r| r.robust == Some(true)).count();
    let not_robust_count = completed.len() - robust_count;
    let failed_count = records.len() - completed.len();
    let degenerate = completed.is_empty();
    let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
        if degenerate {
            0.0
        } else {
            completed.iter().map(|r| f(r)).sum::<f64>() / completed.len() as f64
        }
    };
    let thresholds = || completed.iter().map(|r| r.threshold.unwrap_or(0.0));
    AttackRow {
        kind,
        intensity,
        trials: records.len(),
        robust_count,
        not_robust_count,
        failed_count,
        presence_rate: if degenerate {
            0.0
        } else {
            completed.iter().filter(|r| r.present == Some(true)).count() as f64
                / completed.len() as f64
        },
        mean_similarity: mean(&|r| r.similarity.unwrap_or(0.0)),
        mean_threshold: mean(&|r| r.threshold.unwrap_or(0.0)),
        min_threshold: if degenerate {
            0.0
        } else {
            thresholds().fold(f64::INFINITY, f64::min)
        },
        max_threshold: if degenerate {
            0.0
        } else {
            thresholds().fold(f64::NEG_INFINITY, f64::max)
        },
        degenerate,
    }
}

impl ExperimentReport {
    /// Pretty JSON with a trailing newline; stable field order and float
    /// formatting make equal reports byte-identical.
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::invalid(format!("report serialization failed: {e}")))?;
        text.push('\n');
        Ok(text)
    }

    /// One CSV row per trial.
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "kind",
                "trial",
                "seed",
                "threshold",
                "similarity",
                "present",
                "robust",
            ])
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        for record in &self.trial_records {
            let optional_number = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let optional_flag = |v: Option<bool>| v.map(|x| x.to_string()).unwrap_or_default();
            writer
                .write_record([
                    record.kind.name().to_string(),
                    record.trial.to_string(),
                    record.seed.to_string(),
                    optional_number(record.threshold),
                    optional_number(record.similarity),
                    optional_flag(record.present),
                    optional_flag(record.robust),
                ])
                .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| Error::invalid(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::invalid(format!("csv: {e}")))
    }

    /// Human-readable robustness matrix.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "robustness matrix — {} trial(s) per attack, base seed {}\n",
            self.config.trials, self.config.base_seed
        ));
        out.push_str(&format!(
            "{:<16} {:>9} {:>7} {:>11} {:>7} {:>9} {:>13} {:>13}\n",
            "attack",
            "intensity",
            "robust",
            "not_robust",
            "failed",
            "presence",
            "mean_thresh",
            "mean_sim"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>9} {:>7} {:>11} {:>7} {:>9.2} {:>13.6} {:>13.6}{}\n",
                row.kind.name(),
                row.intensity,
                row.robust_count,
                row.not_robust_count,
                row.failed_count,
                row.presence_rate,
                row.mean_threshold,
                row.mean_similarity,
                if row.degenerate { "  (degenerate)" } else { "" },
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            trials: 2,
            base_seed: 5,
            attacks: vec![
                AttackConfig {
                    kind: AttackKind::Deletion,
                    intensity: None,
                },
                AttackConfig {
                    kind: AttackKind::Replication,
                    intensity: Some(1),
                },
            ],
            solver: SolverConfig {
                multistart_count: 6,
                ..SolverConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn reports_are_byte_identical_across_runs() {
        let config = quick_config();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.to_table(), b.to_table());
    }

    #[test]
    fn row_arithmetic_is_consistent() {
        let report = run_experiment(&quick_config()).unwrap();
        for row in &report.rows {
            assert_eq!(
                row.robust_count + row.not_robust_count + row.failed_count,
                row.trials
            );
            assert!((0.0..=1.0).contains(&row.presence_rate));
        }
        assert_eq!(
            report.trial_records.len(),
            report.config.trials * report.config.attacks.len()
        );
    }

    #[test]
    fn trial_seeds_do_not_depend_on_attack_order() {
        let mut config = quick_config();
        let forward = run_experiment(&config).unwrap();
        config.attacks.reverse();
        let reversed = run_experiment(&config).unwrap();
        let find = |report: &ExperimentReport, kind: AttackKind| {
            report
                .trial_records
                .iter()
                .filter(|r| r.kind == kind)
                .cloned()
                .collect::<Vec<_>>()
        };
        assert_eq!(
            find(&forward, AttackKind::Deletion),
            find(&reversed, AttackKind::Deletion)
        );
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut config = quick_config();
        config.trials = 0;
        assert!(config.validate().is_err());

        let mut config = quick_config();
        config.attacks.clear();
        assert!(config.validate().is_err());

        let mut config = quick_config();
        config.taps = vec![9];
        assert!(config.validate().is_err());

        let mut config = quick_config();
        config.attacks[0].intensity = Some(0);
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_toml_shaped_serde() {
        let config = ExperimentConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config, back);
    }
}
