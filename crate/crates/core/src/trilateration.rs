//! Acoustic time-difference trilateration expressed as a constrained program.
//!
//! Three anchor sensors at known planar positions each report a sound
//! time-of-flight to an unknown node `D`. Sound speed follows the linear
//! temperature model `331.4 + 0.6 * T`. The cover medium is the program that
//! recovers `D`: decision variables are the node position plus seven error
//! variables (one shared timing error, one time-of-flight error per anchor,
//! one distance tolerance per anchor), the objective is a weighted sum of the
//! error variables, and each anchor contributes the constraint
//!
//! `| dist(D, anchor) - speed(T + eps_t) * (time + eps) | <= delta`.
//!
//! Watermark constraints, when present, bound sums of selected error
//! variables from above.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kolmogorov::{ConstraintSelection, VARIABLE_COUNT};
use crate::sampling::{stream_rng, truncated_normal01};

/// Decision vector layout: x, y, then the seven error variables.
pub const DIMENSION: usize = 2 + VARIABLE_COUNT;
/// Number of anchors, fixed by the constraint structure.
pub const ANCHOR_COUNT: usize = 3;

/// Base speed of sound at zero degrees Celsius, meters per second.
const SPEED_BASE: f64 = 331.4;
/// Speed gain per degree Celsius.
const SPEED_SLOPE: f64 = 0.6;

/// Speed of sound in air at the given temperature in degrees Celsius.
pub fn speed_of_sound(temperature_c: f64) -> f64 {
    SPEED_BASE + SPEED_SLOPE * temperature_c
}

/// Planar position in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// One sensing episode: anchor positions, air temperature, and the three
/// reported times of flight. `ground_truth` is carried by synthetic
/// noise-free scenarios so oracles can check recovered positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorScenario {
    pub anchor_a: Point,
    pub anchor_b: Point,
    pub anchor_c: Point,
    pub temperature_c: f64,
    pub time_da: f64,
    pub time_db: f64,
    pub time_dc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Point>,
}

impl SensorScenario {
    pub fn anchors(&self) -> [Point; ANCHOR_COUNT] {
        [self.anchor_a, self.anchor_b, self.anchor_c]
    }

    pub fn times(&self) -> [f64; ANCHOR_COUNT] {
        [self.time_da, self.time_db, self.time_dc]
    }

    /// Checks the scenario is physically meaningful: distinct anchors,
    /// strictly positive times, finite temperature.
    pub fn validate(&self) -> Result<()> {
        let anchors = self.anchors();
        for (i, a) in anchors.iter().enumerate() {
            if !a.x.is_finite() || !a.y.is_finite() {
                return Err(Error::invalid(format!("anchor {i} is not finite")));
            }
            for b in anchors.iter().skip(i + 1) {
                if a.distance(b) < 1e-9 {
                    return Err(Error::invalid("anchors must be pairwise distinct"));
                }
            }
        }
        if !self.temperature_c.is_finite() {
            return Err(Error::invalid("temperature must be finite"));
        }
        for (i, t) in self.times().iter().enumerate() {
            if !t.is_finite() || *t <= 0.0 {
                return Err(Error::invalid(format!(
                    "time of flight {i} must be positive, got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-variable box for the nine decision variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableBounds {
    pub lower: [f64; DIMENSION],
    pub upper: [f64; DIMENSION],
}

impl Default for VariableBounds {
    /// Positions range over `[-100, 100]` meters; error variables and
    /// distance tolerances are non-negative and capped at 10.
    fn default() -> Self {
        let mut lower = [0.0; DIMENSION];
        let mut upper = [10.0; DIMENSION];
        lower[0] = -100.0;
        lower[1] = -100.0;
        upper[0] = 100.0;
        upper[1] = 100.0;
        VariableBounds { lower, upper }
    }
}

impl VariableBounds {
    /// Largest amount by which `point` escapes the box.
    pub fn violation(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .enumerate()
            .map(|(i, &v)| (self.lower[i] - v).max(v - self.upper[i]).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn is_consistent(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l <= u)
    }
}

/// Linear watermark constraint: the selected error variables must sum to at
/// most `tau`. A vacuous selection keeps the constraint with a zero sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WatermarkConstraint {
    pub selection: ConstraintSelection,
    pub tau: f64,
}

impl WatermarkConstraint {
    /// Sum of the selected error variables.
    pub fn lhs(&self, error: &[f64]) -> f64 {
        self.selection.variables().map(|v| error[v.offset()]).sum()
    }

    /// Positive part of `lhs - tau`.
    pub fn violation(&self, error: &[f64]) -> f64 {
        (self.lhs(error) - self.tau).max(0.0)
    }
}

/// The full constrained program handed to the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverMedium {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub anchors: [Point; ANCHOR_COUNT],
    pub temperature_c: f64,
    pub times: [f64; ANCHOR_COUNT],
    /// Objective weights for the seven error variables, in variable order.
    pub objective_coefficients: [f64; VARIABLE_COUNT],
    pub watermark_constraints: Vec<WatermarkConstraint>,
    pub bounds: VariableBounds,
}

pub(crate) fn default_schema_version() -> u32 {
    1
}

impl CoverMedium {
    /// Weighted objective over the error part of a decision vector.
    pub fn objective(&self, error: &[f64]) -> f64 {
        self.objective_coefficients
            .iter()
            .zip(error)
            .map(|(c, e)| c * e)
            .sum()
    }

    /// Sound speed once the shared timing error is applied.
    pub fn effective_speed(&self, eps_t: f64) -> f64 {
        speed_of_sound(self.temperature_c + eps_t)
    }

    /// Signed slack of anchor constraint `k` at a full decision vector:
    /// positive values are violations, non-positive values are satisfied.
    pub fn anchor_residual(&self, k: usize, point: &[f64]) -> f64 {
        let position = Point::new(point[0], point[1]);
        let eps_t = point[2];
        let eps_k = point[3 + k];
        let delta_k = point[6 + k];
        let range = self.effective_speed(eps_t) * (self.times[k] + eps_k);
        (position.distance(&self.anchors[k]) - range).abs() - delta_k
    }

    /// Error-variable part of a decision vector.
    pub fn error_part<'a>(&self, point: &'a [f64]) -> &'a [f64] {
        &point[2..DIMENSION]
    }
}

/// Builds the unwatermarked program for a scenario: unit objective weights,
/// no watermark constraints, default bounds.
pub fn build_cover_medium(scenario: &SensorScenario) -> Result<CoverMedium> {
    scenario.validate()?;
    Ok(CoverMedium {
        schema_version: default_schema_version(),
        anchors: scenario.anchors(),
        temperature_c: scenario.temperature_c,
        times: scenario.times(),
        objective_coefficients: [1.0; VARIABLE_COUNT],
        watermark_constraints: Vec::new(),
        bounds: VariableBounds::default(),
    })
}

/// How synthetic scenarios obtain their times of flight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioMode {
    /// Times are computed exactly from a hidden ground-truth node, so the
    /// zero-error solution reproduces that node.
    NoiseFree,
    /// Times are drawn independently of the geometry, leaving the program to
    /// reconcile inconsistent observations through its error variables.
    Sampled,
}

/// Temperature model for synthetic scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemperatureSpec {
    Fixed(f64),
    /// Gaussian on `[0, 1]` (mean 0.5, sd 0.15, rejection sampled).
    Unit,
}

/// Sampling ranges for synthetic scenarios.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRanges {
    pub anchor_min: f64,
    pub anchor_max: f64,
    pub time_min: f64,
    pub time_max: f64,
    pub temperature: TemperatureSpec,
}

impl Default for ScenarioRanges {
    /// Unit-square anchors, times on `[0.02, 0.1]`, unit-interval Gaussian
    /// temperature.
    fn default() -> Self {
        ScenarioRanges {
            anchor_min: 0.0,
            anchor_max: 1.0,
            time_min: 0.02,
            time_max: 0.1,
            temperature: TemperatureSpec::Unit,
        }
    }
}

impl ScenarioRanges {
    /// Regime for solver-backed trials: anchors inside the position box,
    /// with reported times short enough that positions near the optimum
    /// undershoot their true anchor distances. Minimizing the resulting
    /// weighted range-error sum is a Fermat–Weber problem over the anchors,
    /// so the optimum lies strictly inside the box (never clamped to a face
    /// or corner) and carries error mass on every range variable: the
    /// watermark bounds genuinely constrain the solution set, and every
    /// selection keeps slack for a bound attack to squeeze.
    pub fn undershooting_field() -> Self {
        ScenarioRanges {
            anchor_min: -100.0,
            anchor_max: 100.0,
            time_min: 0.02,
            time_max: 0.05,
            temperature: TemperatureSpec::Fixed(36.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchor_min.is_nan()
            || self.anchor_max.is_nan()
            || self.anchor_min >= self.anchor_max
        {
            return Err(Error::invalid("anchor range must be non-empty"));
        }
        if self.time_min.is_nan()
            || self.time_max.is_nan()
            || self.time_min <= 0.0
            || self.time_min > self.time_max
        {
            return Err(Error::invalid("time range must be positive and ordered"));
        }
        if let TemperatureSpec::Fixed(t) = self.temperature {
            if !t.is_finite() {
                return Err(Error::invalid("fixed temperature must be finite"));
            }
        }
        Ok(())
    }
}

/// Synthesizes a reproducible scenario with the default ranges.
pub fn synthesize_scenario(seed: u64, mode: ScenarioMode) -> SensorScenario {
    synthesize_scenario_with(seed, mode, &ScenarioRanges::default())
}

/// Synthesizes a reproducible scenario with explicit ranges.
///
/// Anchors are drawn uniformly from the anchor square, rejecting nearly
/// collinear triples so the geometry stays well posed. Noise-free mode picks
/// a ground-truth node strictly inside the anchor triangle and derives every
/// time of flight as `distance / speed`; sampled mode draws times uniformly
/// from the time range.
pub fn synthesize_scenario_with(
    seed: u64,
    mode: ScenarioMode,
    ranges: &ScenarioRanges,
) -> SensorScenario {
    let mut rng = stream_rng(seed, "scenario", 0);
    let span = ranges.anchor_max - ranges.anchor_min;
    let min_area = 0.05 * span * span;

    let draw_point = |rng: &mut rand_chacha::ChaCha8Rng| -> Point {
        Point::new(
            rng.gen_range(ranges.anchor_min..=ranges.anchor_max),
            rng.gen_range(ranges.anchor_min..=ranges.anchor_max),
        )
    };
    let (a, b, c) = loop {
        let a = draw_point(&mut rng);
        let b = draw_point(&mut rng);
        let c = draw_point(&mut rng);
        let area = 0.5 * ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs();
        if area >= min_area {
            break (a, b, c);
        }
    };

    let temperature_c = match ranges.temperature {
        TemperatureSpec::Fixed(t) => t,
        TemperatureSpec::Unit => truncated_normal01(&mut rng),
    };

    match mode {
        ScenarioMode::NoiseFree => {
            // Interior point: mix the centroid toward one corner, staying
            // strictly inside so the position stays observable.
            let centroid = Point::new((a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0);
            let corner = [a, b, c][rng.gen_range(0..3)];
            let mix = rng.gen_range(0.0..0.6);
            let truth = Point::new(
                centroid.x + mix * (corner.x - centroid.x),
                centroid.y + mix * (corner.y - centroid.y),
            );
            let speed = speed_of_sound(temperature_c);
            SensorScenario {
                anchor_a: a,
                anchor_b: b,
                anchor_c: c,
                temperature_c,
                time_da: truth.distance(&a) / speed,
                time_db: truth.distance(&b) / speed,
                time_dc: truth.distance(&c) / speed,
                ground_truth: Some(truth),
            }
        }
        ScenarioMode::Sampled => SensorScenario {
            anchor_a: a,
            anchor_b: b,
            anchor_c: c,
            temperature_c,
            time_da: rng.gen_range(ranges.time_min..=ranges.time_max),
            time_db: rng.gen_range(ranges.time_min..=ranges.time_max),
            time_dc: rng.gen_range(ranges.time_min..=ranges.time_max),
            ground_truth: None,
        },
    }
}
