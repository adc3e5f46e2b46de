//! Derivative-free solver for cover-medium programs.
//!
//! Strategy: exterior quadratic penalty on every constraint violation
//! (anchor residuals, watermark sums, variable box), minimized per penalty
//! level by Nelder-Mead, with the penalty weight escalating geometrically
//! across outer iterations and a deterministic multistart over box-uniform
//! points. The search is fully sequential and branch-stable, so identical
//! `(problem, config)` pairs produce bit-identical solutions — detection
//! leans on that to turn "the attack did not change the effective program"
//! into exact floating-point ties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kolmogorov::{ConstraintSelection, VARIABLE_COUNT};
use crate::sampling::stream_rng;
use crate::trilateration::{CoverMedium, Point, WatermarkConstraint, ANCHOR_COUNT, DIMENSION};
use rand::Rng;

/// Per-stage Nelder-Mead evaluation budget.
const INNER_EVALUATION_BUDGET: usize = 1600;
/// Evaluation budget for the final refinement pass at the top penalty level.
const POLISH_EVALUATION_BUDGET: usize = 900;
/// Relative size of the initial simplex in the first outer iteration.
const INITIAL_STEP_FRACTION: f64 = 0.12;
/// Geometric decay of the simplex size across outer iterations.
const STEP_DECAY: f64 = 0.45;
/// Slack the reduced-space refinement tries to keep between a watermark
/// constraint's sum and its bound, so reported solutions sit robustly in
/// the interior rather than exactly on a constraint boundary.
const STANDOFF_SLACK: f64 = 1e-4;
/// Weight of the soft interior-standoff term in the reduced objective.
const STANDOFF_WEIGHT: f64 = 1e6;
/// Weight of the hard infeasibility term in the reduced objective. Kept far
/// above the standoff weight so that when tight constraints make the full
/// standoff unattainable, the search gives up standoff slack rather than
/// stepping outside the feasible set.
const BOUND_WEIGHT: f64 = 1e12;
/// Terminal step floor of the reduced search (relative to the coordinate
/// scale) for unconstrained programs: far below every reconstruction
/// tolerance, so stopping here costs nothing.
const COARSE_RESOLUTION: f64 = 2e-5;
/// Terminal step floor for programs carrying watermark constraints. These
/// terminate much finer, so that activity decisions at constraint
/// boundaries — and the exact-tie comparisons detection builds on them —
/// are made at the tightest reliable resolution.
const FINE_RESOLUTION: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub penalty_initial: f64,
    pub penalty_growth: f64,
    pub outer_iterations: usize,
    pub inner_tolerance: f64,
    pub constraint_tolerance: f64,
    pub multistart_count: usize,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            penalty_initial: 10.0,
            penalty_growth: 10.0,
            outer_iterations: 8,
            inner_tolerance: 1e-9,
            constraint_tolerance: 1e-6,
            multistart_count: 16,
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.penalty_initial.is_finite() || self.penalty_initial <= 0.0 {
            return Err(Error::invalid("penalty_initial must be positive"));
        }
        if !self.penalty_growth.is_finite() || self.penalty_growth <= 1.0 {
            return Err(Error::invalid("penalty_growth must exceed 1"));
        }
        if self.outer_iterations == 0 {
            return Err(Error::invalid("outer_iterations must be at least 1"));
        }
        if !self.inner_tolerance.is_finite()
            || self.inner_tolerance <= 0.0
            || !self.constraint_tolerance.is_finite()
            || self.constraint_tolerance <= 0.0
        {
            return Err(Error::invalid("tolerances must be positive"));
        }
        if self.multistart_count == 0 {
            return Err(Error::invalid("multistart_count must be at least 1"));
        }
        Ok(())
    }
}

/// Solver output: recovered position plus the seven error variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub position: Point,
    pub error_vector: [f64; VARIABLE_COUNT],
    pub objective_value: f64,
    pub feasible: bool,
    pub max_constraint_violation: f64,
    pub start_index: usize,
}

impl Solution {
    /// Reassembles the full decision vector.
    pub fn point(&self) -> [f64; DIMENSION] {
        let mut point = [0.0; DIMENSION];
        point[0] = self.position.x;
        point[1] = self.position.y;
        point[2..].copy_from_slice(&self.error_vector);
        point
    }
}

/// Pure evaluation of a decision vector against every constraint group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub anchor_violations: [f64; ANCHOR_COUNT],
    pub watermark_violations: Vec<f64>,
    pub box_violation: f64,
}

impl Evaluation {
    pub fn max_violation(&self) -> f64 {
        self.anchor_violations
            .iter()
            .chain(self.watermark_violations.iter())
            .fold(self.box_violation, |acc, &v| acc.max(v))
    }

    pub fn is_feasible(&self, tolerance: f64) -> bool {
        self.max_violation() <= tolerance
    }
}

/// Evaluates objective and per-constraint violations at `point`.
pub fn evaluate(problem: &CoverMedium, point: &[f64]) -> Result<Evaluation> {
    if point.len() != DIMENSION {
        return Err(Error::invalid(format!(
            "expected {DIMENSION} variables, got {}",
            point.len()
        )));
    }
    let error = problem.error_part(point);
    Ok(Evaluation {
        objective: problem.objective(error),
        anchor_violations: std::array::from_fn(|k| problem.anchor_residual(k, point).max(0.0)),
        watermark_violations: problem
            .watermark_constraints
            .iter()
            .map(|c| c.violation(error))
            .collect(),
        box_violation: problem.bounds.violation(point),
    })
}

/// Rewrites the watermark-constraint list into a canonical form that
/// preserves the feasible set: constraints are keyed by their variable
/// selection, only the tightest bound per selection is kept, vacuous
/// always-true constraints are dropped, and the survivors are sorted.
///
/// Verbatim duplicates and dominated same-selection copies therefore leave
/// the canonical program — and the solver's arithmetic path — unchanged.
pub fn canonical_form(problem: &CoverMedium) -> CoverMedium {
    let mut kept: Vec<WatermarkConstraint> = Vec::new();
    for constraint in &problem.watermark_constraints {
        if constraint.selection.is_vacuous() && constraint.tau >= 0.0 {
            continue;
        }
        match kept
            .iter_mut()
            .find(|c| c.selection == constraint.selection)
        {
            Some(existing) => existing.tau = existing.tau.min(constraint.tau),
            None => kept.push(constraint.clone()),
        }
    }
    kept.sort_by(|a, b| {
        a.selection
            .mask()
            .cmp(&b.selection.mask())
            .then(a.tau.total_cmp(&b.tau))
    });
    CoverMedium {
        watermark_constraints: kept,
        ..problem.clone()
    }
}

fn validate_problem(problem: &CoverMedium) -> Result<()> {
    let finite = |xs: &[f64]| xs.iter().all(|v| v.is_finite());
    if !problem
        .anchors
        .iter()
        .all(|a| a.x.is_finite() && a.y.is_finite())
        || !problem.temperature_c.is_finite()
        || !finite(&problem.times)
        || !finite(&problem.objective_coefficients)
        || !finite(&problem.bounds.lower)
        || !finite(&problem.bounds.upper)
    {
        return Err(Error::invalid("problem contains non-finite data"));
    }
    if problem
        .watermark_constraints
        .iter()
        .any(|c| !c.tau.is_finite())
    {
        return Err(Error::invalid("watermark bound is not finite"));
    }
    Ok(())
}

/// Sum of squared violations with anchor residuals converted from meters to
/// range-error units (dividing by the speed of sound), so every constraint
/// group descends on a commensurate scale during feasibility restoration.
fn scaled_violation(problem: &CoverMedium, point: &[f64; DIMENSION]) -> f64 {
    let speed = problem.effective_speed(0.0);
    let error = problem.error_part(point);
    let mut total = 0.0;
    for k in 0..ANCHOR_COUNT {
        let v = problem.anchor_residual(k, point).max(0.0) / speed;
        total += v * v;
    }
    for c in &problem.watermark_constraints {
        let v = c.violation(error);
        total += v * v;
    }
    for ((&lo, &hi), &p) in problem
        .bounds
        .lower
        .iter()
        .zip(&problem.bounds.upper)
        .zip(point)
    {
        let v = (lo - p).max(p - hi).max(0.0);
        total += v * v;
    }
    total
}

/// Scales a start's selected error variables down until every watermark
/// constraint holds with strict interior margin. Keeps starts inside the
/// watermark polytope (where the penalty landscape is smooth), and gives
/// constrained programs a start — hence a search path — that provably
/// differs from the unconstrained program's whenever a bound sits close to
/// the repaired error levels.
fn watermark_interior_repair(problem: &CoverMedium, point: &mut [f64; DIMENSION]) {
    for constraint in &problem.watermark_constraints {
        let margin = (1e-3 * constraint.tau.abs()).max(1e-4);
        let target = (constraint.tau - margin).max(0.0);
        let indexes: Vec<usize> = constraint
            .selection
            .variables()
            .map(|v| 2 + v.offset())
            .collect();
        let positive: f64 = indexes.iter().map(|&i| point[i].max(0.0)).sum();
        let rest: f64 = indexes.iter().map(|&i| point[i].min(0.0)).sum();
        if positive + rest > target && positive > 0.0 {
            // Shrink only the positive contributors; negative components
            // already pull the sum down.
            let factor = ((target - rest) / positive).clamp(0.0, 1.0);
            for &i in &indexes {
                if point[i] > 0.0 {
                    point[i] *= factor;
                }
            }
        }
    }
}

/// Quadratic penalty objective at weight `rho`.
fn penalized(problem: &CoverMedium, point: &[f64], rho: f64) -> f64 {
    let error = problem.error_part(point);
    let mut penalty = 0.0;
    for k in 0..ANCHOR_COUNT {
        let v = problem.anchor_residual(k, point).max(0.0);
        penalty += v * v;
    }
    for c in &problem.watermark_constraints {
        let v = c.violation(error);
        penalty += v * v;
    }
    for ((&lo, &hi), &p) in problem
        .bounds
        .lower
        .iter()
        .zip(&problem.bounds.upper)
        .zip(point)
    {
        let v = (lo - p).max(p - hi).max(0.0);
        penalty += v * v;
    }
    problem.objective(error) + rho * penalty
}

/// Nelder-Mead with standard coefficients; terminates on relative value
/// spread, simplex collapse, or the evaluation budget.
fn nelder_mead<F: Fn(&[f64; DIMENSION]) -> f64>(
    f: &F,
    start: [f64; DIMENSION],
    steps: &[f64; DIMENSION],
    budget: usize,
    tolerance: f64,
) -> ([f64; DIMENSION], f64) {
    const N: usize = DIMENSION;
    let mut vertices = Vec::with_capacity(N + 1);
    vertices.push(start);
    for i in 0..N {
        let mut v = start;
        v[i] += steps[i];
        vertices.push(v);
    }
    let mut values: Vec<f64> = vertices.iter().map(f).collect();
    let mut evaluations = N + 1;

    loop {
        let mut order: Vec<usize> = (0..=N).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let reordered: Vec<[f64; DIMENSION]> = order.iter().map(|&i| vertices[i]).collect();
        let revalued: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        vertices = reordered;
        values = revalued;

        let spread = values[N] - values[0];
        if spread <= tolerance * (1.0 + values[0].abs()) || evaluations >= budget {
            break;
        }
        let width = (0..N)
            .map(|i| {
                vertices[1..]
                    .iter()
                    .map(|v| (v[i] - vertices[0][i]).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if width <= 1e-14 {
            break;
        }

        let mut centroid = [0.0; N];
        for vertex in &vertices[..N] {
            for i in 0..N {
                centroid[i] += vertex[i] / N as f64;
            }
        }
        let worst = vertices[N];
        let blend = |t: f64| -> [f64; DIMENSION] {
            std::array::from_fn(|i| centroid[i] + t * (centroid[i] - worst[i]))
        };

        let reflected = blend(1.0);
        let f_reflected = f(&reflected);
        evaluations += 1;
        if f_reflected < values[0] {
            let expanded = blend(2.0);
            let f_expanded = f(&expanded);
            evaluations += 1;
            if f_expanded < f_reflected {
                vertices[N] = expanded;
                values[N] = f_expanded;
            } else {
                vertices[N] = reflected;
                values[N] = f_reflected;
            }
        } else if f_reflected < values[N - 1] {
            vertices[N] = reflected;
            values[N] = f_reflected;
        } else {
            let (contracted, f_needed) = if f_reflected < values[N] {
                (blend(0.5), f_reflected)
            } else {
                (blend(-0.5), values[N])
            };
            let f_contracted = f(&contracted);
            evaluations += 1;
            if f_contracted < f_needed {
                vertices[N] = contracted;
                values[N] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                let anchor = vertices[0];
                for j in 1..=N {
                    for (v, a) in vertices[j].iter_mut().zip(&anchor) {
                        *v = a + 0.5 * (*v - a);
                    }
                    values[j] = f(&vertices[j]);
                }
                evaluations += N;
            }
        }
    }

    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    (vertices[best], values[best])
}

fn box_spans(problem: &CoverMedium) -> [f64; DIMENSION] {
    std::array::from_fn(|i| {
        let span = problem.bounds.upper[i] - problem.bounds.lower[i];
        if span.is_finite() && span > 0.0 {
            span
        } else {
            1.0
        }
    })
}

/// Per-variable simplex scales. Error variables use their box span, but the
/// position scale comes from the anchor geometry: optima live in or near the
/// anchor field (or on the box face closest to it), which can be orders of
/// magnitude smaller than the position box itself.
fn step_scales(problem: &CoverMedium) -> [f64; DIMENSION] {
    let spans = box_spans(problem);
    let centroid = anchor_centroid(problem);
    let radius = problem
        .anchors
        .iter()
        .map(|a| a.distance(&centroid))
        .fold(0.0, f64::max);
    let mut scales = spans;
    for i in 0..2 {
        scales[i] = (2.0 * radius).max(1.0).min(spans[i]);
    }
    scales
}

fn anchor_centroid(problem: &CoverMedium) -> Point {
    let n = problem.anchors.len() as f64;
    Point::new(
        problem.anchors.iter().map(|a| a.x).sum::<f64>() / n,
        problem.anchors.iter().map(|a| a.y).sum::<f64>() / n,
    )
}

/// Classic linearized multilateration estimate: treat the stated times at
/// the stated temperature as exact ranges, subtract the circle equations
/// pairwise to get a 2x2 linear system, and solve it. Exact on consistent
/// (noise-free) measurements; a serviceable rough guess otherwise. Returns
/// `None` when the anchors are too close to collinear.
fn linearized_position(problem: &CoverMedium) -> Option<Point> {
    let speed = problem.effective_speed(0.0);
    let r: Vec<f64> = problem.times.iter().map(|t| speed * t).collect();
    let a = &problem.anchors;
    let row = |k: usize| {
        [
            2.0 * (a[k].x - a[0].x),
            2.0 * (a[k].y - a[0].y),
            r[0] * r[0] - r[k] * r[k] + (a[k].x * a[k].x + a[k].y * a[k].y)
                - (a[0].x * a[0].x + a[0].y * a[0].y),
        ]
    };
    let [m11, m12, b1] = row(1);
    let [m21, m22, b2] = row(2);
    let det = m11 * m22 - m12 * m21;
    let scale = (m11.abs() + m12.abs() + m21.abs() + m22.abs()).max(1e-12);
    if det.abs() <= 1e-9 * scale * scale {
        return None;
    }
    let x = (b1 * m22 - b2 * m12) / det;
    let y = (m11 * b2 - m21 * b1) / det;
    if x.is_finite() && y.is_finite() {
        Some(Point::new(x, y))
    } else {
        None
    }
}

/// Deterministic starts informed by the problem geometry: position at the
/// linearized multilateration estimate (start 0) or the anchor centroid
/// (start 1), clamped into the box, with range errors repaired per anchor —
/// each range-error variable set so its anchor residual closes exactly, any
/// leftover shifted onto the slack variable. Uniform multistart alone
/// rarely lands inside the (often tiny) anchor field, so these starts carry
/// the precision-critical cases.
fn informed_start(problem: &CoverMedium, which: usize) -> [f64; DIMENSION] {
    let position = match which {
        0 => linearized_position(problem).unwrap_or_else(|| anchor_centroid(problem)),
        _ => anchor_centroid(problem),
    };
    let clamp = |raw: f64, i: usize| {
        let lower = problem.bounds.lower[i];
        let upper = problem.bounds.upper[i];
        if upper >= lower {
            raw.clamp(lower, upper)
        } else {
            0.5 * (lower + upper)
        }
    };
    let mut point = [0.0; DIMENSION];
    point[0] = clamp(position.x, 0);
    point[1] = clamp(position.y, 1);
    point[2] = clamp(0.0, 2);
    let speed = problem.effective_speed(point[2]);
    let at = Point::new(point[0], point[1]);
    for k in 0..ANCHOR_COUNT {
        let distance = at.distance(&problem.anchors[k]);
        let wanted = distance / speed - problem.times[k];
        point[3 + k] = clamp(wanted, 3 + k);
        let leftover = (distance - speed * (problem.times[k] + point[3 + k])).abs();
        point[6 + k] = clamp(leftover, 6 + k);
    }
    point
}

struct Candidate {
    point: [f64; DIMENSION],
    objective: f64,
    violation: f64,
}

impl Candidate {
    fn at(problem: &CoverMedium, point: [f64; DIMENSION]) -> Candidate {
        let evaluation = evaluate(problem, &point).expect("dimension is fixed");
        Candidate {
            point,
            objective: evaluation.objective,
            violation: evaluation.max_violation(),
        }
    }

    /// Feasible beats infeasible; within a class, lower objective
    /// (respectively lower violation) wins. Strict, so earlier candidates
    /// survive exact ties.
    fn beats(&self, other: &Candidate, tolerance: f64) -> bool {
        match (self.violation <= tolerance, other.violation <= tolerance) {
            (true, true) => self.objective < other.objective,
            (true, false) => true,
            (false, true) => false,
            (false, false) => self.violation < other.violation,
        }
    }
}

/// Runs the full penalty schedule from one starting point and returns the
/// best true-constraint candidate seen along the way — the start itself,
/// every outer endpoint, and every refinement endpoint all compete. The
/// penalty subproblems at low weight deliberately relax the constraints, so
/// their endpoints can drift away from an already-optimal start; candidate
/// tracking makes that drift harmless.
fn minimize_from(
    problem: &CoverMedium,
    config: &SolverConfig,
    start: [f64; DIMENSION],
) -> [f64; DIMENSION] {
    let scales = step_scales(problem);
    let mut current = start;
    watermark_interior_repair(problem, &mut current);
    let mut best = Candidate::at(problem, current);
    // Feasibility restoration: descend pure constraint violation first, so
    // the penalty schedule starts at (or near) the feasible set instead of
    // having to climb into a narrow polytope after its simplex has already
    // shrunk.
    let restore = |p: &[f64; DIMENSION]| scaled_violation(problem, p);
    for (fraction, budget) in [
        (0.05, INNER_EVALUATION_BUDGET),
        (1e-4, POLISH_EVALUATION_BUDGET),
    ] {
        let steps = std::array::from_fn(|i| (scales[i] * fraction).max(1e-9));
        (current, _) = nelder_mead(&restore, current, &steps, budget, 1e-16);
    }
    let candidate = Candidate::at(problem, current);
    if candidate.beats(&best, config.constraint_tolerance) {
        best = candidate;
    }
    let mut rho = config.penalty_initial;
    let mut scale = INITIAL_STEP_FRACTION;
    for _ in 0..config.outer_iterations {
        let steps = std::array::from_fn(|i| (scales[i] * scale).max(1e-7));
        let objective = |p: &[f64; DIMENSION]| penalized(problem, p, rho);
        (current, _) = nelder_mead(
            &objective,
            current,
            &steps,
            INNER_EVALUATION_BUDGET,
            config.inner_tolerance,
        );
        let candidate = Candidate::at(problem, current);
        if candidate.beats(&best, config.constraint_tolerance) {
            best = candidate;
        }
        rho *= config.penalty_growth;
        scale *= STEP_DECAY;
    }
    // Refinement at the final penalty level, resumed from the best candidate
    // so far. Each pass re-inflates a small simplex so the search keeps
    // crawling along the curved feasible valley instead of stopping where
    // the previous simplex collapsed; this tightens the endpoint so
    // exact-tie comparisons in detection stay well separated from genuine
    // displacements.
    let rho_final = rho / config.penalty_growth;
    let objective = |p: &[f64; DIMENSION]| penalized(problem, p, rho_final);
    current = best.point;
    for step_fraction in [1e-3, 3e-5, 3e-6] {
        let steps = std::array::from_fn(|i| (scales[i] * step_fraction).max(1e-9));
        (current, _) = nelder_mead(&objective, current, &steps, POLISH_EVALUATION_BUDGET, 1e-15);
        let candidate = Candidate::at(problem, current);
        if candidate.beats(&best, config.constraint_tolerance) {
            best = candidate;
        }
    }
    best.point
}

/// Evaluation budget for one reduced-space compass search.
const REDUCED_EVALUATION_BUDGET: usize = 6000;

/// Total clamp that never panics on an inverted box (yields the upper end);
/// downstream feasibility checks report inverted boxes as violations.
fn clamp_into(value: f64, lower: f64, upper: f64) -> f64 {
    value.max(lower).min(upper)
}

/// Closed-form optimal completion of the seven error variables given the
/// position and clock error. The cost is linear in the error variables and
/// the anchors couple only through position and clock, so each anchor's
/// range/slack pair minimizes `c_e·eps + c_d·delta` subject to
/// `|residual - speed·eps| <= delta` and the box — a piecewise-linear
/// problem whose optimum sits at one of five breakpoints. Returns `None`
/// when some anchor cannot be made feasible at this position.
fn complete_errors(
    problem: &CoverMedium,
    costs: &[f64; VARIABLE_COUNT],
    x: f64,
    y: f64,
    eps_t: f64,
) -> Option<[f64; DIMENSION]> {
    let speed = problem.effective_speed(eps_t);
    if speed.is_nan() || speed <= 0.0 {
        return None;
    }
    let mut point = [0.0; DIMENSION];
    point[0] = x;
    point[1] = y;
    point[2] = eps_t;
    let at = Point::new(x, y);
    for k in 0..ANCHOR_COUNT {
        let residual = at.distance(&problem.anchors[k]) - speed * problem.times[k];
        let (eps_lo, eps_hi) = (problem.bounds.lower[3 + k], problem.bounds.upper[3 + k]);
        let (delta_lo, delta_hi) = (problem.bounds.lower[6 + k], problem.bounds.upper[6 + k]);
        if eps_lo > eps_hi || delta_lo > delta_hi {
            return None;
        }
        let (c_eps, c_delta) = (costs[1 + k], costs[4 + k]);
        let mut best: Option<(f64, f64, f64)> = None;
        for raw in [
            eps_lo,
            eps_hi,
            residual / speed,
            (residual - delta_lo) / speed,
            (residual + delta_lo) / speed,
        ] {
            if !raw.is_finite() {
                continue;
            }
            let eps = clamp_into(raw, eps_lo, eps_hi);
            let needed = (residual - speed * eps).abs();
            if needed > delta_hi {
                continue;
            }
            let delta = needed.max(delta_lo);
            let cost = c_eps * eps + c_delta * delta;
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                best = Some((cost, eps, delta));
            }
        }
        let (_, eps, delta) = best?;
        point[3 + k] = eps;
        point[6 + k] = delta;
    }
    Some(point)
}

/// Reduced objective over (x, y, eps_t): linear cost of the completed error
/// vector plus a soft interior-standoff penalty that both excludes
/// watermark-infeasible completions and prefers solutions sitting
/// `STANDOFF_SLACK` inside each watermark bound.
fn reduced_cost(
    problem: &CoverMedium,
    costs: &[f64; VARIABLE_COUNT],
    coords: &[f64; 3],
) -> (f64, Option<[f64; DIMENSION]>) {
    let Some(point) = complete_errors(problem, costs, coords[0], coords[1], coords[2]) else {
        return (f64::INFINITY, None);
    };
    let error = problem.error_part(&point);
    let mut value = costs.iter().zip(error).map(|(c, e)| c * e).sum::<f64>();
    for constraint in &problem.watermark_constraints {
        let lhs = constraint.lhs(error);
        let over = (lhs - constraint.tau).max(0.0);
        value += BOUND_WEIGHT * over * over;
        let shortfall = (lhs - (constraint.tau - STANDOFF_SLACK)).max(0.0);
        value += STANDOFF_WEIGHT * shortfall * shortfall;
    }
    if !value.is_finite() {
        return (f64::INFINITY, None);
    }
    (value, Some(point))
}

/// Compass (coordinate pattern) search over the reduced coordinates with
/// closed-form completion at every probe. First-improvement acceptance in a
/// fixed dimension order and strict-descent comparisons keep the search
/// bit-deterministic; steps halve after every unimproved sweep.
fn reduced_refine(
    problem: &CoverMedium,
    costs: &[f64; VARIABLE_COUNT],
    seed: [f64; 3],
    resolution: f64,
) -> Option<[f64; DIMENSION]> {
    let spans = box_spans(problem);
    let scales = step_scales(problem);
    let clamp_dim =
        |v: f64, i: usize| clamp_into(v, problem.bounds.lower[i], problem.bounds.upper[i]);
    let mut coords = [
        clamp_dim(seed[0], 0),
        clamp_dim(seed[1], 1),
        clamp_dim(seed[2], 2),
    ];
    let mut steps = [0.25 * scales[0], 0.25 * scales[1], 0.25 * spans[2]];
    let floors = [
        resolution * scales[0].max(1.0),
        resolution * scales[1].max(1.0),
        resolution * spans[2].max(1.0),
    ];
    let (mut value, mut completed) = reduced_cost(problem, costs, &coords);
    let mut evaluations = 1;
    while evaluations < REDUCED_EVALUATION_BUDGET && (0..3).any(|i| steps[i] > floors[i]) {
        let mut improved = false;
        for dim in 0..3 {
            for sign in [1.0, -1.0] {
                let mut trial = coords;
                trial[dim] = clamp_dim(trial[dim] + sign * steps[dim], dim);
                if trial[dim] == coords[dim] {
                    continue;
                }
                let (trial_value, trial_completed) = reduced_cost(problem, costs, &trial);
                evaluations += 1;
                if trial_value < value {
                    coords = trial;
                    value = trial_value;
                    completed = trial_completed;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for step in &mut steps {
                *step *= 0.5;
            }
        }
    }
    completed
}

/// Reduced-space seeds: the linearized multilateration estimate, the anchor
/// centroid, and (when available) an incumbent point from the full-space
/// search.
fn reduced_seeds(problem: &CoverMedium, incumbent: Option<[f64; 3]>) -> Vec<[f64; 3]> {
    let eps_t = clamp_into(0.0, problem.bounds.lower[2], problem.bounds.upper[2]);
    let linearized = linearized_position(problem).unwrap_or_else(|| anchor_centroid(problem));
    let centroid = anchor_centroid(problem);
    let mut seeds = vec![
        [linearized.x, linearized.y, eps_t],
        [centroid.x, centroid.y, eps_t],
    ];
    seeds.extend(incumbent);
    seeds
}

fn uniform_start(problem: &CoverMedium, rng_seed: u64, index: usize) -> [f64; DIMENSION] {
    let mut rng = stream_rng(rng_seed, "solver-start", index as u64);
    std::array::from_fn(|i| {
        let lower = problem.bounds.lower[i];
        let upper = problem.bounds.upper[i];
        if upper > lower {
            rng.gen_range(lower..=upper)
        } else {
            // Degenerate or inverted box: center the start between the stated
            // endpoints and let the penalty report the inconsistency.
            0.5 * (lower + upper)
        }
    })
}

/// Minimizes the problem's objective subject to all of its constraints.
///
/// Works on the canonical form of the watermark-constraint list, so
/// redundant duplicates do not perturb the search. Returns the feasible
/// candidate with the lowest objective (ties broken by lowest start index),
/// or an infeasibility error carrying the smallest violation seen.
pub fn solve(problem: &CoverMedium, config: &SolverConfig) -> Result<Solution> {
    config.validate()?;
    validate_problem(problem)?;
    let canonical = canonical_form(problem);

    let mut best: Option<Solution> = None;
    let mut best_violation = f64::INFINITY;
    for index in 0..config.multistart_count {
        // Starts 0 and 1 are geometry-informed; the rest are box-uniform.
        let start = if index < 2 {
            informed_start(&canonical, index)
        } else {
            uniform_start(&canonical, config.rng_seed, index)
        };
        let point = minimize_from(&canonical, config, start);
        let evaluation = evaluate(&canonical, &point)?;
        let violation = evaluation.max_violation();
        best_violation = best_violation.min(violation);
        if violation > config.constraint_tolerance {
            continue;
        }
        let candidate = Solution {
            position: Point::new(point[0], point[1]),
            error_vector: std::array::from_fn(|i| point[2 + i]),
            objective_value: evaluation.objective,
            feasible: true,
            max_constraint_violation: violation,
            start_index: index,
        };
        let better = match &best {
            None => true,
            Some(current) => candidate.objective_value < current.objective_value,
        };
        if better {
            best = Some(candidate);
        }
    }
    // Reduced-space refinement: search (x, y, eps_t) with the remaining
    // variables completed in closed form. On programs whose watermark
    // constraints are inactive at the optimum this lands within search
    // resolution of the exact minimizer, which the full-space polytope crawl
    // cannot match; the refined candidates compete on the same terms.
    let resolution = if canonical.watermark_constraints.is_empty() {
        COARSE_RESOLUTION
    } else {
        FINE_RESOLUTION
    };
    let incumbent = best
        .as_ref()
        .map(|s| [s.position.x, s.position.y, s.error_vector[0]]);
    for (offset, seed) in reduced_seeds(&canonical, incumbent).into_iter().enumerate() {
        let Some(point) = reduced_refine(
            &canonical,
            &canonical.objective_coefficients,
            seed,
            resolution,
        ) else {
            continue;
        };
        let evaluation = evaluate(&canonical, &point)?;
        let violation = evaluation.max_violation();
        best_violation = best_violation.min(violation);
        if violation > config.constraint_tolerance {
            continue;
        }
        let candidate = Solution {
            position: Point::new(point[0], point[1]),
            error_vector: std::array::from_fn(|i| point[2 + i]),
            objective_value: evaluation.objective,
            feasible: true,
            max_constraint_violation: violation,
            start_index: config.multistart_count + offset,
        };
        let better = match &best {
            None => true,
            Some(current) => candidate.objective_value < current.objective_value,
        };
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or(Error::Infeasible { best_violation })
}

/// Attacker-side probe: searches for a point feasible for `problem` that
/// drives the given selections' sums as low as the box and distance
/// constraints allow. Returns the per-selection sums at the best point
/// found, or `None` when nothing close to feasible was reached. The sums
/// bound from below what any solution of `problem` can achieve on those
/// selections, so bounds sampled above them stay satisfiable.
pub(crate) fn constrained_minimum_probe(
    problem: &CoverMedium,
    selections: &[ConstraintSelection],
    rng_seed: u64,
) -> Option<Vec<f64>> {
    let canonical = canonical_form(problem);
    let scales = step_scales(&canonical);
    let selected_sums = |error: &[f64]| -> f64 {
        selections
            .iter()
            .map(|s| s.variables().map(|v| error[v.offset()]).sum::<f64>())
            .sum()
    };
    let pressed = |p: &[f64; DIMENSION]| {
        selected_sums(canonical.error_part(p)) + 1e6 * scaled_violation(&canonical, p)
    };
    // The pressed objective is linear in the error variables (each variable
    // weighted by how many selections contain it), so the reduced-space
    // search applies with those multiplicities as costs.
    let mut multiplicities = [0.0; VARIABLE_COUNT];
    for selection in selections {
        for variable in selection.variables() {
            multiplicities[variable.offset()] += 1.0;
        }
    }
    let mut best: Option<(f64, [f64; DIMENSION])> = None;
    let consider = |point: [f64; DIMENSION], best: &mut Option<(f64, [f64; DIMENSION])>| {
        let evaluation = evaluate(&canonical, &point).expect("dimension is fixed");
        if evaluation.max_violation() > 1e-3 {
            return;
        }
        let score = selected_sums(canonical.error_part(&point));
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            *best = Some((score, point));
        }
    };
    for index in 0..3 {
        let mut start = if index < 2 {
            informed_start(&canonical, index)
        } else {
            uniform_start(&canonical, rng_seed, 2000 + index)
        };
        watermark_interior_repair(&canonical, &mut start);
        let steps = std::array::from_fn(|i| (scales[i] * 0.15).max(1e-7));
        let (point, _) = nelder_mead(&pressed, start, &steps, INNER_EVALUATION_BUDGET, 1e-12);
        let steps = std::array::from_fn(|i| (scales[i] * 1e-4).max(1e-9));
        let (point, _) = nelder_mead(&pressed, point, &steps, POLISH_EVALUATION_BUDGET, 1e-14);
        consider(point, &mut best);
    }
    let incumbent = best.as_ref().map(|(_, p)| [p[0], p[1], p[2]]);
    for seed in reduced_seeds(&canonical, incumbent) {
        if let Some(point) = reduced_refine(&canonical, &multiplicities, seed, FINE_RESOLUTION) {
            consider(point, &mut best);
        }
    }
    best.map(|(_, point)| {
        let error = canonical.error_part(&point);
        selections
            .iter()
            .map(|s| s.variables().map(|v| error[v.offset()]).sum())
            .collect()
    })
}

/// Searches for any feasible point, ignoring the objective. Returns the
/// smallest maximum violation found and the point achieving it.
pub(crate) fn feasibility_probe(problem: &CoverMedium, rng_seed: u64) -> (f64, [f64; DIMENSION]) {
    let canonical = canonical_form(problem);
    let scales = step_scales(&canonical);
    let violation_only = |p: &[f64; DIMENSION]| scaled_violation(&canonical, p);
    let mut best_point = [0.0; DIMENSION];
    let mut best = f64::INFINITY;
    let consider = |point: [f64; DIMENSION], best: &mut f64, best_point: &mut [f64; DIMENSION]| {
        if let Ok(evaluation) = evaluate(&canonical, &point) {
            let violation = evaluation.max_violation();
            if violation < *best {
                *best = violation;
                *best_point = point;
            }
        }
    };
    for index in 0..4 {
        let mut start = if index < 2 {
            informed_start(&canonical, index)
        } else {
            uniform_start(&canonical, rng_seed, 1000 + index)
        };
        watermark_interior_repair(&canonical, &mut start);
        let steps = std::array::from_fn(|i| (scales[i] * 0.15).max(1e-7));
        let (point, _) = nelder_mead(&violation_only, start, &steps, 900, 1e-12);
        let steps = std::array::from_fn(|i| (scales[i] * 1e-4).max(1e-9));
        let (point, _) = nelder_mead(&violation_only, point, &steps, 500, 1e-14);
        consider(point, &mut best, &mut best_point);
    }
    // The reduced-space search reaches needle-eye feasible sets (tight
    // watermark bounds near a box face) that the full-space descent misses.
    let incumbent = if best.is_finite() {
        Some([best_point[0], best_point[1], best_point[2]])
    } else {
        None
    };
    for seed in reduced_seeds(&canonical, incumbent) {
        if let Some(point) = reduced_refine(
            &canonical,
            &canonical.objective_coefficients,
            seed,
            FINE_RESOLUTION,
        ) {
            consider(point, &mut best, &mut best_point);
        }
    }
    (best, best_point)
}
