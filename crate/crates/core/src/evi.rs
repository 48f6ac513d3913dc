//! Optimistic Bellman operators: extended value iteration over a divergence
//! ball, and the bound-based dagger operators with oscillation detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::divergence::{cb_bound, cb_min_exact, BoundVariant, ConfidenceSet};
use crate::linalg::{dot, sup_dist};
use crate::mdp::{Policy, SspInstance, ValueVector};
use crate::planning::PlanResult;
use crate::{Error, Result};

pub const DEFAULT_DAGGER_MAX_ITER: usize = 100_000;
pub const DEFAULT_CYCLE_WINDOW: usize = 64;
/// A candidate cycle must still close after this many further iterations.
pub const CYCLE_CONFIRM_STEPS: usize = 10_000;

/// One application of the extended operator.
#[derive(Debug, Clone, PartialEq)]
pub struct UHatStep {
    pub values: ValueVector,
    pub policy: Policy,
    /// Minimising row for every `(s, a)`.
    pub rows: Vec<Vec<Vec<f64>>>,
}

fn check_shape(instance: &SspInstance, conf: &ConfidenceSet) -> Result<()> {
    if conf.center.len() != instance.num_states() {
        return Err(Error::LengthMismatch(conf.center.len(), instance.num_states()));
    }
    for s in 0..instance.num_states() {
        if conf.center[s].len() != instance.num_actions(s) {
            return Err(Error::LengthMismatch(conf.center[s].len(), instance.num_actions(s)));
        }
    }
    Ok(())
}

/// `min_a c(s,a) + ⟨P̂, x⟩ + CB_min(s,a)(x)` with the minimising rows.
pub fn apply_u_hat(instance: &SspInstance, conf: &ConfidenceSet, x: &[f64]) -> Result<UHatStep> {
    check_shape(instance, conf)?;
    let n = instance.num_states();
    let mut values = Vec::with_capacity(n);
    let mut policy = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for s in 0..n {
        let (mut best, mut arg) = (f64::INFINITY, 0);
        let mut state_rows = Vec::with_capacity(instance.num_actions(s));
        for a in 0..instance.num_actions(s) {
            let (bonus, row) = cb_min_exact(conf, s, a, x)?;
            let v = instance.cost(s, a) + dot(conf.row(s, a), x) + bonus;
            if v < best {
                best = v;
                arg = a;
            }
            state_rows.push(row);
        }
        values.push(best);
        policy.push(arg);
        rows.push(state_rows);
    }
    Ok(UHatStep { values, policy: Policy(policy), rows })
}

/// Iterate the extended operator from zero to sup-norm tolerance `tol`.
pub fn extended_value_iteration(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    tol: f64,
    max_iter: usize,
) -> Result<PlanResult> {
    extended_value_iteration_capped(instance, conf, tol, max_iter, None)
}

/// As [`extended_value_iteration`], clipping every iterate at `cap`.
pub fn extended_value_iteration_capped(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    tol: f64,
    max_iter: usize,
    cap: Option<f64>,
) -> Result<PlanResult> {
    let mut x = vec![0.0; instance.num_states()];
    for it in 1..=max_iter {
        let step = apply_u_hat(instance, conf, &x)?;
        let mut y = step.values;
        if let Some(b) = cap {
            for v in &mut y {
                *v = v.min(b);
            }
        }
        if sup_dist(&y, &x) <= tol {
            return Ok(PlanResult { values: y, policy: step.policy, iterations: it });
        }
        x = y;
    }
    Err(Error::MaxIterExceeded(max_iter))
}

/// Where the dagger operator is floored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DaggerFloor {
    /// `c + max(⟨P̂,x⟩ + bound, 0)`: never below the cost.
    #[default]
    Cost,
    /// `max(c + ⟨P̂,x⟩ + bound, 0)`.
    Zero,
}

/// The dagger operator; with a policy, the single-policy form.
pub fn apply_dagger0(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    variant: BoundVariant,
    x: &[f64],
    policy: Option<&Policy>,
) -> Result<ValueVector> {
    apply_dagger0_floored(instance, conf, variant, x, policy, DaggerFloor::Cost)
}

pub fn apply_dagger0_floored(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    variant: BoundVariant,
    x: &[f64],
    policy: Option<&Policy>,
    floor: DaggerFloor,
) -> Result<ValueVector> {
    check_shape(instance, conf)?;
    if let Some(p) = policy {
        instance.validate_policy(p)?;
    }
    let mut out = Vec::with_capacity(instance.num_states());
    for s in 0..instance.num_states() {
        let actions: Vec<usize> = match policy {
            Some(p) => vec![p.0[s]],
            None => (0..instance.num_actions(s)).collect(),
        };
        let mut best = f64::INFINITY;
        for a in actions {
            let tail = dot(conf.row(s, a), x) + cb_bound(variant, conf, s, a, x)?;
            let c = instance.cost(s, a);
            let v = match floor {
                DaggerFloor::Cost => c + tail.max(0.0),
                DaggerFloor::Zero => (c + tail).max(0.0),
            };
            best = best.min(v);
        }
        out.push(best);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FixedPointStatus {
    Converged,
    Oscillating,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub status: FixedPointStatus,
    /// Last iterate; the fixed point when converged.
    pub point: ValueVector,
    /// Minimal detected cycle, oldest first.
    pub cycle: Vec<ValueVector>,
    pub iterations: usize,
    pub trace: Option<Vec<ValueVector>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaggerOptions {
    pub x0: Option<ValueVector>,
    pub tol: f64,
    pub max_iter: usize,
    pub cycle_window: usize,
    pub policy: Option<Policy>,
    pub floor: DaggerFloor,
    pub keep_trace: bool,
}

impl Default for DaggerOptions {
    fn default() -> Self {
        DaggerOptions {
            x0: None,
            tol: 1e-12,
            max_iter: DEFAULT_DAGGER_MAX_ITER,
            cycle_window: DEFAULT_CYCLE_WINDOW,
            policy: None,
            floor: DaggerFloor::Cost,
            keep_trace: false,
        }
    }
}

/// Iterate the dagger operator until it converges, repeats a recent iterate,
/// or runs out of iterations.
pub fn iterate_dagger0(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    variant: BoundVariant,
    opts: &DaggerOptions,
) -> Result<FixedPointResult> {
    let op = |x: &[f64]| apply_dagger0_floored(instance, conf, variant, x, opts.policy.as_ref(), opts.floor);
    let mut x = opts.x0.clone().unwrap_or_else(|| vec![0.0; instance.num_states()]);
    let mut window: VecDeque<ValueVector> = VecDeque::with_capacity(opts.cycle_window + 1);
    let mut trace = opts.keep_trace.then(|| vec![x.clone()]);
    let mut next_check = 0;
    for it in 1..=opts.max_iter {
        let y = op(&x)?;
        if let Some(t) = trace.as_mut() {
            t.push(y.clone());
        }
        if sup_dist(&y, &x) <= opts.tol {
            return Ok(FixedPointResult { status: FixedPointStatus::Converged, point: y, cycle: Vec::new(), iterations: it, trace });
        }
        window.push_back(x);
        if window.len() > opts.cycle_window {
            window.pop_front();
        }
        // most recent match gives the shortest period
        if it >= next_check {
            if let Some(pos) = window.iter().rposition(|w| sup_dist(w, &y) <= opts.tol) {
                let cycle: Vec<ValueVector> = window.iter().skip(pos).cloned().collect();
                if confirm_cycle(&op, &cycle, opts.tol)? {
                    return Ok(FixedPointResult { status: FixedPointStatus::Oscillating, point: y, cycle, iterations: it, trace });
                }
                // a slowly shrinking oscillation; look again once it has moved on
                next_check = it + CYCLE_CONFIRM_STEPS;
            }
        }
        x = y;
    }
    Ok(FixedPointResult { status: FixedPointStatus::MaxIter, point: x, cycle: Vec::new(), iterations: opts.max_iter, trace })
}

fn confirm_cycle<F>(op: &F, cycle: &[ValueVector], tol: f64) -> Result<bool>
where
    F: Fn(&[f64]) -> Result<ValueVector>,
{
    let periods = CYCLE_CONFIRM_STEPS.div_ceil(cycle.len()).max(1);
    let mut z = cycle[0].clone();
    for _ in 0..periods {
        for _ in 0..cycle.len() {
            z = op(&z)?;
        }
        if sup_dist(&z, &cycle[0]) > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Rows `(x1, x2, y1, y2)` of the operator on a `steps × steps` grid over
/// `[lo, hi]²`. Two-state instances only.
pub fn arrow_field(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    variant: BoundVariant,
    lo: f64,
    hi: f64,
    steps: usize,
    policy: Option<&Policy>,
) -> Result<Vec<[f64; 4]>> {
    if instance.num_states() != 2 {
        return Err(Error::InvalidInstance("arrow field needs exactly two states".into()));
    }
    let coord = |i: usize| if steps <= 1 { lo } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 };
    let mut out = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let x = [coord(i), coord(j)];
            let y = apply_dagger0(instance, conf, variant, &x, policy)?;
            out.push([x[0], x[1], y[0], y[1]]);
        }
    }
    Ok(out)
}
