//! LP duality for planning: superharmonic vectors, occupancy measures and
//! numeric duality gaps in the known and optimistic settings.

use serde::{Deserialize, Serialize};

use crate::divergence::{cb_min_exact, ConfidenceSet};
use crate::evi::{apply_u_hat, extended_value_iteration};
use crate::linalg::{dot, solve, transpose};
use crate::mdp::{is_proper, Policy, SspInstance, ValueVector};
use crate::planning::value_iteration;
use crate::{Error, Result};

pub const SUPERHARMONIC_SLACK: f64 = 1e-9;
pub const FLOW_TOL: f64 = 1e-8;
pub const FLOW_REJECT_TOL: f64 = 1e-6;
const GAP_TOL: f64 = 1e-13;
const GAP_MAX_ITER: usize = 10_000_000;

/// Expected visit counts `q[s][a]` summed over uniformly weighted start states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub q: Vec<Vec<f64>>,
}

impl OccupancyMeasure {
    pub fn state_totals(&self) -> Vec<f64> {
        self.q.iter().map(|r| r.iter().sum()).collect()
    }

    /// `Σ q(s,a) c(s,a)`.
    pub fn objective(&self, instance: &SspInstance) -> f64 {
        self.q
            .iter()
            .enumerate()
            .map(|(s, r)| r.iter().enumerate().map(|(a, q)| q * instance.cost(s, a)).sum::<f64>())
            .sum()
    }
}

/// `x_s ≤ c(s,a) + ⟨P, x⟩ + CB_min(s,a)(x)` for every pair, with `P` the
/// centre of `confidence` when given.
pub fn check_superharmonic(instance: &SspInstance, x: &[f64], confidence: Option<&ConfidenceSet>) -> Result<bool> {
    let n = instance.num_states();
    if x.len() != n {
        return Err(Error::LengthMismatch(x.len(), n));
    }
    if let Some(conf) = confidence {
        if !conf.kind.has_exact() {
            return Err(Error::UnsupportedDivergence(conf.kind.name().into()));
        }
    }
    for s in 0..n {
        for a in 0..instance.num_actions(s) {
            let rhs = match confidence {
                None => instance.cost(s, a) + dot(instance.row(s, a), x),
                Some(conf) => instance.cost(s, a) + dot(conf.row(s, a), x) + cb_min_exact(conf, s, a, x)?.0,
            };
            if x[s] > rhs + SUPERHARMONIC_SLACK {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Solves `qᵀ(I - P_π) = 1ᵀ` and places the counts on the chosen actions.
pub fn occupancy_from_policy(instance: &SspInstance, policy: &Policy) -> Result<OccupancyMeasure> {
    instance.validate_policy(policy)?;
    if !is_proper(instance, policy) {
        return Err(Error::ImproperPolicy);
    }
    let n = instance.num_states();
    let pm = instance.policy_matrices(policy);
    let mut m = transpose(&pm.p_matrix);
    for (i, row) in m.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v = -*v;
        }
        row[i] += 1.0;
    }
    let visits = solve(&m, &vec![1.0; n])?;
    let q = (0..n)
        .map(|s| {
            let mut r = vec![0.0; instance.num_actions(s)];
            r[policy.0[s]] = visits[s];
            r
        })
        .collect();
    Ok(OccupancyMeasure { q })
}

/// Largest violation of `Σ_a q(s,a) = 1 + Σ_{s',a} q(s',a) P(s|s',a)`.
pub fn flow_residual(instance: &SspInstance, occ: &OccupancyMeasure) -> Result<f64> {
    let n = instance.num_states();
    if occ.q.len() != n {
        return Err(Error::LengthMismatch(occ.q.len(), n));
    }
    let mut inflow = vec![1.0; n];
    for (sp, row) in occ.q.iter().enumerate() {
        if row.len() != instance.num_actions(sp) {
            return Err(Error::LengthMismatch(row.len(), instance.num_actions(sp)));
        }
        for (a, &q) in row.iter().enumerate() {
            for (s, p) in instance.row(sp, a).iter().enumerate() {
                inflow[s] += q * p;
            }
        }
    }
    Ok(occ.state_totals().iter().zip(&inflow).map(|(o, i)| (o - i).abs()).fold(0.0, f64::max))
}

/// Whether `occ` is nonnegative and satisfies the flow constraints within [`FLOW_TOL`].
pub fn is_valid_occupancy(instance: &SspInstance, occ: &OccupancyMeasure) -> bool {
    occ.q.iter().flatten().all(|&v| v >= 0.0)
        && flow_residual(instance, occ).is_ok_and(|r| r <= FLOW_TOL)
        && occ.state_totals().iter().all(|&t| t >= 1.0 - FLOW_TOL)
}

/// `π(a|s) = q(s,a) / Σ_a q(s,a)`.
pub fn occupancy_to_policy(instance: &SspInstance, occ: &OccupancyMeasure) -> Result<Vec<Vec<f64>>> {
    let r = flow_residual(instance, occ)?;
    if r > FLOW_REJECT_TOL || occ.q.iter().flatten().any(|&v| v < 0.0) {
        return Err(Error::InvalidOccupancy(r));
    }
    Ok(occ
        .q
        .iter()
        .map(|row| {
            let t: f64 = row.iter().sum();
            row.iter().map(|v| v / t).collect()
        })
        .collect())
}

/// Primal and dual optima of the planning LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub values: ValueVector,
    pub policy: Policy,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub occupancy: OccupancyMeasure,
}

/// Compare `Σ_s x*_s` with `Σ q* c`. With a confidence set the dual is evaluated in
/// the optimistic model built from the minimising rows at `x*`.
pub fn duality_report(instance: &SspInstance, confidence: Option<&ConfidenceSet>) -> Result<DualityReport> {
    let (values, policy, model) = match confidence {
        None => {
            let vi = value_iteration(instance, GAP_TOL, GAP_MAX_ITER)?;
            (vi.values, vi.policy, instance.clone())
        }
        Some(conf) => {
            let evi = extended_value_iteration(instance, conf, GAP_TOL, GAP_MAX_ITER)?;
            let step = apply_u_hat(instance, conf, &evi.values)?;
            let n = instance.num_states();
            let rows = step
                .rows
                .into_iter()
                .map(|r| r.into_iter().map(|mut row| { row.truncate(n); row }).collect())
                .collect();
            (evi.values, evi.policy, instance.with_transitions(rows)?)
        }
    };
    let occupancy = occupancy_from_policy(&model, &policy)?;
    let primal: f64 = values.iter().sum();
    let dual = occupancy.objective(&model);
    Ok(DualityReport { values, policy, primal, dual, gap: (primal - dual).abs(), occupancy })
}

pub fn duality_gap(instance: &SspInstance, confidence: Option<&ConfidenceSet>) -> Result<f64> {
    Ok(duality_report(instance, confidence)?.gap)
}

/// Lower bound, optimistic value and centre value, elementwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub lower: ValueVector,
    pub optimistic: ValueVector,
    pub centre: ValueVector,
    /// `lower ≤ optimistic` elementwise.
    pub lower_holds: bool,
    /// `optimistic ≤ centre` elementwise.
    pub upper_holds: bool,
}

/// `J_s + min_a CB_min(s,a)(J) ≤ Ĵ*_s ≤ J_s` with `J` optimal for the centre.
pub fn sandwich_check(instance: &SspInstance, conf: &ConfidenceSet, tol: f64) -> Result<Sandwich> {
    let centre = value_iteration(&conf.center_instance(instance)?, GAP_TOL, GAP_MAX_ITER)?.values;
    let optimistic = extended_value_iteration(instance, conf, GAP_TOL, GAP_MAX_ITER)?.values;
    let mut lower = Vec::with_capacity(centre.len());
    for s in 0..centre.len() {
        let mut m = f64::INFINITY;
        for a in 0..instance.num_actions(s) {
            m = m.min(cb_min_exact(conf, s, a, &centre)?.0);
        }
        lower.push(centre[s] + m);
    }
    let lower_holds = (0..centre.len()).all(|s| lower[s] <= optimistic[s] + tol);
    let upper_holds = (0..centre.len()).all(|s| optimistic[s] <= centre[s] + tol);
    Ok(Sandwich { lower, optimistic, centre, lower_holds, upper_holds })
}
