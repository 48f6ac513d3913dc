//! Known-model planning: Bellman operators, value and policy iteration,
//! and the weighted sup-norm contraction certificate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, sup_dist};
use crate::mdp::{self, Policy, SspInstance, ValueVector, PROPER_TOL};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITER: usize = 1_000_000;
/// Value equality threshold that stops policy iteration.
pub const PI_TOL: f64 = 1e-12;
/// Certificate arithmetic replaces η = 1 by this value.
pub const ETA_CLAMP: f64 = 1.0 - 1e-9;

/// Output of value or policy iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub values: ValueVector,
    pub policy: Policy,
    pub iterations: usize,
}

/// Layered partition and weights proving `U` contracts in a weighted sup norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub eta: f64,
    pub gamma: f64,
    pub omega: Vec<f64>,
    /// `partition[q-1]` holds the states of layer `q`.
    pub partition: Vec<Vec<usize>>,
    /// Largest observed `||Ux1-Ux2||_ω / ||x1-x2||_ω` over the random pairs.
    pub empirical_ratio: f64,
}

/// `c_π + P_π x`.
pub fn apply_l_pi(instance: &SspInstance, policy: &Policy, x: &[f64]) -> ValueVector {
    (0..instance.num_states())
        .map(|s| {
            let a = policy.0[s];
            instance.cost(s, a) + dot(instance.row(s, a), x)
        })
        .collect()
}

/// Per-state minimum of `c(s,a) + <P(·|s,a), x>` with the greedy policy.
/// Ties go to the lowest action position.
pub fn apply_u(instance: &SspInstance, x: &[f64]) -> (ValueVector, Policy) {
    let n = instance.num_states();
    let mut values = Vec::with_capacity(n);
    let mut policy = Vec::with_capacity(n);
    for s in 0..n {
        let (mut best, mut arg) = (f64::INFINITY, 0);
        for a in 0..instance.num_actions(s) {
            let v = instance.cost(s, a) + dot(instance.row(s, a), x);
            if v < best {
                best = v;
                arg = a;
            }
        }
        values.push(best);
        policy.push(arg);
    }
    (values, Policy(policy))
}

/// Iterate `U` from zero until successive iterates are within `tol`.
pub fn value_iteration(instance: &SspInstance, tol: f64, max_iter: usize) -> Result<PlanResult> {
    let mut x = vec![0.0; instance.num_states()];
    for it in 1..=max_iter {
        let (y, policy) = apply_u(instance, &x);
        if sup_dist(&y, &x) <= tol {
            return Ok(PlanResult { values: y, policy, iterations: it });
        }
        x = y;
    }
    Err(Error::MaxIterExceeded(max_iter))
}

/// A proper policy built by backward reachability from the goal, if one exists.
pub fn proper_policy(instance: &SspInstance) -> Option<Policy> {
    let n = instance.num_states();
    let mut reached = vec![false; n];
    let mut choice = vec![usize::MAX; n];
    let mut count = 0;
    loop {
        let mut newly = Vec::new();
        for s in (0..n).filter(|&s| !reached[s]) {
            let hit = (0..instance.num_actions(s)).find(|&a| reaches_layer(instance, s, a, &reached));
            if let Some(a) = hit {
                newly.push((s, a));
            }
        }
        if newly.is_empty() {
            break;
        }
        for (s, a) in newly {
            reached[s] = true;
            choice[s] = a;
            count += 1;
        }
    }
    (count == n).then_some(Policy(choice))
}

fn reaches_layer(instance: &SspInstance, s: usize, a: usize, reached: &[bool]) -> bool {
    instance.goal_mass(s, a) > PROPER_TOL
        || instance.row(s, a).iter().zip(reached).any(|(&p, &r)| r && p > 0.0)
}

/// Policy iteration with exact evaluation.
///
/// An action is replaced only when another is better by more than `PI_TOL`,
/// so ties cannot make the iteration alternate between equal policies.
pub fn policy_iteration(instance: &SspInstance, initial: &Policy) -> Result<PlanResult> {
    instance.validate_policy(initial)?;
    if !mdp::is_proper(instance, initial) {
        return Err(Error::ImproperPolicy);
    }
    let mut policy = initial.clone();
    let mut seen = std::collections::HashSet::new();
    for it in 1.. {
        let x = mdp::cost_to_go(instance, &policy)?;
        let (y, greedy) = apply_u(instance, &x);
        if sup_dist(&y, &x) <= PI_TOL {
            return Ok(PlanResult { values: x, policy, iterations: it });
        }
        if !seen.insert(policy.clone()) {
            return Err(Error::CycleDetected);
        }
        let next: Vec<usize> = (0..instance.num_states())
            .map(|s| {
                let cur = policy.0[s];
                let cur_v = instance.cost(s, cur) + dot(instance.row(s, cur), &x);
                if cur_v <= y[s] + PI_TOL {
                    cur
                } else {
                    greedy.0[s]
                }
            })
            .collect();
        if next == policy.0 {
            return Ok(PlanResult { values: x, policy, iterations: it });
        }
        policy = Policy(next);
    }
    unreachable!()
}

/// Layers `S_1, S_2, ...`: a state joins layer `q` once every action reaches
/// the goal or an earlier layer with positive probability.
pub fn layer_partition(instance: &SspInstance) -> Result<Vec<Vec<usize>>> {
    let n = instance.num_states();
    let mut reached = vec![false; n];
    let mut layers = Vec::new();
    let mut covered = 0;
    while covered < n {
        let layer: Vec<usize> = (0..n)
            .filter(|&s| !reached[s])
            .filter(|&s| (0..instance.num_actions(s)).all(|a| reaches_layer(instance, s, a, &reached)))
            .collect();
        if layer.is_empty() {
            return Err(Error::NotAllProper { uncovered: n - covered });
        }
        for &s in &layer {
            reached[s] = true;
        }
        covered += layer.len();
        layers.push(layer);
    }
    Ok(layers)
}

/// True iff every stationary policy is proper.
pub fn all_policies_proper(instance: &SspInstance) -> bool {
    layer_partition(instance).is_ok()
}

/// Smallest positive transition probability over `S ∪ {g}`.
pub fn min_positive_transition(instance: &SspInstance) -> f64 {
    let mut eta = f64::INFINITY;
    for s in 0..instance.num_states() {
        for a in 0..instance.num_actions(s) {
            for &p in instance.row(s, a) {
                if p > 0.0 {
                    eta = eta.min(p);
                }
            }
            let g = instance.goal_mass(s, a);
            if g > PROPER_TOL {
                eta = eta.min(g);
            }
        }
    }
    eta
}

pub fn weighted_sup_norm(v: &[f64], omega: &[f64]) -> f64 {
    v.iter().zip(omega).fold(0.0f64, |m, (x, w)| m.max(x.abs() / w))
}

/// Build the certificate and check it on 100 seeded random pairs.
pub fn contraction_certificate(instance: &SspInstance) -> Result<ContractionCertificate> {
    let partition = layer_partition(instance)?;
    let r = partition.len() as i32;
    let mut eta = min_positive_transition(instance);
    if eta >= ETA_CLAMP {
        eta = ETA_CLAMP;
    }
    let gamma = (1.0 - eta.powi(2 * r - 1)) / (1.0 - eta.powi(2 * r));
    let mut omega = vec![0.0; instance.num_states()];
    for (q, layer) in partition.iter().enumerate() {
        let w = 1.0 - eta.powi(2 * (q as i32 + 1));
        for &s in layer {
            omega[s] = w;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut ratio = 0.0f64;
    for _ in 0..100 {
        let x1: Vec<f64> = (0..instance.num_states()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x2: Vec<f64> = (0..instance.num_states()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let d_in = weighted_sup_norm(&sub(&x1, &x2), &omega);
        if d_in == 0.0 {
            continue;
        }
        let d_out = weighted_sup_norm(&sub(&apply_u(instance, &x1).0, &apply_u(instance, &x2).0), &omega);
        ratio = ratio.max(d_out / d_in);
    }
    Ok(ContractionCertificate { eta, gamma, omega, partition, empirical_ratio: ratio })
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}
