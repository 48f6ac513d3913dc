//! SSP data model, properness and exact policy evaluation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Costs below this are rejected at construction (no zero-cost cycles).
pub const COST_FLOOR: f64 = 1e-9;
/// Row sums may exceed one by this much before an instance is rejected.
pub const ROW_SUM_SLACK: f64 = 1e-12;
/// Goal-reach probability that counts as positive for properness.
pub const PROPER_TOL: f64 = 1e-12;

/// Per-state cost-to-go vector.
pub type ValueVector = Vec<f64>;

/// Stationary deterministic policy: `0[s]` is a position into `actions(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn first_actions(n: usize) -> Self {
        Policy(vec![0; n])
    }
}

/// `P_π` and `c_π` for a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrices {
    pub p_matrix: Matrix,
    pub c_vector: Vec<f64>,
}

/// A finite SSP with an implicit goal state.
///
/// Actions are addressed by their position `a` in the per-state list; the
/// external identifiers are kept for serialisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SspInstance {
    num_states: usize,
    initial_state: usize,
    action_ids: Vec<Vec<usize>>,
    costs: Vec<Vec<f64>>,
    transitions: Vec<Vec<Vec<f64>>>,
}

impl SspInstance {
    pub fn new(
        num_states: usize,
        initial_state: usize,
        action_ids: Vec<Vec<usize>>,
        costs: Vec<Vec<f64>>,
        transitions: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidInstance(m));
        if num_states == 0 {
            return bad("num_states must be positive".into());
        }
        if initial_state >= num_states {
            return bad(format!("initial_state {initial_state} out of range"));
        }
        if action_ids.len() != num_states || costs.len() != num_states || transitions.len() != num_states {
            return bad("actions, costs and transitions need one entry per state".into());
        }
        for s in 0..num_states {
            let k = action_ids[s].len();
            if k == 0 {
                return bad(format!("state {s} has no actions"));
            }
            if costs[s].len() != k || transitions[s].len() != k {
                return bad(format!("state {s}: costs/transitions do not match its actions"));
            }
            let mut seen = action_ids[s].clone();
            seen.sort_unstable();
            seen.dedup();
            if seen.len() != k {
                return bad(format!("state {s} has duplicate action ids"));
            }
            for a in 0..k {
                let c = costs[s][a];
                if !c.is_finite() || c < COST_FLOOR || c > 1.0 + ROW_SUM_SLACK {
                    return bad(format!("cost ({s},{}) = {c} outside [{COST_FLOOR}, 1]", action_ids[s][a]));
                }
                let row = &transitions[s][a];
                if row.len() != num_states {
                    return bad(format!("transition row ({s},{}) has length {}", action_ids[s][a], row.len()));
                }
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return bad(format!("transition row ({s},{}) has a negative or non-finite entry", action_ids[s][a]));
                }
                let sum: f64 = row.iter().sum();
                if sum > 1.0 + ROW_SUM_SLACK {
                    return bad(format!("transition row ({s},{}) sums to {sum} > 1", action_ids[s][a]));
                }
            }
        }
        Ok(SspInstance { num_states, initial_state, action_ids, costs, transitions })
    }

    /// Instance whose action ids are positions `0..k` in every state.
    pub fn from_rows(costs: Vec<Vec<f64>>, transitions: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = costs.len();
        let ids = costs.iter().map(|c| (0..c.len()).collect()).collect();
        Self::new(n, 0, ids, costs, transitions)
    }

    /// One action per state.
    pub fn single_action(costs: Vec<f64>, p: Matrix) -> Result<Self> {
        let c = costs.into_iter().map(|c| vec![c]).collect();
        let t = p.into_iter().map(|row| vec![row]).collect();
        Self::from_rows(c, t)
    }

    pub fn with_initial_state(mut self, s: usize) -> Result<Self> {
        if s >= self.num_states {
            return Err(Error::InvalidInstance(format!("initial_state {s} out of range")));
        }
        self.initial_state = s;
        Ok(self)
    }

    /// Same costs and actions with a different transition tensor.
    pub fn with_transitions(&self, transitions: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.initial_state,
            self.action_ids.clone(),
            self.costs.clone(),
            transitions,
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    pub fn num_actions(&self, s: usize) -> usize {
        self.action_ids[s].len()
    }

    pub fn max_actions(&self) -> usize {
        self.action_ids.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_pairs(&self) -> usize {
        self.action_ids.iter().map(Vec::len).sum()
    }

    pub fn action_ids(&self) -> &[Vec<usize>] {
        &self.action_ids
    }

    pub fn action_id(&self, s: usize, a: usize) -> usize {
        self.action_ids[s][a]
    }

    pub fn cost(&self, s: usize, a: usize) -> f64 {
        self.costs[s][a]
    }

    pub fn costs(&self) -> &[Vec<f64>] {
        &self.costs
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    pub fn transitions(&self) -> &[Vec<Vec<f64>>] {
        &self.transitions
    }

    /// Residual mass sent to the goal, clamped at zero.
    pub fn goal_mass(&self, s: usize, a: usize) -> f64 {
        goal_mass(&self.transitions[s][a])
    }

    /// `min_a c(s,a)` for every state.
    pub fn min_costs(&self) -> Vec<f64> {
        self.costs
            .iter()
            .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
            .collect()
    }

    pub fn validate_policy(&self, policy: &Policy) -> Result<()> {
        if policy.0.len() != self.num_states {
            return Err(Error::InvalidPolicy(format!(
                "policy has {} entries for {} states",
                policy.0.len(),
                self.num_states
            )));
        }
        for (s, &a) in policy.0.iter().enumerate() {
            if a >= self.num_actions(s) {
                return Err(Error::InvalidPolicy(format!("action position {a} invalid in state {s}")));
            }
        }
        Ok(())
    }

    pub fn policy_matrices(&self, policy: &Policy) -> PolicyMatrices {
        let p_matrix = (0..self.num_states).map(|s| self.transitions[s][policy.0[s]].clone()).collect();
        let c_vector = (0..self.num_states).map(|s| self.costs[s][policy.0[s]]).collect();
        PolicyMatrices { p_matrix, c_vector }
    }

    /// Every stationary deterministic policy, in lexicographic order.
    pub fn all_policies(&self) -> Vec<Policy> {
        let mut out = vec![Policy(Vec::with_capacity(self.num_states))];
        for s in 0..self.num_states {
            let mut next = Vec::with_capacity(out.len() * self.num_actions(s));
            for p in &out {
                for a in 0..self.num_actions(s) {
                    let mut q = p.clone();
                    q.0.push(a);
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

pub fn goal_mass(row: &[f64]) -> f64 {
    (1.0 - row.iter().sum::<f64>()).max(0.0)
}

/// Row with the goal appended as a last entry so that it sums to one.
pub fn explicit_goal_row(row: &[f64]) -> Vec<f64> {
    let mut r = row.to_vec();
    r.push(goal_mass(row));
    r
}

/// Probability of reaching the goal within `N` steps, per start state.
pub fn goal_reach_probability(instance: &SspInstance, policy: &Policy) -> Vec<f64> {
    let m = instance.policy_matrices(policy);
    goal_reach_from_matrix(&m.p_matrix, instance.num_states())
}

pub(crate) fn goal_reach_from_matrix(p: &[Vec<f64>], steps: usize) -> Vec<f64> {
    let g: Vec<f64> = p.iter().map(|row| goal_mass(row)).collect();
    let mut r = g.clone();
    for _ in 1..steps {
        let pr = linalg::mat_vec(p, &r);
        r = g.iter().zip(pr).map(|(a, b)| (a + b).min(1.0)).collect();
    }
    r
}

/// True iff every state reaches the goal within `N` steps with positive probability.
pub fn is_proper(instance: &SspInstance, policy: &Policy) -> bool {
    goal_reach_probability(instance, policy).iter().all(|&r| r > PROPER_TOL)
}

/// Exact `J_π = (I - P_π)^{-1} c_π`.
pub fn cost_to_go(instance: &SspInstance, policy: &Policy) -> Result<ValueVector> {
    instance.validate_policy(policy)?;
    if !is_proper(instance, policy) {
        return Err(Error::ImproperPolicy);
    }
    let m = instance.policy_matrices(policy);
    solve_evaluation(&m.p_matrix, &m.c_vector)
}

/// Solve `(I - P) x = c`.
pub fn solve_evaluation(p: &[Vec<f64>], c: &[f64]) -> Result<Vec<f64>> {
    let n = c.len();
    let a: Matrix = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - p[i][j]).collect())
        .collect();
    linalg::solve(&a, c)
}

/// Sample one transition. Returns `None` when the goal is reached.
pub fn simulate_step<R: Rng + ?Sized>(
    instance: &SspInstance,
    state: usize,
    action: usize,
    rng: &mut R,
) -> (Option<usize>, f64) {
    let u: f64 = rng.gen();
    (sample_row(instance.row(state, action), u), instance.cost(state, action))
}

/// Inverse-CDF draw from a substochastic row; residual mass means goal.
pub fn sample_row(row: &[f64], u: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return Some(j);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_state(p: f64, c: f64) -> SspInstance {
        SspInstance::single_action(vec![c], vec![vec![p]]).unwrap()
    }

    #[test]
    fn properness_examples() {
        let pi = Policy(vec![0]);
        assert!(is_proper(&one_state(0.5, 0.5), &pi));
        assert!(!is_proper(&one_state(1.0, 0.5), &pi));
        let cycle = SspInstance::single_action(vec![1.0, 1.0], vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(!is_proper(&cycle, &Policy(vec![0, 0])));
    }

    #[test]
    fn geometric_cost() {
        let j = cost_to_go(&one_state(0.5, 0.5), &Policy(vec![0])).unwrap();
        assert_abs_diff_eq!(j[0], 1.0, epsilon = 1e-14);
        assert_eq!(cost_to_go(&one_state(1.0, 0.5), &Policy(vec![0])), Err(Error::ImproperPolicy));
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(SspInstance::single_action(vec![0.0], vec![vec![0.5]]).is_err());
        assert!(SspInstance::single_action(vec![1e-10], vec![vec![0.5]]).is_err());
        assert!(SspInstance::single_action(vec![0.5], vec![vec![1.1]]).is_err());
        assert!(SspInstance::single_action(vec![0.5], vec![vec![-0.1]]).is_err());
        assert!(SspInstance::single_action(vec![0.5, 0.5], vec![vec![0.5, 0.5], vec![0.5]]).is_err());
    }

    #[test]
    fn simulate_deterministic_rows() {
        let inst = SspInstance::single_action(vec![0.5, 0.5], vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(simulate_step(&inst, 0, 0, &mut rng).0, None);
            assert_eq!(simulate_step(&inst, 1, 0, &mut rng), (Some(0), 0.5));
        }
    }

    #[test]
    fn simulate_goal_frequency() {
        let inst = one_state(0.5, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let goals = (0..n).filter(|_| simulate_step(&inst, 0, 0, &mut rng).0.is_none()).count();
        assert!((goals as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn simulate_is_reproducible() {
        let inst = SspInstance::single_action(vec![0.5, 0.5], vec![vec![0.3, 0.3], vec![0.2, 0.5]]).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..500).map(|i| simulate_step(&inst, i % 2, 0, &mut rng).0).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
    }

    #[test]
    fn policy_enumeration_counts() {
        let inst = SspInstance::from_rows(
            vec![vec![0.5, 0.6], vec![0.5, 0.6, 0.7]],
            vec![vec![vec![0.1, 0.1]; 2], vec![vec![0.1, 0.1]; 3]],
        )
        .unwrap();
        assert_eq!(inst.all_policies().len(), 6);
        assert_eq!(inst.total_pairs(), 5);
    }
}
