//! Online learning: visit counts, empirical models, radius schedules, the
//! optimistic learner, the greedy baseline and regret traces.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{cb_bound, BoundVariant, ConfidenceSet, DivergenceKind, Modification};
use crate::evi::{extended_value_iteration_capped, iterate_dagger0, DaggerOptions, FixedPointStatus};
use crate::linalg::dot;
use crate::mdp::{simulate_step, Policy, SspInstance};
use crate::par::{self, Exec};
use crate::planning::{layer_partition, value_iteration};
use crate::{Error, Result};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000;
pub const EPSILON_CAP: f64 = 2.0;

/// Transition counts; the last column of `n_sas[s][a]` is the goal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsTable {
    pub n_sas: Vec<Vec<Vec<u64>>>,
    pub n_sa: Vec<Vec<u64>>,
}

impl CountsTable {
    /// Empty table shaped like `instance`.
    pub fn new(instance: &SspInstance) -> Self {
        let n = instance.num_states();
        CountsTable {
            n_sas: (0..n).map(|s| vec![vec![0; n + 1]; instance.num_actions(s)]).collect(),
            n_sa: (0..n).map(|s| vec![0; instance.num_actions(s)]).collect(),
        }
    }

    /// `next == None` records a move to the goal.
    pub fn record(&mut self, s: usize, a: usize, next: Option<usize>) {
        let row = &mut self.n_sas[s][a];
        let j = next.unwrap_or(row.len() - 1);
        row[j] += 1;
        self.n_sa[s][a] += 1;
    }

    pub fn is_consistent(&self) -> bool {
        self.n_sas
            .iter()
            .zip(&self.n_sa)
            .all(|(rows, tot)| rows.iter().zip(tot).all(|(r, t)| r.iter().sum::<u64>() == *t))
    }

    pub fn num_states(&self) -> usize {
        self.n_sa.len()
    }

    pub fn max_actions(&self) -> usize {
        self.n_sa.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// `P̂(s'|s,a) = N(s,a,s') / max(N(s,a), 1)` over the non-goal states.
pub fn empirical_model(counts: &CountsTable) -> Vec<Vec<Vec<f64>>> {
    let n = counts.num_states();
    counts
        .n_sas
        .iter()
        .zip(&counts.n_sa)
        .map(|(rows, tot)| {
            rows.iter()
                .zip(tot)
                .map(|(r, &t)| {
                    let d = t.max(1) as f64;
                    r[..n].iter().map(|&k| k as f64 / d).collect()
                })
                .collect()
        })
        .collect()
}

/// Radius rule used when re-planning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum EpsilonSchedule {
    /// `√(2(N+1) ln(2·S·A·max(1,n)/δ) / max(1,n))`, capped at 2.
    #[default]
    L1,
    Zero,
    Constant(f64),
}

impl EpsilonSchedule {
    pub fn name(&self) -> String {
        match self {
            EpsilonSchedule::L1 => "l1".into(),
            EpsilonSchedule::Zero => "zero".into(),
            EpsilonSchedule::Constant(v) => format!("const:{v}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "l1" => Some(EpsilonSchedule::L1),
            "zero" => Some(EpsilonSchedule::Zero),
            _ => s.strip_prefix("const:")?.parse().ok().filter(|v: &f64| *v >= 0.0).map(EpsilonSchedule::Constant),
        }
    }

    /// Radius for a pair visited `n` times.
    pub fn radius(&self, n: u64, num_states: usize, max_actions: usize, delta: f64) -> f64 {
        match *self {
            EpsilonSchedule::L1 => {
                let m = n.max(1) as f64;
                let sa = (num_states * max_actions.max(1)) as f64;
                let v = (2.0 * (num_states as f64 + 1.0) * (2.0 * sa * m / delta).ln() / m).sqrt();
                v.min(EPSILON_CAP)
            }
            EpsilonSchedule::Zero => 0.0,
            EpsilonSchedule::Constant(v) => v,
        }
    }
}

/// How the optimistic values are computed at each planning event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Planner {
    /// Extended value iteration with the exact inner minimum.
    #[default]
    Exact,
    /// Iterate the clamped bound operator.
    Dagger(BoundVariant),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub delta: f64,
    pub b_star: f64,
    pub num_episodes: usize,
    pub kind: DivergenceKind,
    pub planner: Planner,
    pub schedule: EpsilonSchedule,
    pub modification: Modification,
    pub seed: u64,
    /// Re-plan mid-episode when a pair's count doubles since the last plan.
    pub doubling_trigger: bool,
    pub plan_tol: f64,
    pub plan_max_iter: usize,
    pub step_cap: u64,
    pub initial_counts: Option<CountsTable>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            delta: 0.1,
            b_star: 10.0,
            num_episodes: 1000,
            kind: DivergenceKind::L1,
            planner: Planner::Exact,
            schedule: EpsilonSchedule::L1,
            modification: Modification::Star,
            seed: 0,
            doubling_trigger: true,
            plan_tol: 1e-8,
            plan_max_iter: 100_000,
            step_cap: DEFAULT_STEP_CAP,
            initial_counts: None,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInstance(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if self.num_episodes == 0 {
            return Err(Error::InvalidInstance("num_episodes must be at least 1".into()));
        }
        if self.b_star <= 0.0 || self.b_star.is_nan() {
            return Err(Error::NonPositiveInput(self.b_star));
        }
        Ok(())
    }
}

/// Radius for every pair under `config`'s schedule.
pub fn epsilon_schedule(counts: &CountsTable, config: &LearnerConfig) -> Vec<Vec<f64>> {
    let (n, a) = (counts.num_states(), counts.max_actions());
    counts
        .n_sa
        .iter()
        .map(|row| row.iter().map(|&k| config.schedule.radius(k, n, a, config.delta)).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub per_episode_cost: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    pub episode_lengths: Vec<u64>,
    pub optimal_value: f64,
    /// Episodes cut off by the step cap.
    pub cap_hits: Vec<usize>,
}

impl RegretTrace {
    fn new(optimal_value: f64) -> Self {
        RegretTrace { per_episode_cost: Vec::new(), cumulative_regret: Vec::new(), episode_lengths: Vec::new(), optimal_value, cap_hits: Vec::new() }
    }

    fn push(&mut self, cost: f64, length: u64, capped: bool) {
        let prev = self.cumulative_regret.last().copied().unwrap_or(0.0);
        if capped {
            self.cap_hits.push(self.per_episode_cost.len());
        }
        self.per_episode_cost.push(cost);
        self.episode_lengths.push(length);
        self.cumulative_regret.push(prev + cost - self.optimal_value);
    }

    pub fn len(&self) -> usize {
        self.per_episode_cost.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_episode_cost.is_empty()
    }

    /// Mean excess cost over episodes `range`.
    pub fn mean_regret(&self, range: std::ops::Range<usize>) -> f64 {
        let k = range.len().max(1) as f64;
        self.per_episode_cost[range].iter().map(|c| c - self.optimal_value).sum::<f64>() / k
    }

    /// CSV with columns `episode,cost,length,cumulative_regret`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidInstance(format!("csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["episode", "cost", "length", "cumulative_regret"]).map_err(io)?;
        for k in 0..self.len() {
            w.write_record([
                k.to_string(),
                sig17(self.per_episode_cost[k]),
                self.episode_lengths[k].to_string(),
                sig17(self.cumulative_regret[k]),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidInstance(format!("csv: {e}")))
    }
}

/// Float with 17 significant digits.
pub fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerOutcome {
    pub trace: RegretTrace,
    pub policy: Policy,
    pub counts: CountsTable,
    pub plans: usize,
}

fn optimistic_policy(instance: &SspInstance, counts: &CountsTable, config: &LearnerConfig) -> Result<Policy> {
    let p_hat = empirical_model(counts);
    let radius = epsilon_schedule(counts, config);
    let conf = ConfidenceSet::from_counts(config.kind, &p_hat, &counts.n_sa, &radius, config.modification)?;
    match config.planner {
        Planner::Exact => {
            let r = extended_value_iteration_capped(instance, &conf, config.plan_tol, config.plan_max_iter, Some(config.b_star))?;
            Ok(r.policy)
        }
        Planner::Dagger(variant) => {
            let opts = DaggerOptions { tol: config.plan_tol, max_iter: config.plan_max_iter, ..DaggerOptions::default() };
            let r = iterate_dagger0(instance, &conf, variant, &opts)?;
            if r.status == FixedPointStatus::MaxIter {
                return Err(Error::MaxIterExceeded(config.plan_max_iter));
            }
            let x: Vec<f64> = r.point.iter().map(|v| v.min(config.b_star)).collect();
            let mut policy = Vec::with_capacity(x.len());
            for s in 0..x.len() {
                let (mut best, mut arg) = (f64::INFINITY, 0);
                for a in 0..instance.num_actions(s) {
                    let v = instance.cost(s, a) + (dot(conf.row(s, a), &x) + cb_bound(variant, &conf, s, a, &x)?).max(0.0);
                    if v < best {
                        best = v;
                        arg = a;
                    }
                }
                policy.push(arg);
            }
            Ok(Policy(policy))
        }
    }
}

fn optimal_start_value(instance: &SspInstance) -> Result<f64> {
    let vi = value_iteration(instance, 1e-12, 10_000_000)?;
    Ok(vi.values[instance.initial_state()])
}

/// Optimistic learner: follow the current optimistic policy, count
/// transitions and re-plan at episode ends and on count doubling.
pub fn run_evi_learner(instance: &SspInstance, config: &LearnerConfig) -> Result<LearnerOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut counts = match &config.initial_counts {
        Some(c) => c.clone(),
        None => CountsTable::new(instance),
    };
    let mut trace = RegretTrace::new(optimal_start_value(instance)?);
    let plan = |counts: &CountsTable, episode: usize| {
        optimistic_policy(instance, counts, config).map_err(|e| Error::PlanningFailed { episode, source: Box::new(e) })
    };
    let mut policy = plan(&counts, 0)?;
    let mut plans = 1;
    let mut at_plan = counts.n_sa.clone();
    for episode in 0..config.num_episodes {
        let mut s = instance.initial_state();
        let (mut cost, mut steps, mut capped) = (0.0, 0u64, false);
        loop {
            if steps >= config.step_cap {
                capped = true;
                break;
            }
            let a = policy.0[s];
            let (next, c) = simulate_step(instance, s, a, &mut rng);
            cost += c;
            steps += 1;
            counts.record(s, a, next);
            let Some(n) = next else { break };
            if config.doubling_trigger && counts.n_sa[s][a] >= 2 * at_plan[s][a].max(1) {
                policy = plan(&counts, episode)?;
                plans += 1;
                at_plan = counts.n_sa.clone();
            }
            s = n;
        }
        trace.push(cost, steps, capped);
        if episode + 1 < config.num_episodes {
            policy = plan(&counts, episode + 1)?;
            plans += 1;
            at_plan = counts.n_sa.clone();
        }
    }
    Ok(LearnerOutcome { trace, policy, counts, plans })
}

/// Independent learner runs, one per seed, in input order.
pub fn run_evi_learners(instance: &SspInstance, config: &LearnerConfig, seeds: &[u64]) -> Vec<Result<LearnerOutcome>> {
    par::map(Exec::default(), seeds, |&seed| run_evi_learner(instance, &LearnerConfig { seed, ..config.clone() }))
}

/// Cheapest action with probability `1 - epsilon_explore`, uniform otherwise.
pub fn run_greedy_baseline(instance: &SspInstance, epsilon_explore: f64, num_episodes: usize, seed: u64) -> Result<RegretTrace> {
    if !(0.0..1.0).contains(&epsilon_explore) {
        return Err(Error::InvalidInstance(format!("epsilon_explore must lie in [0,1), got {epsilon_explore}")));
    }
    if layer_partition(instance).is_err() {
        return Err(Error::ImproperRisk);
    }
    let greedy: Vec<usize> = (0..instance.num_states())
        .map(|s| {
            let mut arg = 0;
            for a in 1..instance.num_actions(s) {
                if instance.cost(s, a) < instance.cost(s, arg) {
                    arg = a;
                }
            }
            arg
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = RegretTrace::new(optimal_start_value(instance)?);
    for _ in 0..num_episodes {
        let mut s = instance.initial_state();
        let (mut cost, mut steps, mut capped) = (0.0, 0u64, false);
        loop {
            if steps >= DEFAULT_STEP_CAP {
                capped = true;
                break;
            }
            let a = if rng.gen::<f64>() < epsilon_explore { rng.gen_range(0..instance.num_actions(s)) } else { greedy[s] };
            let (next, c) = simulate_step(instance, s, a, &mut rng);
            cost += c;
            steps += 1;
            match next {
                Some(n) => s = n,
                None => break,
            }
        }
        trace.push(cost, steps, capped);
    }
    Ok(trace)
}
