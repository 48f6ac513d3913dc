//! Seeded random instance samplers for tests, benches and sweeps.

use rand::Rng;

use crate::mdp::SspInstance;
use crate::two_state::TwoStateParams;

/// Row over `n` states with strictly positive goal mass. Each non-goal entry
/// is dropped to zero with probability `sparsity`.
pub fn random_row<R: Rng + ?Sized>(rng: &mut R, n: usize, sparsity: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { rng.gen::<f64>() }).collect();
    let goal = rng.gen_range(0.05..1.0);
    let total: f64 = w.iter().sum::<f64>() + goal;
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Instance in which every stationary policy is proper: `n` states, between
/// one and `max_actions` actions per state, costs in `[0.01, 1]`.
pub fn random_proper_instance<R: Rng + ?Sized>(rng: &mut R, n: usize, max_actions: usize) -> SspInstance {
    let mut costs = Vec::with_capacity(n);
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.gen_range(1..=max_actions.max(1));
        costs.push((0..k).map(|_| rng.gen_range(0.01..=1.0)).collect());
        transitions.push((0..k).map(|_| random_row(rng, n, 0.3)).collect());
    }
    SspInstance::from_rows(costs, transitions).expect("sampler builds valid instances")
}

/// Two-state single-policy parameters: rows with positive goal mass,
/// radii in `(0, 1)`, costs in `[0.01, 1]`.
pub fn random_two_state<R: Rng + ?Sized>(rng: &mut R) -> TwoStateParams {
    let r1 = random_row(rng, 2, 0.0);
    let r2 = random_row(rng, 2, 0.0);
    let eps = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
    let c = [rng.gen_range(0.01..=1.0), rng.gen_range(0.01..=1.0)];
    TwoStateParams::new(r1[0], r1[1], r2[0], r2[1], eps, c)
}

/// Two states, two actions each, used for learner progress checks.
///
/// In state 0 the cheap action loops back with probability 0.8 and is worse
/// than paying 1 to finish; while its radius is large it looks optimistic,
/// so early episodes try it.
pub fn learning_benchmark() -> SspInstance {
    SspInstance::from_rows(
        vec![vec![1.0, 0.2], vec![0.5, 0.1]],
        vec![
            vec![vec![0.0, 0.0], vec![0.8, 0.1]],
            vec![vec![0.0, 0.0], vec![0.6, 0.2]],
        ],
    )
    .expect("benchmark is valid")
}

/// Two states where always taking the cheapest action is suboptimal: from
/// state 1 the cheap action returns to state 0 half of the time.
pub fn greedy_trap() -> SspInstance {
    SspInstance::from_rows(
        vec![vec![0.1, 0.5], vec![0.2, 0.3]],
        vec![
            vec![vec![0.0, 0.9], vec![0.0, 0.0]],
            vec![vec![0.5, 0.0], vec![0.0, 0.0]],
        ],
    )
    .expect("benchmark is valid")
}

/// Nonnegative value vector with entries in `[0, scale)`.
pub fn random_values<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>() * scale).collect()
}
