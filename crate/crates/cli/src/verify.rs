//! The `verify` suite: invariants and oracle cross-checks over the bundled
//! corpus and seeded random instances. Output is deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use ssp_core::divergence::{
    cb_bound, cb_min_exact, cb_min_grid_oracle, BoundVariant, ConfidenceSet, Modification,
};
use ssp_core::duality::{
    check_superharmonic, duality_gap, flow_residual, occupancy_from_policy, occupancy_to_policy, sandwich_check,
};
use ssp_core::evi::{apply_dagger0, iterate_dagger0, DaggerOptions, FixedPointStatus};
use ssp_core::kernels::{
    cumulant_bound_margin, min_hyperbola, min_weighted_l1_deviation, min_xlog, minmax_rearrange_holds,
    LambdaConstraint,
};
use ssp_core::learning::{empirical_model, run_evi_learner, LearnerConfig};
use ssp_core::mdp::{cost_to_go, is_proper};
use ssp_core::planning::{
    all_policies_proper, contraction_certificate, policy_iteration, proper_policy, value_iteration,
};
use ssp_core::program::{grid_program_oracle, is_program_feasible, solve_dagger_program};
use ssp_core::two_state::{fixed_point_procedure, pair_exclusivity_check};
use ssp_core::{gen, SspInstance};

use crate::codec::InstanceFile;
use crate::presets;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), passed, detail: detail.into() }
}

pub fn to_csv(checks: &[Check]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["check", "status", "detail"]).expect("in-memory write");
    for c in checks {
        w.write_record([c.name.as_str(), if c.passed { "PASS" } else { "FAIL" }, c.detail.as_str()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Random proper instances with `2..=max_states` states and up to three actions.
pub fn planning_corpus(count: usize, max_states: usize, seed: u64) -> Vec<SspInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(1..=max_states);
            gen::random_proper_instance(&mut rng, n, 3)
        })
        .collect()
}

/// Smallest value over every proper deterministic policy, per state.
pub fn exhaustive_optimum(inst: &SspInstance) -> Option<Vec<f64>> {
    let mut best: Option<Vec<f64>> = None;
    for policy in inst.all_policies() {
        if !is_proper(inst, &policy) {
            continue;
        }
        let v = cost_to_go(inst, &policy).ok()?;
        best = Some(match best {
            None => v,
            Some(b) => b.iter().zip(&v).map(|(x, y)| x.min(*y)).collect(),
        });
    }
    best
}

/// One random two-state confidence row for `variant`, with a query vector.
/// Variants needing a Plus-modified centre get one from random counts.
pub fn dominance_sample(rng: &mut ChaCha8Rng, variant: BoundVariant) -> (ConfidenceSet, Vec<f64>) {
    let row = gen::random_row(rng, 2, 0.3);
    let eps = rng.gen_range(0.0..1.0);
    let x = gen::random_values(rng, 2, 3.0);
    let kind = variant.divergence();
    let conf = if variant.needs_plus() {
        let n = rng.gen_range(1..50u64);
        ConfidenceSet::from_counts(kind, &[vec![row]], &[vec![n]], &[vec![eps]], Modification::Plus)
            .expect("plus modification of a valid row")
    } else {
        ConfidenceSet::new(kind, vec![vec![row]], vec![vec![eps]]).expect("valid row")
    };
    (conf, x)
}

/// Largest violations `(bound - oracle, bound - exact)` over `count` samples
/// per variant. The exact column is `None` for kinds without an exact inner minimum.
pub fn dominance_sweep(count: usize, seed: u64, resolution: usize) -> Vec<(BoundVariant, f64, Option<f64>)> {
    BoundVariant::ALL
        .iter()
        .enumerate()
        .map(|(i, &variant)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut worst_oracle = f64::NEG_INFINITY;
            let mut worst_exact: Option<f64> = None;
            for _ in 0..count {
                let (conf, x) = dominance_sample(&mut rng, variant);
                let b = cb_bound(variant, &conf, 0, 0, &x).expect("bound defined on samples");
                let o = cb_min_grid_oracle(&conf, 0, 0, &x, resolution).expect("two-state oracle");
                worst_oracle = worst_oracle.max(b - o);
                if variant.divergence().has_exact() {
                    let e = cb_min_exact(&conf, 0, 0, &x).expect("exact kind").0;
                    worst_exact = Some(worst_exact.unwrap_or(f64::NEG_INFINITY).max(b - e));
                }
            }
            (variant, worst_oracle, worst_exact)
        })
        .collect()
}

fn corpus_checks(out: &mut Vec<Check>) {
    let mut bad = Vec::new();
    for (name, text) in presets::CORPUS {
        let ok = InstanceFile::parse(text)
            .and_then(|f| {
                let again = InstanceFile::parse(&f.to_json())?;
                f.build()?;
                Ok(again == f)
            })
            .unwrap_or(false);
        if !ok {
            bad.push(*name);
        }
    }
    out.push(check("codec_round_trip", bad.is_empty(), format!("{} files; failing: {bad:?}", presets::CORPUS.len())));

    let mut worst_upper = f64::NEG_INFINITY;
    let mut worst_cert = f64::NEG_INFINITY;
    let mut checked = 0;
    for name in presets::names() {
        let (inst, conf) = presets::load(name).expect("corpus decodes");
        if let Some(conf) = conf {
            if let Ok(sw) = sandwich_check(&inst, &conf, 1e-9) {
                worst_upper = worst_upper.max(max_diff(&sw.optimistic, &sw.optimistic.iter().zip(&sw.centre).map(|(o, c)| o.min(*c)).collect::<Vec<_>>()));
                checked += 1;
            }
        }
        if all_policies_proper(&inst) {
            if let Ok(c) = contraction_certificate(&inst) {
                worst_cert = worst_cert.max(c.empirical_ratio - c.gamma);
            }
        }
    }
    out.push(check(
        "optimistic_below_centre",
        worst_upper <= 1e-9,
        format!("{checked} confidence sets; worst excess {worst_upper:.3e}"),
    ));
    out.push(check("contraction_certificate", worst_cert <= 1e-12, format!("worst ratio - gamma {worst_cert:.3e}")));
}

fn planning_checks(out: &mut Vec<Check>) {
    let corpus = planning_corpus(60, 4, 6);
    let (mut worst_vi_pi, mut worst_exhaustive, mut worst_gap, mut worst_flow) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut superharmonic = true;
    let mut recovered = true;
    for inst in &corpus {
        let vi = value_iteration(inst, 1e-12, 10_000_000).expect("proper instance");
        let pi = policy_iteration(inst, &proper_policy(inst).expect("proper")).expect("proper instance");
        worst_vi_pi = worst_vi_pi.max(max_diff(&vi.values, &pi.values));
        if inst.num_states() <= 3 {
            let best = exhaustive_optimum(inst).expect("some proper policy");
            worst_exhaustive = worst_exhaustive.max(max_diff(&best, &pi.values));
        }
        worst_gap = worst_gap.max(duality_gap(inst, None).expect("gap"));
        superharmonic &= check_superharmonic(inst, &pi.values, None).expect("shapes match");
        let occ = occupancy_from_policy(inst, &pi.policy).expect("proper policy");
        worst_flow = worst_flow.max(flow_residual(inst, &occ).expect("shapes match"));
        let mix = occupancy_to_policy(inst, &occ).expect("valid occupancy");
        recovered &= mix.iter().zip(&pi.policy.0).all(|(row, &a)| (row[a] - 1.0).abs() <= 1e-9);
    }
    out.push(check("vi_pi_agree", worst_vi_pi <= 1e-9, format!("{} instances; worst {worst_vi_pi:.3e}", corpus.len())));
    out.push(check("pi_exhaustive_optimal", worst_exhaustive <= 1e-9, format!("worst {worst_exhaustive:.3e}")));
    out.push(check("known_duality_gap", worst_gap <= 1e-6, format!("worst {worst_gap:.3e}")));
    out.push(check("optimum_superharmonic", superharmonic, ""));
    out.push(check("occupancy_flow", worst_flow <= 1e-8 && recovered, format!("worst residual {worst_flow:.3e}")));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let inst = gen::random_proper_instance(&mut rng, 2, 2);
        let eps = rng.gen_range(0.0..0.5);
        let conf = ConfidenceSet::uniform(ssp_core::divergence::DivergenceKind::L1, &inst, eps).expect("valid");
        worst = worst.max(duality_gap(&inst, Some(&conf)).expect("gap"));
    }
    out.push(check("unknown_l1_duality_gap", worst <= 1e-6, format!("40 instances; worst {worst:.3e}")));
}

fn bound_checks(out: &mut Vec<Check>) {
    for (variant, oracle, exact) in dominance_sweep(100, 8, 200) {
        let ok = oracle <= 5e-3 && exact.is_none_or(|e| e <= 1e-9);
        let detail = match exact {
            Some(e) => format!("bound - oracle {oracle:.3e}; bound - exact {e:.3e}"),
            None => format!("bound - oracle {oracle:.3e}"),
        };
        out.push(check(&format!("bound_dominance_{}", variant.name()), ok, detail));
    }
    let (l, v) = min_weighted_l1_deviation(&[0.3, 0.2, 0.2, 0.4], &[1.0, 3.0, 5.0, 6.0], LambdaConstraint::Free).expect("valid");
    out.push(check("weighted_median_example", l == 5.0 && (v - 2.0).abs() <= 1e-15, format!("({l}, {v})")));
    let h = min_hyperbola(1.0, 2.0).expect("valid");
    let ok = (h.location - 2f64.sqrt()).abs() <= 1e-15 && (h.value - 2.0 * 2f64.sqrt()).abs() <= 1e-15;
    out.push(check("hyperbola_example", ok, format!("({}, {})", h.location, h.value)));
    let e = std::f64::consts::E;
    let (l, v) = min_xlog(2.0).expect("valid");
    out.push(check("xlog_example", (l - 2.0 / e).abs() <= 1e-15 && (v + 2.0 / e).abs() <= 1e-15, format!("({l}, {v})")));
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let (p, x, lambda) = cumulant_draw(&mut rng);
        worst = worst.min(cumulant_bound_margin(&p, &x, lambda).expect("admissible"));
    }
    out.push(check("cumulant_margin", worst >= -1e-12, format!("min margin {worst:.3e}")));
    let all = (0..10_000).all(|_| {
        let n = rng.gen_range(1..6);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        minmax_rearrange_holds(&x, &y)
    });
    out.push(check("rearrangement_lemma", all, "10000 pairs"));
}

/// Substochastic `p`, values `x` and an admissible `λ`.
pub fn cumulant_draw(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>, f64) {
    let n = rng.gen_range(1..5);
    let p = gen::random_row(rng, n, 0.2);
    let x = gen::random_values(rng, n, 4.0);
    let mean: f64 = p.iter().zip(&x).map(|(a, b)| a * b).sum();
    let need = p.iter().zip(&x).filter(|(w, _)| **w > 0.0).fold(0.0f64, |m, (_, v)| m.max((v - mean).abs()));
    let lambda = need.max(1e-3) * rng.gen_range(1.0..4.0);
    (p, x, lambda)
}

fn two_state_checks(out: &mut Vec<Check>) {
    let (inst, conf) = presets::load("ex1").expect("bundled");
    let conf = conf.expect("has confidence");
    let r = iterate_dagger0(&inst, &conf, BoundVariant::L1Dagger, &DaggerOptions::default()).expect("runs");
    let ok = r.status == FixedPointStatus::Converged
        && (r.point[0] - 0.019694135768511).abs() <= 1e-9
        && (r.point[1] - 0.010892287380350).abs() <= 1e-9;
    out.push(check("first_example_fixed_point", ok, format!("{:?}", r.point)));

    let (inst, conf) = presets::load("witness").expect("bundled");
    let conf = conf.expect("has confidence");
    let a = apply_dagger0(&inst, &conf, BoundVariant::L1Dagger, &[1.0, 0.9], None).expect("runs");
    let b = apply_dagger0(&inst, &conf, BoundVariant::L1Dagger, &[1.0, 2.0], None).expect("runs");
    let ok = max_diff(&a, &[0.855, 0.855]) <= 1e-15 && max_diff(&b, &[0.85, 0.85]) <= 1e-15;
    out.push(check("non_monotone_witness", ok, format!("{a:?} {b:?}")));

    let (inst, conf) = presets::load("oscillation").expect("bundled");
    let conf = conf.expect("has confidence");
    let r = iterate_dagger0(&inst, &conf, BoundVariant::L1Dagger, &DaggerOptions::default()).expect("runs");
    let has = |p: [f64; 2]| r.cycle.iter().any(|c| (c[0] - p[0]).abs() < 1e-4 && (c[1] - p[1]).abs() < 1e-4);
    let ok = r.status == FixedPointStatus::Oscillating && has([0.3, 1.3124]) && has([1.34862, 0.26847]);
    out.push(check("oscillation_cycle", ok, format!("{:?} period {}", r.status, r.cycle.len())));

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut exclusive = 0;
    let mut program_ok = 0;
    let total = 30;
    for _ in 0..total {
        let params = gen::random_two_state(&mut rng);
        if pair_exclusivity_check(&params).unwrap_or(false) {
            exclusive += 1;
        }
        let inst = params.instance().expect("valid");
        let conf = params.confidence().expect("valid");
        let Ok(sol) = solve_dagger_program(&inst, &conf) else { continue };
        let centre = value_iteration(&inst, 1e-12, 10_000_000).expect("proper").values;
        let width = (0..2).map(|s| centre[s] - params.c[s]).fold(0.0f64, f64::max).max(1e-12);
        let g = grid_program_oracle(&inst, &conf, 400).expect("two states");
        if is_program_feasible(&inst, &conf, &sol.x, 1e-8) && g <= sol.objective + 1e-8 && sol.objective - g <= 4.0 * width / 400.0 {
            program_ok += 1;
        }
        let _ = fixed_point_procedure(&params);
    }
    out.push(check("pair_exclusivity", exclusive == total, format!("{exclusive}/{total}")));
    out.push(check("program_vs_grid_oracle", program_ok == total, format!("{program_ok}/{total}")));
}

fn learning_checks(out: &mut Vec<Check>) {
    let inst = gen::learning_benchmark();
    let config = LearnerConfig { num_episodes: 60, seed: 3, ..LearnerConfig::default() };
    let run = run_evi_learner(&inst, &config).expect("learner runs");
    let t = &run.trace;
    let identity = (0..t.len()).all(|k| {
        let prev = if k == 0 { 0.0 } else { t.cumulative_regret[k - 1] };
        (t.cumulative_regret[k] - prev - (t.per_episode_cost[k] - t.optimal_value)).abs() <= 1e-9
    });
    out.push(check("regret_identity", identity, format!("{} episodes", t.len())));
    let model = empirical_model(&run.counts);
    let substochastic = model.iter().flatten().all(|r| r.iter().all(|&p| p >= 0.0) && r.iter().sum::<f64>() <= 1.0 + 1e-12);
    out.push(check("counts_consistent", run.counts.is_consistent() && substochastic, format!("{} plans", run.plans)));
    let again = run_evi_learner(&inst, &config).expect("learner runs");
    out.push(check("learner_deterministic", again.trace == run.trace, ""));
}

/// Run every check in a fixed order.
pub fn run_suite() -> Vec<Check> {
    let mut out = Vec::new();
    corpus_checks(&mut out);
    planning_checks(&mut out);
    bound_checks(&mut out);
    two_state_checks(&mut out);
    learning_checks(&mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = run_suite();
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
        assert!(failed.is_empty(), "{failed:#?}");
    }
}
