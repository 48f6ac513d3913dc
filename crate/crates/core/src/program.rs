//! The ℓ1 dagger program
//!
//! ```text
//! max Σ_s x_s  s.t.  x_s ≤ c(s,a) + max(⟨P̂(·|s,a), x⟩ - ε(s,a)·max(x), 0)  ∀(s,a)
//! ```
//!
//! solved by enumerating regions on which every constraint is linear, plus a
//! grid oracle and the harness comparing iteration, the piece procedure and
//! the program on random two-state instances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{BoundVariant, ConfidenceSet, DivergenceKind};
use crate::evi::{apply_dagger0, iterate_dagger0, DaggerOptions, FixedPointStatus};
use crate::linalg::{dot, solve};
use crate::mdp::SspInstance;
use crate::par::{self, Exec};
use crate::planning::value_iteration;
use crate::two_state::{fixed_point_procedure, TwoStateParams};
use crate::{Error, Result};

pub const PROGRAM_MAX_STATES: usize = 3;
pub const VERTEX_CAP: usize = 100_000;
const FEAS_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-9;

/// Region on which the program is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPattern {
    /// States strictly above their cheapest cost.
    pub positive_set: Vec<usize>,
    /// States pinned at their cheapest cost.
    pub floor_set: Vec<usize>,
    pub argmax_state: usize,
    /// `branch_pattern[s][a]` is true when the `max{·, 0}` picks the linear term.
    pub branch_pattern: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub region: RegionPattern,
    /// Every distinct vertex maximiser within tolerance of the optimum.
    pub tied: Vec<Vec<f64>>,
}

/// Half-space `coef · x ≤ rhs`.
#[derive(Debug, Clone)]
struct Half {
    coef: Vec<f64>,
    rhs: f64,
}

fn cheapest_costs(instance: &SspInstance) -> Vec<f64> {
    instance.min_costs()
}

fn check_program_input(instance: &SspInstance, conf: &ConfidenceSet) -> Result<()> {
    if conf.kind != DivergenceKind::L1 {
        return Err(Error::UnsupportedDivergence(conf.kind.name().into()));
    }
    if instance.num_states() > PROGRAM_MAX_STATES {
        return Err(Error::TooManyStates { max: PROGRAM_MAX_STATES, got: instance.num_states() });
    }
    Ok(())
}

/// Upper corner of the search box: the optimal value at the centre, inflated slightly.
fn box_upper(instance: &SspInstance, conf: &ConfidenceSet) -> Result<Vec<f64>> {
    let centre = conf.center_instance(instance)?;
    let vi = value_iteration(&centre, 1e-12, 10_000_000)?;
    Ok(vi.values.iter().map(|v| v * (1.0 + 1e-9) + 1e-9).collect())
}

fn pattern_constraints(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    floor: &[f64],
    upper: &[f64],
    region: &RegionPattern,
) -> Vec<Half> {
    let n = instance.num_states();
    let unit = |i: usize, v: f64| {
        let mut c = vec![0.0; n];
        c[i] = v;
        c
    };
    let mut out = Vec::new();
    let m = region.argmax_state;
    for j in 0..n {
        if j != m {
            // x_j - x_m ≤ 0
            let mut c = unit(j, 1.0);
            c[m] -= 1.0;
            out.push(Half { coef: c, rhs: 0.0 });
        }
        out.push(Half { coef: unit(j, 1.0), rhs: upper[j] });
    }
    for &u in &region.positive_set {
        out.push(Half { coef: unit(u, -1.0), rhs: -floor[u] });
    }
    for &v in &region.floor_set {
        out.push(Half { coef: unit(v, -1.0), rhs: -floor[v] });
        out.push(Half { coef: unit(v, 1.0), rhs: floor[v] });
    }
    for s in 0..n {
        for a in 0..instance.num_actions(s) {
            // L(x) = ⟨P̂, x⟩ - ε x_m
            let mut lin = conf.row(s, a).to_vec();
            lin[m] -= conf.eps(s, a);
            let c = instance.cost(s, a);
            if region.branch_pattern[s][a] {
                // x_s - L(x) ≤ c and -L(x) ≤ 0
                let mut row: Vec<f64> = lin.iter().map(|v| -v).collect();
                row[s] += 1.0;
                out.push(Half { coef: row, rhs: c });
                out.push(Half { coef: lin.iter().map(|v| -v).collect(), rhs: 0.0 });
            } else {
                out.push(Half { coef: unit(s, 1.0), rhs: c });
                out.push(Half { coef: lin, rhs: 0.0 });
            }
        }
    }
    out
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(idx.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 && idx[0] == n - k {
                return out;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn n_choose_k(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r.min(usize::MAX as u128) as usize
}

/// Vertex maximisers of `Σ x` over `{x : all halves hold}`; `Err(())` when
/// the subset count exceeds [`VERTEX_CAP`].
fn best_vertices(halves: &[Half], n: usize) -> std::result::Result<Option<(f64, Vec<Vec<f64>>)>, ()> {
    if n_choose_k(halves.len(), n) > VERTEX_CAP {
        return Err(());
    }
    let mut best = f64::NEG_INFINITY;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for combo in combinations(halves.len(), n) {
        let a: Vec<Vec<f64>> = combo.iter().map(|&i| halves[i].coef.clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&i| halves[i].rhs).collect();
        let Ok(x) = solve(&a, &b) else { continue };
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if halves.iter().any(|h| dot(&h.coef, &x) > h.rhs + FEAS_TOL * scale) {
            continue;
        }
        let obj: f64 = x.iter().sum();
        if obj > best + TIE_TOL {
            best = obj;
            points = vec![x];
        } else if (obj - best).abs() <= TIE_TOL && !points.iter().any(|p| close(p, &x)) {
            points.push(x);
        }
    }
    Ok((!points.is_empty()).then_some((best, points)))
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-9)
}

fn all_regions(instance: &SspInstance) -> Vec<RegionPattern> {
    let n = instance.num_states();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|s| (0..instance.num_actions(s)).map(move |a| (s, a))).collect();
    let mut out = Vec::new();
    for split in 0..(1usize << n) {
        let positive_set: Vec<usize> = (0..n).filter(|&s| split & (1 << s) != 0).collect();
        let floor_set: Vec<usize> = (0..n).filter(|&s| split & (1 << s) == 0).collect();
        for m in 0..n {
            for bits in 0..(1usize << pairs.len()) {
                let mut branch_pattern: Vec<Vec<bool>> = (0..n).map(|s| vec![false; instance.num_actions(s)]).collect();
                for (k, &(s, a)) in pairs.iter().enumerate() {
                    branch_pattern[s][a] = bits & (1 << k) != 0;
                }
                out.push(RegionPattern { positive_set: positive_set.clone(), floor_set: floor_set.clone(), argmax_state: m, branch_pattern });
            }
        }
    }
    out
}

/// Global maximiser by region enumeration.
pub fn solve_dagger_program(instance: &SspInstance, conf: &ConfidenceSet) -> Result<ProgramSolution> {
    solve_dagger_program_with(Exec::default(), instance, conf)
}

pub fn solve_dagger_program_with(exec: Exec, instance: &SspInstance, conf: &ConfidenceSet) -> Result<ProgramSolution> {
    check_program_input(instance, conf)?;
    let n = instance.num_states();
    let floor = cheapest_costs(instance);
    let upper = box_upper(instance, conf)?;
    let regions = all_regions(instance);
    let results = par::map(exec, &regions, |region| {
        let halves = pattern_constraints(instance, conf, &floor, &upper, region);
        match best_vertices(&halves, n) {
            Ok(r) => r,
            Err(()) => grid_in_region(instance, conf, &floor, &upper, region),
        }
    });
    let mut best: Option<(f64, usize)> = None;
    for (i, r) in results.iter().enumerate() {
        if let Some((obj, _)) = r {
            if best.map_or(true, |(b, _)| *obj > b + TIE_TOL) {
                best = Some((*obj, i));
            }
        }
    }
    let (objective, idx) = best.ok_or(Error::Infeasible)?;
    let mut tied: Vec<Vec<f64>> = Vec::new();
    for (obj, pts) in results.iter().flatten() {
        if (obj - objective).abs() <= TIE_TOL {
            for p in pts {
                if !tied.iter().any(|t| close(t, p)) {
                    tied.push(p.clone());
                }
            }
        }
    }
    let x = results[idx].as_ref().expect("best region has points").1[0].clone();
    Ok(ProgramSolution { x, objective, region: regions[idx].clone(), tied })
}

/// Fallback for patterns with too many constraint subsets.
fn grid_in_region(
    instance: &SspInstance,
    conf: &ConfidenceSet,
    floor: &[f64],
    upper: &[f64],
    region: &RegionPattern,
) -> Option<(f64, Vec<Vec<f64>>)> {
    let halves = pattern_constraints(instance, conf, floor, upper, region);
    let n = instance.num_states();
    let res: usize = if n <= 2 { 400 } else { 100 };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut x = vec![0.0; n];
    let total = (res + 1).pow(n as u32);
    for k in 0..total {
        let mut r = k;
        for s in 0..n {
            let i = r % (res + 1);
            r /= res + 1;
            x[s] = floor[s] + (upper[s] - floor[s]) * i as f64 / res as f64;
        }
        if halves.iter().all(|h| dot(&h.coef, &x) <= h.rhs + FEAS_TOL) {
            let obj: f64 = x.iter().sum();
            if best.as_ref().map_or(true, |(b, _)| obj > *b) {
                best = Some((obj, x.clone()));
            }
        }
    }
    best.map(|(o, p)| (o, vec![p]))
}

/// Whether `x` satisfies every program constraint.
pub fn is_program_feasible(instance: &SspInstance, conf: &ConfidenceSet, x: &[f64], tol: f64) -> bool {
    let xmax = x.iter().copied().fold(0.0f64, f64::max);
    (0..instance.num_states()).all(|s| {
        (0..instance.num_actions(s)).all(|a| {
            let lin = dot(conf.row(s, a), x) - conf.eps(s, a) * xmax;
            x[s] <= instance.cost(s, a) + lin.max(0.0) + tol
        })
    })
}

/// Largest `Σ x` over a `resolution`-step grid of `[min cost, J*]`, one or two states.
pub fn grid_program_oracle(instance: &SspInstance, conf: &ConfidenceSet, resolution: usize) -> Result<f64> {
    if conf.kind != DivergenceKind::L1 {
        return Err(Error::UnsupportedDivergence(conf.kind.name().into()));
    }
    let n = instance.num_states();
    if n > 2 {
        return Err(Error::TooManyStates { max: 2, got: n });
    }
    let floor = cheapest_costs(instance);
    let upper = box_upper(instance, conf)?;
    let res = resolution.max(1);
    let coord = |s: usize, i: usize| floor[s] + (upper[s] - floor[s]) * i as f64 / res as f64;
    let outer = if n == 2 { res + 1 } else { 1 };
    let parts = par::map_range(Exec::default(), res + 1, |i| {
        let mut best = f64::NEG_INFINITY;
        for j in 0..outer {
            let x: Vec<f64> = if n == 2 { vec![coord(0, i), coord(1, j)] } else { vec![coord(0, i)] };
            if is_program_feasible(instance, conf, &x, FEAS_TOL) {
                best = best.max(x.iter().sum());
            }
        }
        best
    });
    Ok(parts.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConjectureOutcome {
    ConvergedAgree,
    OscillatingFpAgrees,
    Disagreement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureCase {
    pub params: TwoStateParams,
    pub outcome: ConjectureOutcome,
    pub status: Option<FixedPointStatus>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjectureReport {
    pub count: usize,
    pub seed: u64,
    pub converged_agree: usize,
    pub oscillating_fp_agrees: usize,
    pub disagreements: Vec<ConjectureCase>,
    pub oscillation_frequency: f64,
}

/// Agreement thresholds used by [`classify`].
pub const ITERATE_AGREE_TOL: f64 = 1e-7;
pub const PROGRAM_AGREE_TOL: f64 = 1e-6;
pub const SELF_MAP_TOL: f64 = 1e-8;

/// Run iteration, the piece procedure and the program on one instance.
pub fn classify(params: &TwoStateParams) -> ConjectureCase {
    let run = || -> Result<(ConjectureOutcome, FixedPointStatus, String)> {
        let inst = params.instance()?;
        let conf = params.confidence()?;
        let iter = iterate_dagger0(&inst, &conf, BoundVariant::L1Dagger, &DaggerOptions::default())?;
        let proc_out = match fixed_point_procedure(params) {
            Ok(o) => o,
            Err(e) => return Ok((ConjectureOutcome::Disagreement, iter.status, format!("procedure: {e}"))),
        };
        let fp = proc_out.candidate;
        let prog = solve_dagger_program(&inst, &conf)?;
        let prog_ok = (prog.objective - (fp[0] + fp[1])).abs() <= PROGRAM_AGREE_TOL;
        let image = apply_dagger0(&inst, &conf, BoundVariant::L1Dagger, &fp, None)?;
        let self_mapped = (image[0] - fp[0]).abs() <= SELF_MAP_TOL && (image[1] - fp[1]).abs() <= SELF_MAP_TOL;
        let detail = format!(
            "iterate {:?} procedure {:?} ({}) program {:.12}",
            iter.point,
            fp,
            proc_out.label.name(),
            prog.objective
        );
        let outcome = match iter.status {
            FixedPointStatus::Converged => {
                let agree = (iter.point[0] - fp[0]).abs() <= ITERATE_AGREE_TOL && (iter.point[1] - fp[1]).abs() <= ITERATE_AGREE_TOL;
                if agree && prog_ok {
                    ConjectureOutcome::ConvergedAgree
                } else {
                    ConjectureOutcome::Disagreement
                }
            }
            FixedPointStatus::Oscillating if self_mapped && prog_ok => ConjectureOutcome::OscillatingFpAgrees,
            _ => ConjectureOutcome::Disagreement,
        };
        Ok((outcome, iter.status, detail))
    };
    match run() {
        Ok((outcome, status, reason)) => ConjectureCase { params: *params, outcome, status: Some(status), reason },
        Err(e) => ConjectureCase { params: *params, outcome: ConjectureOutcome::Disagreement, status: None, reason: e.to_string() },
    }
}

/// Classify `count` instances drawn from `sampler` with a ChaCha8 stream seeded by `seed`.
pub fn conjecture_report<F>(sampler: F, count: usize, seed: u64) -> ConjectureReport
where
    F: FnMut(&mut ChaCha8Rng) -> TwoStateParams,
{
    conjecture_report_with(Exec::default(), sampler, count, seed)
}

pub fn conjecture_report_with<F>(exec: Exec, mut sampler: F, count: usize, seed: u64) -> ConjectureReport
where
    F: FnMut(&mut ChaCha8Rng) -> TwoStateParams,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<TwoStateParams> = (0..count).map(|_| sampler(&mut rng)).collect();
    let cases = par::map(exec, &samples, classify);
    let mut report = ConjectureReport {
        count,
        seed,
        converged_agree: 0,
        oscillating_fp_agrees: 0,
        disagreements: Vec::new(),
        oscillation_frequency: 0.0,
    };
    let mut oscillating = 0;
    for case in cases {
        if case.status == Some(FixedPointStatus::Oscillating) {
            oscillating += 1;
        }
        match case.outcome {
            ConjectureOutcome::ConvergedAgree => report.converged_agree += 1,
            ConjectureOutcome::OscillatingFpAgrees => report.oscillating_fp_agrees += 1,
            ConjectureOutcome::Disagreement => report.disagreements.push(case),
        }
    }
    report.oscillation_frequency = if count == 0 { 0.0 } else { oscillating as f64 / count as f64 };
    report
}
