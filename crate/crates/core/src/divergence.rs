//! Divergence balls around an empirical transition model.
//!
//! Exact inner minimisation (`cb_min_exact`) is available for ℓ1, sup-norm
//! and KL balls; every kind can be checked by the brute-force simplex grid in
//! `cb_min_grid_oracle`. `cb_bound` gives the closed-form lower bounds used by
//! the dagger operators.
//!
//! KL-type divergences work on the explicit-goal row (goal mass appended,
//! `x_g = 0`) and use natural logarithms. ℓ1, sup-norm, χ² and the
//! variance-weighted norm are measured over the non-goal states only.

use serde::{Deserialize, Serialize};

use crate::kernels::span;
use crate::linalg::dot;
use crate::mdp::{explicit_goal_row, goal_mass, SspInstance};
use crate::par::{self, Exec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DivergenceKind {
    L1,
    SupNorm,
    KL,
    ReverseKL,
    ChiSquared,
    VarWeightedLinf,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 6] = [
        DivergenceKind::L1,
        DivergenceKind::SupNorm,
        DivergenceKind::KL,
        DivergenceKind::ReverseKL,
        DivergenceKind::ChiSquared,
        DivergenceKind::VarWeightedLinf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::L1 => "l1",
            DivergenceKind::SupNorm => "sup",
            DivergenceKind::KL => "kl",
            DivergenceKind::ReverseKL => "reverse-kl",
            DivergenceKind::ChiSquared => "chi2",
            DivergenceKind::VarWeightedLinf => "var-linf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn has_exact(self) -> bool {
        matches!(self, DivergenceKind::L1 | DivergenceKind::SupNorm | DivergenceKind::KL)
    }
}

/// How the centre was derived from raw empirical rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Modification {
    #[default]
    None,
    /// Rows with no goal mass get `1/(n+1)` goal mass.
    Star,
    /// Zero entries over the non-goal states become `1/(n+z)`.
    Plus,
    /// As `Plus`, with the goal counted among the entries.
    PlusWithGoal,
}

impl Modification {
    pub fn name(self) -> &'static str {
        match self {
            Modification::None => "none",
            Modification::Star => "star",
            Modification::Plus => "plus",
            Modification::PlusWithGoal => "plus-goal",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Modification::None, Modification::Star, Modification::Plus, Modification::PlusWithGoal]
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
    }

    pub fn is_plus(self) -> bool {
        matches!(self, Modification::Plus | Modification::PlusWithGoal)
    }
}

/// Closed-form lower bounds on the inner minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundVariant {
    L1Dagger,
    SupDagger,
    KLPinsker,
    KLCumulant,
    KLHoeffding,
    ReverseKL,
    ChiSquared,
    VarWeightedLinf,
}

impl BoundVariant {
    pub const ALL: [BoundVariant; 8] = [
        BoundVariant::L1Dagger,
        BoundVariant::SupDagger,
        BoundVariant::KLPinsker,
        BoundVariant::KLCumulant,
        BoundVariant::KLHoeffding,
        BoundVariant::ReverseKL,
        BoundVariant::ChiSquared,
        BoundVariant::VarWeightedLinf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::L1Dagger => "l1-dagger",
            BoundVariant::SupDagger => "sup-dagger",
            BoundVariant::KLPinsker => "kl-pinsker",
            BoundVariant::KLCumulant => "kl-cumulant",
            BoundVariant::KLHoeffding => "kl-hoeffding",
            BoundVariant::ReverseKL => "reverse-kl",
            BoundVariant::ChiSquared => "chi2",
            BoundVariant::VarWeightedLinf => "var-linf",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name().eq_ignore_ascii_case(s))
    }

    /// The ball this bound is derived for.
    pub fn divergence(self) -> DivergenceKind {
        match self {
            BoundVariant::L1Dagger => DivergenceKind::L1,
            BoundVariant::SupDagger => DivergenceKind::SupNorm,
            BoundVariant::KLPinsker | BoundVariant::KLCumulant | BoundVariant::KLHoeffding => DivergenceKind::KL,
            BoundVariant::ReverseKL => DivergenceKind::ReverseKL,
            BoundVariant::ChiSquared => DivergenceKind::ChiSquared,
            BoundVariant::VarWeightedLinf => DivergenceKind::VarWeightedLinf,
        }
    }

    /// Whether the formula is stated in terms of the `Plus` centre.
    pub fn needs_plus(self) -> bool {
        matches!(
            self,
            BoundVariant::KLCumulant | BoundVariant::KLHoeffding | BoundVariant::ChiSquared | BoundVariant::VarWeightedLinf
        )
    }
}

/// Divergence ball `{P̃ : D(P̃, centre(s,a)) ≤ radius(s,a)}` for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub kind: DivergenceKind,
    pub center: Vec<Vec<Vec<f64>>>,
    pub radius: Vec<Vec<f64>>,
    #[serde(default)]
    pub modification: Modification,
    #[serde(default)]
    pub counts: Option<Vec<Vec<u64>>>,
    /// Non-goal states whose raw entry was zero before a `Plus` modification.
    #[serde(default)]
    pub zero_sets: Option<Vec<Vec<Vec<usize>>>>,
}

/// Output of [`modify_center`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModifiedCenter {
    pub center: Vec<Vec<Vec<f64>>>,
    pub zero_counts: Vec<Vec<usize>>,
    pub zero_sets: Vec<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostics {
    pub variance_plus: f64,
    pub span_centered: f64,
    pub sup_centered: f64,
    pub threshold_f: f64,
    pub degenerate: bool,
}

fn check_radius(radius: &[Vec<f64>], center: &[Vec<Vec<f64>>]) -> Result<()> {
    if radius.len() != center.len() {
        return Err(Error::LengthMismatch(radius.len(), center.len()));
    }
    for (r, c) in radius.iter().zip(center) {
        if r.len() != c.len() {
            return Err(Error::LengthMismatch(r.len(), c.len()));
        }
        if r.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::InvalidInstance("radius must be nonnegative".into()));
        }
    }
    Ok(())
}

impl ConfidenceSet {
    pub fn new(kind: DivergenceKind, center: Vec<Vec<Vec<f64>>>, radius: Vec<Vec<f64>>) -> Result<Self> {
        check_radius(&radius, &center)?;
        Ok(ConfidenceSet { kind, center, radius, modification: Modification::None, counts: None, zero_sets: None })
    }

    /// Ball of radius `eps` around the instance's own rows.
    pub fn uniform(kind: DivergenceKind, instance: &SspInstance, eps: f64) -> Result<Self> {
        let radius = instance.transitions().iter().map(|r| vec![eps; r.len()]).collect();
        Self::new(kind, instance.transitions().to_vec(), radius)
    }

    /// Radius `eps[s]` for every action of state `s`.
    pub fn per_state(kind: DivergenceKind, instance: &SspInstance, eps: &[f64]) -> Result<Self> {
        if eps.len() != instance.num_states() {
            return Err(Error::LengthMismatch(eps.len(), instance.num_states()));
        }
        let radius = instance.transitions().iter().zip(eps).map(|(r, &e)| vec![e; r.len()]).collect();
        Self::new(kind, instance.transitions().to_vec(), radius)
    }

    /// Modify the raw rows and transform the raw radii to cover the same models.
    pub fn from_counts(
        kind: DivergenceKind,
        p_hat: &[Vec<Vec<f64>>],
        counts: &[Vec<u64>],
        raw_radius: &[Vec<f64>],
        modification: Modification,
    ) -> Result<Self> {
        check_radius(raw_radius, p_hat)?;
        if modification == Modification::None {
            let mut set = Self::new(kind, p_hat.to_vec(), raw_radius.to_vec())?;
            set.counts = Some(counts.to_vec());
            return Ok(set);
        }
        let m = modify_center(p_hat, counts, modification)?;
        let mut radius = raw_radius.to_vec();
        for (s, rs) in radius.iter_mut().enumerate() {
            for (a, r) in rs.iter_mut().enumerate() {
                *r = transform_radius(kind, modification, *r, counts[s][a], m.zero_counts[s][a])?;
            }
        }
        Ok(ConfidenceSet {
            kind,
            center: m.center,
            radius,
            modification,
            counts: Some(counts.to_vec()),
            zero_sets: Some(m.zero_sets),
        })
    }

    pub fn with_kind(&self, kind: DivergenceKind) -> Self {
        ConfidenceSet { kind, ..self.clone() }
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.center[s][a]
    }

    pub fn eps(&self, s: usize, a: usize) -> f64 {
        self.radius[s][a]
    }

    /// Instance with the same costs and the centre as transitions.
    pub fn center_instance(&self, instance: &SspInstance) -> Result<SspInstance> {
        instance.with_transitions(self.center.clone())
    }
}

/// Apply a `Star`, `Plus` or `PlusWithGoal` modification to raw empirical rows.
pub fn modify_center(p_hat: &[Vec<Vec<f64>>], counts: &[Vec<u64>], mode: Modification) -> Result<ModifiedCenter> {
    if counts.len() != p_hat.len() {
        return Err(Error::LengthMismatch(counts.len(), p_hat.len()));
    }
    let mut center = Vec::with_capacity(p_hat.len());
    let mut zero_counts = Vec::with_capacity(p_hat.len());
    let mut zero_sets = Vec::with_capacity(p_hat.len());
    for (s, rows) in p_hat.iter().enumerate() {
        if counts[s].len() != rows.len() {
            return Err(Error::LengthMismatch(counts[s].len(), rows.len()));
        }
        let (mut cs, mut zs, mut sets) = (Vec::new(), Vec::new(), Vec::new());
        for (a, row) in rows.iter().enumerate() {
            let n = counts[s][a] as f64;
            match mode {
                Modification::None => {
                    cs.push(row.clone());
                    zs.push(0);
                    sets.push(Vec::new());
                }
                Modification::Star => {
                    if goal_mass(row) > 0.0 {
                        cs.push(row.clone());
                    } else {
                        cs.push(row.iter().map(|p| p * n / (n + 1.0)).collect());
                    }
                    zs.push(0);
                    sets.push(Vec::new());
                }
                Modification::Plus | Modification::PlusWithGoal => {
                    if counts[s][a] == 0 {
                        return Err(Error::ZeroCounts { s, a });
                    }
                    let with_goal = mode == Modification::PlusWithGoal;
                    let work = if with_goal { explicit_goal_row(row) } else { row.clone() };
                    let zeros: Vec<usize> = (0..work.len()).filter(|&i| work[i] <= 0.0).collect();
                    let z = zeros.len() as f64;
                    let mut out: Vec<f64> =
                        work.iter().map(|&p| if p <= 0.0 { 1.0 / (n + z) } else { p * n / (n + z) }).collect();
                    if with_goal {
                        out.pop();
                    }
                    cs.push(out);
                    zs.push(zeros.len());
                    sets.push(zeros.into_iter().filter(|&i| i < row.len()).collect());
                }
            }
        }
        center.push(cs);
        zero_counts.push(zs);
        zero_sets.push(sets);
    }
    Ok(ModifiedCenter { center, zero_counts, zero_sets })
}

/// Radius around the modified centre that still contains every model within
/// `eps` of the raw row.
pub fn transform_radius(kind: DivergenceKind, mode: Modification, eps: f64, n: u64, z: usize) -> Result<f64> {
    let nf = n as f64;
    let zf = z as f64;
    use DivergenceKind::*;
    match mode {
        Modification::None => Ok(eps),
        Modification::Star => match kind {
            L1 | SupNorm => Ok(eps + 1.0 / (1.0 + nf)),
            KL => Ok(eps + (1.0 / nf).ln_1p()),
            other => Err(Error::UnsupportedDivergence(format!("star modification for {}", other.name()))),
        },
        Modification::Plus | Modification::PlusWithGoal => {
            if n == 0 {
                return Err(Error::ZeroCounts { s: 0, a: 0 });
            }
            Ok(match kind {
                L1 => eps + (2.0 * zf - if z > 0 { 1.0 } else { 0.0 }) / (zf + nf),
                SupNorm => eps + zf / (nf + zf),
                ChiSquared => {
                    (1.0 + zf / nf) * eps + (nf + zf) / (nf * nf) + zf * zf / (nf * (nf + zf)) + zf / (nf + zf)
                }
                KL | ReverseKL | VarWeightedLinf => eps,
            })
        }
    }
}

/// `D(candidate, centre)` for rows over the non-goal states.
pub fn divergence(kind: DivergenceKind, candidate: &[f64], centre: &[f64]) -> f64 {
    match kind {
        DivergenceKind::L1 => candidate.iter().zip(centre).map(|(q, c)| (q - c).abs()).sum(),
        DivergenceKind::SupNorm => candidate.iter().zip(centre).fold(0.0, |m, (q, c)| f64::max(m, (q - c).abs())),
        DivergenceKind::KL => kl(&explicit_goal_row(candidate), &explicit_goal_row(centre)),
        DivergenceKind::ReverseKL => kl(&explicit_goal_row(centre), &explicit_goal_row(candidate)),
        DivergenceKind::ChiSquared => candidate.iter().zip(centre).map(|(&q, &c)| weighted_sq(q, c)).sum(),
        DivergenceKind::VarWeightedLinf => {
            candidate.iter().zip(centre).fold(0.0, |m, (&q, &c)| f64::max(m, weighted_sq(q, c)))
        }
    }
}

fn weighted_sq(q: f64, c: f64) -> f64 {
    if c > 0.0 {
        (q - c) * (q - c) / c
    } else if q == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// `Σ p log(p/q)` in nats.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total.max(0.0)
}

fn check_nonneg(x: &[f64]) -> Result<()> {
    if x.iter().any(|&v| v < 0.0) {
        return Err(Error::NonNegativityViolated);
    }
    Ok(())
}

/// `min ⟨x, P̃ - P̂⟩` over the ball at `(s, a)`, with a minimising row.
pub fn cb_min_exact(conf: &ConfidenceSet, s: usize, a: usize, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if !conf.kind.has_exact() {
        return Err(Error::UnsupportedDivergence(conf.kind.name().into()));
    }
    check_nonneg(x)?;
    let c = conf.row(s, a);
    if c.len() != x.len() {
        return Err(Error::LengthMismatch(c.len(), x.len()));
    }
    let eps = conf.eps(s, a);
    if eps == 0.0 {
        return Ok((0.0, c.to_vec()));
    }
    Ok(match conf.kind {
        DivergenceKind::L1 => l1_exact(c, eps, x),
        DivergenceKind::SupNorm => sup_exact(c, eps, x),
        DivergenceKind::KL => kl_exact(c, eps, x),
        _ => unreachable!(),
    })
}

fn delta_value(row: &[f64], c: &[f64], x: &[f64]) -> f64 {
    row.iter().zip(c).zip(x).map(|((r, c), x)| (r - c) * x).sum()
}

/// Take up to `amount` from the entries in `order`, skipping `keep`.
fn drain(row: &mut [f64], order: &[usize], amount: f64, keep: Option<usize>) -> f64 {
    let mut left = amount;
    for &i in order {
        if Some(i) == keep || left <= 0.0 {
            continue;
        }
        let take = row[i].min(left);
        row[i] -= take;
        left -= take;
    }
    amount - left
}

fn l1_exact(c: &[f64], eps: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| x[j].total_cmp(&x[i]).then(i.cmp(&j)));

    // goal sink: mass leaves the non-goal states at unit ℓ1 cost
    let mut best_row = c.to_vec();
    drain(&mut best_row, &order, eps, None);
    let mut best = delta_value(&best_row, c, x);

    for sink in 0..c.len() {
        let delta = (eps / 2.0).min(1.0 - c[sink]);
        if delta <= 0.0 {
            continue;
        }
        let mut row = c.to_vec();
        let moved = drain(&mut row, &order, delta, Some(sink));
        row[sink] += moved;
        let v = delta_value(&row, c, x);
        if v < best {
            best = v;
            best_row = row;
        }
    }
    (best.min(0.0), best_row)
}

fn sup_exact(c: &[f64], eps: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let row: Vec<f64> = c.iter().map(|&p| (p - eps).max(0.0)).collect();
    let value = c.iter().zip(x).map(|(&p, &xi)| f64::max(-eps * xi, -p * xi)).sum();
    (value, row)
}

const GOLDEN_ITERS: usize = 200;
const LOG_LAMBDA_RANGE: f64 = 30.0;

fn kl_exact(c: &[f64], eps: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let mut cx = explicit_goal_row(c);
    let total: f64 = cx.iter().sum();
    for v in &mut cx {
        *v /= total;
    }
    let mut xx = x.to_vec();
    xx.push(0.0);
    let supp: Vec<usize> = (0..cx.len()).filter(|&i| cx[i] > 0.0).collect();
    let mean: f64 = supp.iter().map(|&i| cx[i] * xx[i]).sum();
    let xmin = supp.iter().map(|&i| xx[i]).fold(f64::INFINITY, f64::min);
    let gap = mean - xmin;
    if gap <= 0.0 {
        return (0.0, c.to_vec());
    }
    // g(λ) = λ log E exp(-(x - mean)/λ) + λ ε, written relative to the minimum
    let g = |u: f64| {
        let lam = u.exp();
        let s: f64 = supp.iter().map(|&i| cx[i] * (-(xx[i] - xmin) / lam).exp_m1()).sum();
        gap + lam * s.ln_1p() + lam * eps
    };
    let (mut lo, mut hi) = (-LOG_LAMBDA_RANGE, LOG_LAMBDA_RANGE);
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut u1 = hi - r * (hi - lo);
    let mut u2 = lo + r * (hi - lo);
    let (mut g1, mut g2) = (g(u1), g(u2));
    for _ in 0..GOLDEN_ITERS {
        if hi - lo < 1e-10 {
            break;
        }
        if g1 <= g2 {
            hi = u2;
            u2 = u1;
            g2 = g1;
            u1 = hi - r * (hi - lo);
            g1 = g(u1);
        } else {
            lo = u1;
            u1 = u2;
            g1 = g2;
            u2 = lo + r * (hi - lo);
            g2 = g(u2);
        }
    }
    let (u_best, g_best) = if g1 <= g2 { (u1, g1) } else { (u2, g2) };
    let mut q = vec![0.0; cx.len()];
    let value;
    if gap <= g_best {
        // λ → 0: all mass on the cheapest supported entries
        value = -gap;
        let tie = 1e-12 * (1.0 + xmin.abs());
        let arg: Vec<usize> = supp.iter().copied().filter(|&i| xx[i] - xmin <= tie).collect();
        let mass: f64 = arg.iter().map(|&i| cx[i]).sum();
        for &i in &arg {
            q[i] = cx[i] / mass;
        }
    } else {
        value = -g_best;
        let lam = u_best.exp();
        let mut z = 0.0;
        for &i in &supp {
            q[i] = cx[i] * (-(xx[i] - xmin) / lam).exp();
            z += q[i];
        }
        for v in &mut q {
            *v /= z;
        }
    }
    q.pop();
    (value.min(0.0), q)
}

/// Default grid resolution for [`cb_min_grid_oracle`].
pub fn default_resolution(num_states: usize) -> usize {
    if num_states <= 2 {
        200
    } else {
        60
    }
}

pub const ORACLE_MAX_STATES: usize = 3;

/// Brute-force minimum over a grid of the substochastic simplex with step
/// `1/resolution`. The centre itself is always a candidate.
pub fn cb_min_grid_oracle(conf: &ConfidenceSet, s: usize, a: usize, x: &[f64], resolution: usize) -> Result<f64> {
    cb_min_grid_oracle_with(Exec::default(), conf, s, a, x, resolution)
}

pub fn cb_min_grid_oracle_with(
    exec: Exec,
    conf: &ConfidenceSet,
    s: usize,
    a: usize,
    x: &[f64],
    resolution: usize,
) -> Result<f64> {
    let c = conf.row(s, a);
    let n = c.len();
    if n > ORACLE_MAX_STATES {
        return Err(Error::TooManyStates { max: ORACLE_MAX_STATES, got: n });
    }
    if x.len() != n {
        return Err(Error::LengthMismatch(x.len(), n));
    }
    let eps = conf.eps(s, a);
    let kind = conf.kind;
    let aux = aux_constraint(conf, s, a);
    let res = resolution.max(1);
    let step = 1.0 / res as f64;
    let base = dot(c, x);
    let feasible = |row: &[f64]| {
        if divergence(kind, row, c) > eps + 1e-12 {
            return false;
        }
        match &aux {
            None => true,
            Some((set, limit, use_max)) => {
                let v = if *use_max {
                    set.iter().fold(0.0f64, |m, &i| m.max(row[i] * row[i]))
                } else {
                    set.iter().map(|&i| row[i] * row[i]).sum()
                };
                v <= limit + 1e-12
            }
        }
    };
    if n == 0 {
        return Ok(0.0);
    }
    let partial = par::map_range(exec, res + 1, |k0| {
        let mut best = f64::INFINITY;
        let mut row = vec![0.0; n];
        row[0] = k0 as f64 * step;
        let mut visit = |row: &[f64]| {
            if feasible(row) {
                best = best.min(dot(row, x) - base);
            }
        };
        match n {
            1 => visit(&row),
            2 => {
                for k1 in 0..=(res - k0) {
                    row[1] = k1 as f64 * step;
                    visit(&row);
                }
            }
            _ => {
                for k1 in 0..=(res - k0) {
                    row[1] = k1 as f64 * step;
                    for k2 in 0..=(res - k0 - k1) {
                        row[2] = k2 as f64 * step;
                        visit(&row);
                    }
                }
            }
        }
        best
    });
    Ok(partial.into_iter().fold(0.0, f64::min))
}

/// Extra constraint on the entries that were zero before a `Plus` modification:
/// `(indices, 1/n², use max instead of sum)`.
fn aux_constraint(conf: &ConfidenceSet, s: usize, a: usize) -> Option<(Vec<usize>, f64, bool)> {
    if !conf.modification.is_plus() {
        return None;
    }
    let use_max = match conf.kind {
        DivergenceKind::ChiSquared => false,
        DivergenceKind::VarWeightedLinf => true,
        _ => return None,
    };
    let set = conf.zero_sets.as_ref()?.get(s)?.get(a)?.clone();
    let n = *conf.counts.as_ref()?.get(s)?.get(a)? as f64;
    if set.is_empty() || n <= 0.0 {
        return None;
    }
    Some((set, 1.0 / (n * n), use_max))
}

/// Centred statistics of `x` under the centre row, over its support
/// including the goal atom (`x_g = 0`) when it carries mass.
pub fn bound_diagnostics(conf: &ConfidenceSet, s: usize, a: usize, x: &[f64]) -> BoundDiagnostics {
    diagnostics_for_row(conf.row(s, a), x)
}

pub fn diagnostics_for_row(row: &[f64], x: &[f64]) -> BoundDiagnostics {
    let mut p = explicit_goal_row(row);
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    let mut xx = x.to_vec();
    xx.push(0.0);
    let supp: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let mean: f64 = supp.iter().map(|&i| p[i] * xx[i]).sum();
    let centred: Vec<f64> = supp.iter().map(|&i| xx[i] - mean).collect();
    let variance: f64 = supp.iter().zip(&centred).map(|(&i, d)| p[i] * d * d).sum();
    let sup = centred.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let degenerate = sup == 0.0;
    BoundDiagnostics {
        variance_plus: variance,
        span_centered: span(&centred),
        sup_centered: sup,
        threshold_f: if degenerate { f64::INFINITY } else { variance / (sup * sup) },
        degenerate,
    }
}

/// Closed-form lower bound on the inner minimum at `(s, a)`.
pub fn cb_bound(variant: BoundVariant, conf: &ConfidenceSet, s: usize, a: usize, x: &[f64]) -> Result<f64> {
    if variant.needs_plus() && !conf.modification.is_plus() {
        return Err(Error::MissingModification(variant.name().into()));
    }
    let eps = conf.eps(s, a);
    let row = conf.row(s, a);
    let max_abs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(match variant {
        BoundVariant::L1Dagger => -eps * x.iter().copied().fold(0.0f64, f64::max),
        BoundVariant::SupDagger => -eps * x.iter().map(|v| v.abs()).sum::<f64>(),
        BoundVariant::KLPinsker | BoundVariant::ReverseKL => -2.0 * max_abs * (std::f64::consts::LN_2 / 2.0 * eps).sqrt(),
        BoundVariant::KLCumulant => {
            let d = diagnostics_for_row(row, x);
            if d.degenerate || eps <= d.threshold_f {
                -2.0 * (d.variance_plus * eps).sqrt()
            } else {
                -(d.variance_plus / d.sup_centered + d.sup_centered * eps)
            }
        }
        BoundVariant::KLHoeffding => {
            let d = diagnostics_for_row(row, x);
            -std::f64::consts::SQRT_2 * d.span_centered * eps.sqrt()
        }
        BoundVariant::ChiSquared => {
            let second: f64 = row.iter().zip(x).map(|(p, v)| p * v * v).sum();
            -(eps * second).sqrt()
        }
        BoundVariant::VarWeightedLinf => -row.iter().zip(x).map(|(p, v)| (p.sqrt() * v).abs()).sum::<f64>() * eps.sqrt(),
    })
}

/// `max(bound, -⟨P̂, x⟩)`.
pub fn clamp_dagger0(bound: f64, p_hat_row: &[f64], x: &[f64]) -> f64 {
    bound.max(-dot(p_hat_row, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn one_row(kind: DivergenceKind, row: Vec<f64>, eps: f64) -> ConfidenceSet {
        ConfidenceSet::new(kind, vec![vec![row]], vec![vec![eps]]).unwrap()
    }

    #[test]
    fn sup_norm_examples() {
        let conf = one_row(DivergenceKind::SupNorm, vec![0.5, 0.1], 0.3);
        let (v, row) = cb_min_exact(&conf, 0, 0, &[1.0, 0.5]).unwrap();
        assert_abs_diff_eq!(v, -0.35, epsilon = 1e-15);
        assert_abs_diff_eq!(row[0], 0.2, epsilon = 1e-15);
        assert_eq!(row[1], 0.0);
        let b = cb_bound(BoundVariant::SupDagger, &conf, 0, 0, &[1.0, 0.5]).unwrap();
        assert_abs_diff_eq!(b, -0.45, epsilon = 1e-15);
        assert_abs_diff_eq!(clamp_dagger0(b, conf.row(0, 0), &[1.0, 0.5]), -0.45, epsilon = 1e-15);
        let oracle = cb_min_grid_oracle(&conf, 0, 0, &[1.0, 0.5], 1000).unwrap();
        assert!((oracle + 0.35).abs() < 2e-3);
    }

    #[test]
    fn l1_dagger_formula() {
        let conf = one_row(DivergenceKind::L1, vec![0.5, 0.1], 0.3);
        assert_abs_diff_eq!(cb_bound(BoundVariant::L1Dagger, &conf, 0, 0, &[1.0, 0.5]).unwrap(), -0.3);
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_dagger0(-10.0, &[0.5], &[1.0]), -0.5);
        assert_eq!(clamp_dagger0(-0.1, &[0.5], &[1.0]), -0.1);
    }

    #[test]
    fn zero_radius_is_zero() {
        for kind in [DivergenceKind::L1, DivergenceKind::SupNorm, DivergenceKind::KL] {
            let conf = one_row(kind, vec![0.3, 0.4], 0.0);
            let (v, row) = cb_min_exact(&conf, 0, 0, &[2.0, 1.0]).unwrap();
            assert_eq!(v, 0.0);
            assert_eq!(row, vec![0.3, 0.4]);
        }
        let conf = one_row(DivergenceKind::KL, vec![0.3, 0.4], 0.0);
        assert_eq!(cb_bound(BoundVariant::KLPinsker, &conf, 0, 0, &[2.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn unsupported_and_negative() {
        let conf = one_row(DivergenceKind::ChiSquared, vec![0.3, 0.4], 0.1);
        assert!(matches!(cb_min_exact(&conf, 0, 0, &[1.0, 1.0]), Err(Error::UnsupportedDivergence(_))));
        let conf = one_row(DivergenceKind::L1, vec![0.3, 0.4], 0.1);
        assert_eq!(cb_min_exact(&conf, 0, 0, &[-1.0, 1.0]), Err(Error::NonNegativityViolated));
        assert!(matches!(
            cb_bound(BoundVariant::KLCumulant, &conf, 0, 0, &[1.0, 1.0]),
            Err(Error::MissingModification(_))
        ));
    }

    #[test]
    fn plus_example() {
        let m = modify_center(&[vec![vec![1.0, 0.0]]], &[vec![4]], Modification::Plus).unwrap();
        assert_abs_diff_eq!(m.center[0][0][0], 0.8);
        assert_abs_diff_eq!(m.center[0][0][1], 0.2);
        assert_eq!(m.zero_counts[0][0], 1);
        assert_eq!(m.zero_sets[0][0], vec![1]);
        assert_eq!(
            modify_center(&[vec![vec![1.0, 0.0]]], &[vec![0]], Modification::Plus),
            Err(Error::ZeroCounts { s: 0, a: 0 })
        );
    }

    #[test]
    fn star_example() {
        let m = modify_center(&[vec![vec![0.5, 0.5], vec![0.5, 0.25]]], &[vec![4, 4]], Modification::Star).unwrap();
        assert_abs_diff_eq!(goal_mass(&m.center[0][0]), 0.2, epsilon = 1e-15);
        assert_eq!(m.center[0][1], vec![0.5, 0.25]);
        assert_abs_diff_eq!(transform_radius(DivergenceKind::L1, Modification::Star, 0.1, 4, 0).unwrap(), 0.3);
    }

    #[test]
    fn diagnostics_example() {
        let d = diagnostics_for_row(&[0.5, 0.5], &[0.0, 1.0]);
        assert_abs_diff_eq!(d.variance_plus, 0.25);
        assert_abs_diff_eq!(d.sup_centered, 0.5);
        assert_abs_diff_eq!(d.span_centered, 0.5);
        assert_abs_diff_eq!(d.threshold_f, 1.0);
        assert!(!d.degenerate);
        let d = diagnostics_for_row(&[0.5, 0.5], &[2.0, 2.0]);
        assert!(d.degenerate);
        assert_eq!(d.variance_plus, 0.0);
        assert!(d.threshold_f.is_infinite());
    }

    #[test]
    fn huge_radius_removes_everything() {
        for kind in [DivergenceKind::L1, DivergenceKind::SupNorm] {
            let conf = one_row(kind, vec![0.3, 0.4], 5.0);
            let (v, _) = cb_min_exact(&conf, 0, 0, &[2.0, 1.0]).unwrap();
            assert_abs_diff_eq!(v, -1.0, epsilon = 1e-15);
            let o = cb_min_grid_oracle(&conf, 0, 0, &[2.0, 1.0], 50).unwrap();
            assert_abs_diff_eq!(o, -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn kl_exact_matches_oracle_on_fixed_row() {
        let conf = one_row(DivergenceKind::KL, vec![0.3, 0.5], 0.2);
        let x = [1.5, 0.4];
        let (v, row) = cb_min_exact(&conf, 0, 0, &x).unwrap();
        let o = cb_min_grid_oracle(&conf, 0, 0, &x, 400).unwrap();
        assert!(v <= o + 1e-12);
        assert!(o - v < 5e-3, "exact {v} oracle {o}");
        assert!(divergence(DivergenceKind::KL, &row, conf.row(0, 0)) <= 0.2 + 1e-6);
        assert_abs_diff_eq!(delta_value(&row, conf.row(0, 0), &x), v, epsilon = 1e-6);
    }

    #[test]
    fn oracle_rejects_large_rows() {
        let conf = one_row(DivergenceKind::L1, vec![0.1; 4], 0.1);
        assert!(matches!(cb_min_grid_oracle(&conf, 0, 0, &[1.0; 4], 10), Err(Error::TooManyStates { .. })));
    }

    fn lattice_row(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0u32..=20, n).prop_filter_map("substochastic", |k| {
            let total: u32 = k.iter().sum();
            (total <= 20).then(|| k.iter().map(|&v| v as f64 / 20.0).collect())
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn l1_exact_agrees_with_lattice_oracle(row in lattice_row(2), e in 0u32..=40, x in proptest::collection::vec(0.0f64..3.0, 2)) {
            let conf = one_row(DivergenceKind::L1, row, e as f64 / 40.0);
            let (v, r) = cb_min_exact(&conf, 0, 0, &x).unwrap();
            let o = cb_min_grid_oracle_with(Exec::Sequential, &conf, 0, 0, &x, 200).unwrap();
            prop_assert!((v - o).abs() <= 1e-6, "exact {} oracle {}", v, o);
            prop_assert!(divergence(DivergenceKind::L1, &r, conf.row(0, 0)) <= conf.eps(0, 0) + 1e-12);
            prop_assert!(r.iter().all(|&p| p >= 0.0) && r.iter().sum::<f64>() <= 1.0 + 1e-12);
        }

        #[test]
        fn exact_is_monotone_in_radius(row in lattice_row(3), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0, x in proptest::collection::vec(0.0f64..3.0, 3)) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            for kind in [DivergenceKind::L1, DivergenceKind::SupNorm, DivergenceKind::KL] {
                let v_lo = cb_min_exact(&one_row(kind, row.clone(), lo), 0, 0, &x).unwrap().0;
                let v_hi = cb_min_exact(&one_row(kind, row.clone(), hi), 0, 0, &x).unwrap().0;
                prop_assert!(v_hi <= v_lo + 1e-9);
                prop_assert!(v_lo <= 0.0);
            }
        }

        #[test]
        fn modified_rows_stay_substochastic(row in lattice_row(3), n in 1u64..50) {
            for mode in [Modification::Star, Modification::Plus, Modification::PlusWithGoal] {
                let m = modify_center(&[vec![row.clone()]], &[vec![n]], mode).unwrap();
                let out = &m.center[0][0];
                prop_assert!(out.iter().sum::<f64>() <= 1.0 + 1e-12);
                prop_assert!(out.iter().all(|&p| p >= 0.0));
                if mode.is_plus() {
                    prop_assert!(out.iter().all(|&p| p > 0.0));
                }
                if mode != Modification::Plus {
                    prop_assert!(goal_mass(out) > 0.0);
                }
            }
        }

        #[test]
        fn variance_matches_two_pass(p in lattice_row(3), x in proptest::collection::vec(0.0f64..5.0, 3)) {
            let d = diagnostics_for_row(&p, &x);
            let mut full = p.clone();
            full.push(goal_mass(&p));
            let mut xs = x.clone();
            xs.push(0.0);
            let m1: f64 = full.iter().zip(&xs).map(|(a, b)| a * b).sum();
            let m2: f64 = full.iter().zip(&xs).map(|(a, b)| a * b * b).sum();
            prop_assert!((d.variance_plus - (m2 - m1 * m1)).abs() < 1e-9);
        }
    }
}
