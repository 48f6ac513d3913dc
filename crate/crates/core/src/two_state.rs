//! Piecewise analysis of the single-policy ℓ1 dagger operator on two states.
//!
//! The operator is affine on each of seven regions. A piece is named by the
//! column the radius is charged to (the argmax of `x`) and by which rows are
//! clamped at zero:
//!
//! | piece | argmax column | clamped rows |
//! |-------|---------------|--------------|
//! | P1    | 1             | none         |
//! | P2    | 2             | none         |
//! | P11   | 1             | row 2        |
//! | P21   | 2             | row 2        |
//! | P12   | 1             | row 1        |
//! | P22   | 2             | row 1        |
//! | P0    | -             | both         |

use serde::{Deserialize, Serialize};

use crate::divergence::{ConfidenceSet, DivergenceKind};
use crate::linalg::eig2;
use crate::mdp::SspInstance;
use crate::{Error, Result};

/// Slack used for box and region membership.
pub const REGION_SLACK: f64 = 1e-9;
/// Tolerance for calling two candidate points equal.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStateParams {
    /// `p[s][s']` for the fixed policy.
    pub p: [[f64; 2]; 2],
    pub eps: [f64; 2],
    pub c: [f64; 2],
}

impl TwoStateParams {
    pub fn new(p11: f64, p12: f64, p21: f64, p22: f64, eps: [f64; 2], c: [f64; 2]) -> Self {
        TwoStateParams { p: [[p11, p12], [p21, p22]], eps, c }
    }

    pub fn validate(&self) -> Result<()> {
        self.instance()?;
        if self.eps.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::InvalidInstance("radius must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<SspInstance> {
        SspInstance::single_action(self.c.to_vec(), self.p.iter().map(|r| r.to_vec()).collect())
    }

    pub fn confidence(&self) -> Result<ConfidenceSet> {
        ConfidenceSet::per_state(DivergenceKind::L1, &self.instance()?, &self.eps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PieceLabel {
    P0,
    P1,
    P2,
    P11,
    P12,
    P21,
    P22,
}

impl PieceLabel {
    pub const ALL: [PieceLabel; 7] =
        [PieceLabel::P0, PieceLabel::P1, PieceLabel::P2, PieceLabel::P11, PieceLabel::P12, PieceLabel::P21, PieceLabel::P22];

    pub fn name(self) -> &'static str {
        match self {
            PieceLabel::P0 => "P0",
            PieceLabel::P1 => "P1",
            PieceLabel::P2 => "P2",
            PieceLabel::P11 => "P11",
            PieceLabel::P12 => "P12",
            PieceLabel::P21 => "P21",
            PieceLabel::P22 => "P22",
        }
    }

    /// Column charged with the radius, if any.
    pub fn argmax(self) -> Option<usize> {
        match self {
            PieceLabel::P0 => None,
            PieceLabel::P1 | PieceLabel::P11 | PieceLabel::P12 => Some(0),
            PieceLabel::P2 | PieceLabel::P21 | PieceLabel::P22 => Some(1),
        }
    }

    /// Whether row `s` is clamped to zero.
    pub fn clamped(self, s: usize) -> bool {
        match self {
            PieceLabel::P0 => true,
            PieceLabel::P1 | PieceLabel::P2 => false,
            PieceLabel::P11 | PieceLabel::P21 => s == 1,
            PieceLabel::P12 | PieceLabel::P22 => s == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivePiece {
    pub label: PieceLabel,
    pub matrix: [[f64; 2]; 2],
    /// `(I - matrix)^{-1} c`, or `None` when singular.
    pub fixed_point: Option<[f64; 2]>,
    /// `(re, im)` pairs.
    pub eigenvalues: [(f64, f64); 2],
    pub spectral_radius: f64,
    pub is_contraction: bool,
    /// The fixed point has the piece's argmax ordering.
    pub in_argmax_region: bool,
    /// The fixed point has the piece's argmax ordering and clamp pattern.
    pub in_active_region: bool,
}

pub fn piece_matrix(params: &TwoStateParams, label: PieceLabel) -> [[f64; 2]; 2] {
    let mut m = params.p;
    if let Some(col) = label.argmax() {
        for (s, row) in m.iter_mut().enumerate() {
            row[col] -= params.eps[s];
        }
    }
    for (s, row) in m.iter_mut().enumerate() {
        if label.clamped(s) {
            *row = [0.0, 0.0];
        }
    }
    m
}

/// `(I - m)^{-1} c` by the closed-form 2×2 inverse.
pub fn solve_fixed_point(m: [[f64; 2]; 2], c: [f64; 2]) -> Option<[f64; 2]> {
    let a = 1.0 - m[0][0];
    let b = -m[0][1];
    let cc = -m[1][0];
    let d = 1.0 - m[1][1];
    let det = a * d - b * cc;
    let scale = a.abs().max(b.abs()).max(cc.abs()).max(d.abs()).max(1.0);
    if det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    Some([(d * c[0] - b * c[1]) / det, (a * c[1] - cc * c[0]) / det])
}

/// Value of row `s` before the clamp, with the radius charged to `col`.
fn pre_clamp(params: &TwoStateParams, s: usize, col: usize, x: [f64; 2]) -> f64 {
    params.p[s][0] * x[0] + params.p[s][1] * x[1] - params.eps[s] * x[col]
}

fn argmax_ok(label: PieceLabel, x: [f64; 2]) -> bool {
    match label.argmax() {
        None => true,
        Some(0) => x[0] >= x[1] - REGION_SLACK,
        Some(_) => x[1] >= x[0] - REGION_SLACK,
    }
}

fn region_ok(params: &TwoStateParams, label: PieceLabel, x: [f64; 2]) -> bool {
    if !argmax_ok(label, x) {
        return false;
    }
    let col = label.argmax().unwrap_or(if x[0] >= x[1] { 0 } else { 1 });
    (0..2).all(|s| {
        let v = pre_clamp(params, s, col, x);
        if label.clamped(s) {
            v <= REGION_SLACK
        } else {
            v >= -REGION_SLACK
        }
    })
}

pub fn build_piece(params: &TwoStateParams, label: PieceLabel) -> ActivePiece {
    let matrix = piece_matrix(params, label);
    let eigenvalues = eig2(matrix);
    let spectral_radius = eigenvalues.iter().map(|(re, im)| re.hypot(*im)).fold(0.0, f64::max);
    let fixed_point = solve_fixed_point(matrix, params.c);
    let (in_argmax_region, in_active_region) = match fixed_point {
        Some(x) => (argmax_ok(label, x), region_ok(params, label, x)),
        None => (false, false),
    };
    ActivePiece {
        label,
        matrix,
        fixed_point,
        eigenvalues,
        spectral_radius,
        is_contraction: spectral_radius < 1.0 - 1e-12,
        in_argmax_region,
        in_active_region,
    }
}

/// All seven pieces in the order P0, P1, P2, P11, P12, P21, P22.
pub fn enumerate_pieces(params: &TwoStateParams) -> Result<Vec<ActivePiece>> {
    params.validate()?;
    Ok(PieceLabel::ALL.iter().map(|&l| build_piece(params, l)).collect())
}

/// True when the column-2 piece can fail to contract.
pub fn contraction_violation(p: [[f64; 2]; 2], eps: [f64; 2]) -> bool {
    let [[p11, p12], [p21, p22]] = p;
    let [e1, e2] = eps;
    p11 + p22 < e2 && 1.0 + p11 * (p22 - e2) + p11 + p22 - e2 < (p12 - e1) * p21
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardReason {
    Singular,
    OutsideBox,
    OutsideRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureOutcome {
    pub candidate: [f64; 2],
    pub label: PieceLabel,
    /// Fixed point of the undagged operator at the centre; the box's upper corner.
    pub j_star: [f64; 2],
    pub discarded: Vec<(PieceLabel, DiscardReason)>,
    /// Set when distinct survivors tie for the final choice.
    pub ambiguous: bool,
    /// Every survivor tied with the returned one (including it).
    pub tied: Vec<(PieceLabel, [f64; 2])>,
}

/// Pick the operator's fixed point among the piece fixed points: keep those in
/// `[c, J*]` and in their own region, prefer P1/P2, else the largest sum.
pub fn fixed_point_procedure(params: &TwoStateParams) -> Result<ProcedureOutcome> {
    let pieces = enumerate_pieces(params)?;
    let j_star = solve_fixed_point(params.p, params.c).unwrap_or([f64::INFINITY; 2]);
    let mut discarded = Vec::new();
    let mut survivors: Vec<(PieceLabel, [f64; 2])> = Vec::new();
    for piece in &pieces {
        let Some(x) = piece.fixed_point else {
            discarded.push((piece.label, DiscardReason::Singular));
            continue;
        };
        let in_box = (0..2).all(|s| x[s] >= params.c[s] - REGION_SLACK && x[s] <= j_star[s] + REGION_SLACK);
        if !in_box {
            discarded.push((piece.label, DiscardReason::OutsideBox));
        } else if !piece.in_active_region {
            discarded.push((piece.label, DiscardReason::OutsideRegion));
        } else {
            survivors.push((piece.label, x));
        }
    }
    if survivors.is_empty() {
        return Err(Error::NoCandidate);
    }
    let main: Vec<(PieceLabel, [f64; 2])> =
        survivors.iter().copied().filter(|(l, _)| matches!(l, PieceLabel::P1 | PieceLabel::P2)).collect();
    let (pool, by_sum) = if main.is_empty() { (survivors, true) } else { (main, false) };
    let best = if by_sum {
        pool.iter().copied().fold(pool[0], |b, cand| if sum(cand.1) > sum(b.1) + TIE_TOL { cand } else { b })
    } else {
        pool[0]
    };
    let tied: Vec<(PieceLabel, [f64; 2])> = pool
        .iter()
        .copied()
        .filter(|(_, x)| if by_sum { (sum(*x) - sum(best.1)).abs() <= TIE_TOL } else { true })
        .collect();
    let ambiguous = tied.iter().any(|(_, x)| dist(*x, best.1) > TIE_TOL);
    Ok(ProcedureOutcome { candidate: best.1, label: best.0, j_star, discarded, ambiguous, tied })
}

fn sum(x: [f64; 2]) -> f64 {
    x[0] + x[1]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs().max((a[1] - b[1]).abs())
}

/// At most one piece of each pair `(P1,P2)`, `(P11,P21)`, `(P12,P22)` has its
/// fixed point on its own side of the diagonal, unless both coincide there.
pub fn pair_exclusivity_check(params: &TwoStateParams) -> Result<bool> {
    let pieces = enumerate_pieces(params)?;
    let get = |l: PieceLabel| pieces.iter().find(|p| p.label == l).expect("all pieces built");
    let pairs = [(PieceLabel::P1, PieceLabel::P2), (PieceLabel::P11, PieceLabel::P21), (PieceLabel::P12, PieceLabel::P22)];
    Ok(pairs.iter().all(|&(a, b)| {
        let (pa, pb) = (get(a), get(b));
        if !(pa.in_argmax_region && pb.in_argmax_region) {
            return true;
        }
        match (pa.fixed_point, pb.fixed_point) {
            (Some(x), Some(y)) => {
                let scale = 1.0 + x[0].abs().max(x[1].abs());
                dist(x, y) <= 1e-6 * scale && (x[0] - x[1]).abs() <= 1e-6 * scale
            }
            _ => true,
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evi::apply_dagger0;
    use crate::divergence::BoundVariant;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn first() -> TwoStateParams {
        TwoStateParams::new(0.1, 0.89, 0.89, 0.1, [0.1, 0.9], [0.01, 0.01])
    }

    fn oscillating() -> TwoStateParams {
        TwoStateParams::new(0.00001, 0.999, 0.999, 0.00001, [0.2, 0.1], [0.3, 0.1])
    }

    fn sorted_real(p: &ActivePiece) -> [f64; 2] {
        let mut v = [p.eigenvalues[0].0, p.eigenvalues[1].0];
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn piece_matrices_match_hand_built() {
        let pr = first();
        assert_eq!(piece_matrix(&pr, PieceLabel::P1), [[0.1 - 0.1, 0.89], [0.89 - 0.9, 0.1]]);
        assert_eq!(piece_matrix(&pr, PieceLabel::P2), [[0.1, 0.89 - 0.1], [0.89, 0.1 - 0.9]]);
        assert_eq!(piece_matrix(&pr, PieceLabel::P11), [[0.1 - 0.1, 0.89], [0.0, 0.0]]);
        assert_eq!(piece_matrix(&pr, PieceLabel::P21), [[0.1, 0.89 - 0.1], [0.0, 0.0]]);
        assert_eq!(piece_matrix(&pr, PieceLabel::P12), [[0.0, 0.0], [0.89 - 0.9, 0.1]]);
        assert_eq!(piece_matrix(&pr, PieceLabel::P22), [[0.0, 0.0], [0.89, 0.1 - 0.9]]);
        assert_eq!(piece_matrix(&pr, PieceLabel::P0), [[0.0; 2]; 2]);
    }

    #[test]
    fn first_example_pieces() {
        let pieces = enumerate_pieces(&first()).unwrap();
        let p2 = &pieces[2];
        let ev = sorted_real(p2);
        assert_abs_diff_eq!(ev[0], -1.3016, epsilon = 1e-3);
        assert_abs_diff_eq!(ev[1], 0.6016, epsilon = 1e-3);
        assert!(!p2.is_contraction);
        assert!(contraction_violation(first().p, first().eps));
        let main_active = pieces[1..3].iter().filter(|p| p.in_argmax_region).count();
        assert_eq!(main_active, 1);
    }

    #[test]
    fn first_example_procedure() {
        let out = fixed_point_procedure(&first()).unwrap();
        assert_abs_diff_eq!(out.candidate[0], 0.019694135768511, epsilon = 1e-9);
        assert_abs_diff_eq!(out.candidate[1], 0.010892287380350, epsilon = 1e-9);
        assert!(!out.ambiguous);
    }

    #[test]
    fn oscillating_procedure_point_is_fixed() {
        let pr = oscillating();
        let out = fixed_point_procedure(&pr).unwrap();
        let inst = pr.instance().unwrap();
        let conf = pr.confidence().unwrap();
        let y = apply_dagger0(&inst, &conf, BoundVariant::L1Dagger, &out.candidate, None).unwrap();
        assert!((y[0] - out.candidate[0]).abs() < 1e-8 && (y[1] - out.candidate[1]).abs() < 1e-8);
        let piece = build_piece(&pr, out.label);
        let ev = sorted_real(&piece);
        assert_abs_diff_eq!(ev[0], -1.0529, epsilon = 1e-3);
        assert_abs_diff_eq!(ev[1], 0.85295, epsilon = 1e-3);
    }

    #[test]
    fn large_radius_returns_costs() {
        let pr = TwoStateParams::new(0.3, 0.4, 0.2, 0.5, [1.2, 1.5], [0.4, 0.7]);
        let out = fixed_point_procedure(&pr).unwrap();
        assert_eq!(out.label, PieceLabel::P0);
        assert_eq!(out.candidate, [0.4, 0.7]);
    }

    #[test]
    fn zero_radius_pieces_agree() {
        let pr = TwoStateParams::new(0.3, 0.4, 0.2, 0.5, [0.0, 0.0], [0.4, 0.7]);
        let pieces = enumerate_pieces(&pr).unwrap();
        assert_eq!(pieces[1].matrix, pieces[2].matrix);
        assert!(pieces[1].is_contraction && pieces[2].is_contraction);
    }

    #[test]
    fn symmetric_instance_is_degenerate() {
        let pr = TwoStateParams::new(0.2, 0.5, 0.5, 0.2, [0.3, 0.3], [0.5, 0.5]);
        let pieces = enumerate_pieces(&pr).unwrap();
        let (x, y) = (pieces[1].fixed_point.unwrap(), pieces[2].fixed_point.unwrap());
        assert_abs_diff_eq!(x[0], x[1], epsilon = 1e-12);
        assert_abs_diff_eq!(x[0], y[0], epsilon = 1e-12);
        assert!(pair_exclusivity_check(&pr).unwrap());
    }

    #[test]
    fn eigen_identities() {
        for p in enumerate_pieces(&oscillating()).unwrap() {
            let m = p.matrix;
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let [(a, b), (c, d)] = p.eigenvalues;
            assert_abs_diff_eq!(a + c, tr, epsilon = 1e-12);
            assert_abs_diff_eq!(b + d, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(a * c - b * d, det, epsilon = 1e-12);
        }
    }

    fn params() -> impl Strategy<Value = TwoStateParams> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0, 0.01f64..1.0)
            .prop_map(|(a, b, c, d, e1, e2, c1, c2)| {
                // scale rows so they stay substochastic
                let r1 = (a + b).max(1.0);
                let r2 = (c + d).max(1.0);
                TwoStateParams::new(a / r1, b / r1, c / r2, d / r2, [e1, e2], [c1, c2])
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn no_violation_means_contraction(pr in params()) {
            if !contraction_violation(pr.p, pr.eps) {
                let p2 = build_piece(&pr, PieceLabel::P2);
                prop_assert!(p2.spectral_radius < 1.0, "{:?} radius {}", pr, p2.spectral_radius);
            }
        }

        #[test]
        fn violation_needs_larger_second_radius(pr in params()) {
            if pr.eps[1] <= pr.eps[0] {
                prop_assert!(!contraction_violation(pr.p, pr.eps));
            }
        }

        #[test]
        fn pairs_are_exclusive(pr in params()) {
            prop_assert!(pair_exclusivity_check(&pr).unwrap());
        }
    }
}
