//! Scalar lemmas used by the bound derivations, plus a 1-D grid oracle.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Minimum of `a·λ + b/λ` over `λ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperbolaMin {
    pub location: f64,
    pub value: f64,
}

/// Feasible set for the shift in [`min_weighted_l1_deviation`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaConstraint {
    Free,
    NonPositive,
}

fn max_of(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(f: &[f64]) -> f64 {
    f.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Half the range of `f`, which is `min_λ ||f - λ1||_∞`. Zero for an empty slice.
pub fn span(f: &[f64]) -> f64 {
    if f.is_empty() {
        return 0.0;
    }
    (max_of(f) - min_of(f)) / 2.0
}

/// `min_{λ ≤ 0} ||f - λ1||_∞`, which equals `max(f)` for `f ≥ 0`.
pub fn min_sup_deviation_nonpos(f: &[f64]) -> Result<f64> {
    if f.iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeInput);
    }
    Ok(if f.is_empty() { 0.0 } else { max_of(f) })
}

/// Minimise `Σ a_i |b_i - λ|` over `λ`; returns `(λ*, value)`.
///
/// The free minimiser is the weighted median: the smallest sorted
/// breakpoint whose cumulative weight reaches half the total. Under the
/// nonpositive constraint the convex objective is minimised at
/// `min(median, 0)`.
pub fn min_weighted_l1_deviation(a: &[f64], b: &[f64], constraint: LambdaConstraint) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok((0.0, 0.0));
    }
    if a.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::NonPositiveWeight);
    }
    let mut idx: Vec<usize> = (0..b.len()).collect();
    idx.sort_by(|&i, &j| b[i].total_cmp(&b[j]));
    let total: f64 = a.iter().sum();
    let mut acc = 0.0;
    let mut median = b[idx[idx.len() - 1]];
    for &i in &idx {
        acc += a[i];
        if acc >= total / 2.0 {
            median = b[i];
            break;
        }
    }
    let lambda = match constraint {
        LambdaConstraint::Free => median,
        LambdaConstraint::NonPositive => median.min(0.0),
    };
    Ok((lambda, weighted_l1(a, b, lambda)))
}

fn weighted_l1(a: &[f64], b: &[f64], lambda: f64) -> f64 {
    a.iter().zip(b).map(|(w, v)| w * (v - lambda).abs()).sum()
}

/// Minimum of `a·λ + b/λ`: location `√(b/a)`, value `2√(ab)`.
pub fn min_hyperbola(a: f64, b: f64) -> Result<HyperbolaMin> {
    for v in [a, b] {
        if !(v > 0.0) {
            return Err(Error::NonPositiveInput(v));
        }
    }
    Ok(HyperbolaMin { location: (b / a).sqrt(), value: 2.0 * (a * b).sqrt() })
}

/// Minimum of `x·ln(x/a)` over `x > 0`: `(a/e, -a/e)`.
pub fn min_xlog(a: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) {
        return Err(Error::NonPositiveInput(a));
    }
    let loc = a / std::f64::consts::E;
    Ok((loc, -loc))
}

/// `E X + E X²/λ - λ ln E e^{X/λ}` for `X = x - <p,x>` under `p`.
///
/// `p` may be substochastic. Requires `λ ≥ max |X|` over the support of `p`.
pub fn cumulant_bound_margin(p: &[f64], x: &[f64], lambda: f64) -> Result<f64> {
    if p.len() != x.len() {
        return Err(Error::LengthMismatch(p.len(), x.len()));
    }
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeInput);
    }
    let mean: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
    let required = p
        .iter()
        .zip(x)
        .filter(|(w, _)| **w > 0.0)
        .fold(0.0f64, |m, (_, v)| m.max((v - mean).abs()));
    if !(lambda > 0.0) || lambda < required {
        return Err(Error::LambdaTooSmall { lambda, required });
    }
    let (mut ex, mut ex2, mut emgf) = (0.0, 0.0, 0.0);
    for (w, v) in p.iter().zip(x) {
        let d = v - mean;
        ex += w * d;
        ex2 += w * d * d;
        emgf += w * (d / lambda).exp();
    }
    if emgf <= 0.0 {
        return Ok(0.0);
    }
    Ok(ex + ex2 / lambda - lambda * emgf.ln())
}

/// Checks `max|x-y| ≥ |min x - min y|` and `max|x-y| ≥ |max x - max y|`.
pub fn minmax_rearrange_holds(x: &[f64], y: &[f64]) -> bool {
    if x.len() != y.len() || x.is_empty() {
        return x.len() == y.len();
    }
    let d = x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    // slack for rounding in the subtractions
    let slack = 1e-12 * (1.0 + d);
    d + slack >= (min_of(x) - min_of(y)).abs() && d + slack >= (max_of(x) - max_of(y)).abs()
}

/// Dense grid minimisation of a 1-D function on `[lo, hi]` with the given step.
/// Returns `(argmin, min)`; the endpoint `hi` is always evaluated.
pub fn grid_minimize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    assert!(step > 0.0 && hi >= lo);
    let n = ((hi - lo) / step).ceil() as usize;
    let mut best = (lo, f(lo));
    for i in 1..=n {
        let t = (lo + i as f64 * step).min(hi);
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn sup_dev(f: &[f64], l: f64) -> f64 {
        f.iter().fold(0.0f64, |m, v| m.max((v - l).abs()))
    }

    #[test]
    fn span_examples() {
        assert_eq!(span(&[3.0, 3.0, 3.0]), 0.0);
        assert_eq!(span(&[0.0, 2.0]), 1.0);
    }

    #[test]
    fn nonpos_deviation_examples() {
        assert_eq!(min_sup_deviation_nonpos(&[1.0, 0.5]).unwrap(), 1.0);
        assert_eq!(min_sup_deviation_nonpos(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(min_sup_deviation_nonpos(&[1.0, -0.5]), Err(Error::NegativeInput));
    }

    #[test]
    fn weighted_median_example() {
        let (l, v) =
            min_weighted_l1_deviation(&[0.3, 0.2, 0.2, 0.4], &[1.0, 3.0, 5.0, 6.0], LambdaConstraint::Free).unwrap();
        assert_eq!(l, 5.0);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn weighted_median_unit_weights_is_median() {
        let (l, v) = min_weighted_l1_deviation(&[1.0; 5], &[9.0, 1.0, 4.0, 7.0, 2.0], LambdaConstraint::Free).unwrap();
        assert_eq!(l, 4.0);
        assert_abs_diff_eq!(v, 5.0 + 3.0 + 3.0 + 2.0, epsilon = 1e-12);
        // exact half: smaller breakpoint wins
        let (l, _) = min_weighted_l1_deviation(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0], LambdaConstraint::Free).unwrap();
        assert_eq!(l, 2.0);
    }

    #[test]
    fn weighted_nonpositive_and_errors() {
        let (l, v) = min_weighted_l1_deviation(&[1.0, 2.0], &[0.5, 1.5], LambdaConstraint::NonPositive).unwrap();
        assert_eq!(l, 0.0);
        assert_abs_diff_eq!(v, 3.5, epsilon = 1e-15);
        assert_eq!(
            min_weighted_l1_deviation(&[1.0, 0.0], &[0.5, 1.5], LambdaConstraint::Free),
            Err(Error::NonPositiveWeight)
        );
    }

    #[test]
    fn hyperbola_and_xlog_examples() {
        let h = min_hyperbola(1.0, 2.0).unwrap();
        assert_abs_diff_eq!(h.location, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(h.value, 2.0 * 2f64.sqrt(), epsilon = 1e-15);
        let h = min_hyperbola(1.0, 1.0).unwrap();
        assert_eq!((h.location, h.value), (1.0, 2.0));
        let e = std::f64::consts::E;
        let (l, v) = min_xlog(2.0).unwrap();
        assert_abs_diff_eq!(l, 2.0 / e, epsilon = 1e-15);
        assert_abs_diff_eq!(v, -2.0 / e, epsilon = 1e-15);
        let (l, v) = min_xlog(e).unwrap();
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, -1.0, epsilon = 1e-15);
        assert!(min_hyperbola(0.0, 1.0).is_err());
        assert!(min_xlog(-1.0).is_err());
    }

    #[test]
    fn cumulant_examples() {
        assert_abs_diff_eq!(cumulant_bound_margin(&[0.5, 0.5], &[2.0, 2.0], 1.0).unwrap(), 0.0, epsilon = 1e-15);
        assert!(cumulant_bound_margin(&[0.5, 0.5], &[0.0, 1.0], 1.0).unwrap() >= 0.0);
        assert!(matches!(
            cumulant_bound_margin(&[0.5, 0.5], &[0.0, 1.0], 0.4),
            Err(Error::LambdaTooSmall { .. })
        ));
    }

    #[test]
    fn rearrangement_examples() {
        assert!(minmax_rearrange_holds(&[1.0, 2.0], &[1.0, 2.0]));
        assert!(minmax_rearrange_holds(&[1.0, 0.9], &[1.0, 2.0]));
    }

    proptest! {
        #[test]
        fn span_matches_grid(f in prop::collection::vec(-5.0f64..5.0, 1..6)) {
            let lo = f.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (_, g) = grid_minimize(|l| sup_dev(&f, l), lo - 1.0, hi + 1.0, 1e-4);
            prop_assert!((span(&f) - g).abs() <= 1e-4);
            prop_assert!(span(&f) <= g + 1e-12);
        }

        #[test]
        fn nonpos_matches_grid(f in prop::collection::vec(0.0f64..5.0, 1..6)) {
            let (_, g) = grid_minimize(|l| sup_dev(&f, l), -6.0, 0.0, 1e-4);
            let v = min_sup_deviation_nonpos(&f).unwrap();
            prop_assert!((v - g).abs() <= 1e-4);
        }

        #[test]
        fn weighted_matches_grid(
            pairs in prop::collection::vec((0.05f64..2.0, -3.0f64..3.0), 1..7)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let (l, v) = min_weighted_l1_deviation(&a, &b, LambdaConstraint::Free).unwrap();
            let (_, g) = grid_minimize(|t| weighted_l1(&a, &b, t), -3.5, 3.5, 1e-4);
            let wsum: f64 = a.iter().sum();
            prop_assert!(v <= g + 1e-12);
            prop_assert!(g - v <= wsum * 1e-4);
            prop_assert!((weighted_l1(&a, &b, l) - v).abs() < 1e-12);
            let (ln, vn) = min_weighted_l1_deviation(&a, &b, LambdaConstraint::NonPositive).unwrap();
            let (_, gn) = grid_minimize(|t| weighted_l1(&a, &b, t), -3.5, 0.0, 1e-4);
            prop_assert!(ln <= 0.0);
            prop_assert!(vn <= gn + 1e-12 && gn - vn <= wsum * 1e-4);
        }

        #[test]
        fn hyperbola_is_global_min(a in 0.01f64..10.0, b in 0.01f64..10.0) {
            let h = min_hyperbola(a, b).unwrap();
            prop_assert!((h.value - (a * h.location + b / h.location)).abs() <= 1e-12 * h.value.max(1.0));
            let (_, g) = grid_minimize(|l| a * l + b / l, 1e-3, 100.0, 1e-3);
            prop_assert!(h.value <= g + 1e-12);
        }

        #[test]
        fn xlog_is_global_min(a in 0.01f64..10.0) {
            let (_, v) = min_xlog(a).unwrap();
            let (_, g) = grid_minimize(|x| x * (x / a).ln(), 1e-4, 20.0, 1e-4);
            prop_assert!(v <= g + 1e-12);
            prop_assert!(g - v <= 1e-4);
        }

        #[test]
        fn cumulant_margin_nonnegative(
            raw in prop::collection::vec((0.0f64..1.0, 0.0f64..5.0), 1..6),
            mass in 0.1f64..1.0,
            extra in 1.0f64..4.0,
        ) {
            let tot: f64 = raw.iter().map(|r| r.0).sum::<f64>().max(1e-9);
            let p: Vec<f64> = raw.iter().map(|r| r.0 / tot * mass).collect();
            let x: Vec<f64> = raw.iter().map(|r| r.1).collect();
            let mean: f64 = p.iter().zip(&x).map(|(a, b)| a * b).sum();
            let req = p.iter().zip(&x).filter(|(w, _)| **w > 0.0).fold(0.0f64, |m, (_, v)| m.max((v - mean).abs()));
            let lambda = (req * extra).max(1e-6);
            prop_assert!(cumulant_bound_margin(&p, &x, lambda).unwrap() >= -1e-12);
        }

        #[test]
        fn rearrangement_always_holds(
            xy in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..8)
        ) {
            let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
            let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
            prop_assert!(minmax_rearrange_holds(&x, &y));
        }
    }
}
