//! Derivative-free one-dimensional root isolation and minimisation.

use crate::{Error, Interval, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Root of a continuous `f` on `[lo, hi]` with `f(lo)` and `f(hi)` of opposite
/// sign (or zero). Returns `None` when the endpoints do not bracket a root.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Some(lo);
    }
    if f_hi == 0.0 {
        return Some(hi);
    }
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return None;
    }
    // 200 halvings exhaust f64 resolution for any finite bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid == lo || mid == hi {
            return Some(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Some(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Golden-section search for a minimum of a unimodal `f` on `[lo, hi]`.
/// Returns `(x_min, f(x_min))`, with `x_min` located to within `tol`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bracketed minimisation: scan `search` on a uniform grid of `grid_points`,
/// take the lowest interior sample as the bracket centre and refine it by
/// golden-section search to `tol`.
///
/// Fails with [`Error::BoundaryOptimum`] when the grid minimum sits on either
/// end of the search interval and with [`Error::NoBracket`] when the objective
/// is non-finite or constant over the grid.
pub fn bracketed_minimum<F>(
    mut f: F,
    search: Interval,
    grid_points: usize,
    tol: f64,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    if !search.is_valid() || search.width() <= 0.0 {
        return Err(Error::invalid("search", "interval must have positive width"));
    }
    let n = grid_points.max(5);
    let step = search.width() / (n - 1) as f64;
    let at = |i: usize| {
        if i == n - 1 {
            search.hi
        } else {
            search.lo + step * i as f64
        }
    };

    let mut best = None::<(usize, f64)>;
    let mut highest = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(at(i));
        if !v.is_finite() {
            continue;
        }
        highest = highest.max(v);
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let Some((idx, best_value)) = best else {
        return Err(Error::NoBracket { search });
    };
    if best_value == highest {
        return Err(Error::NoBracket { search });
    }
    if idx == 0 || idx == n - 1 {
        return Err(Error::BoundaryOptimum { at: at(idx), search });
    }
    let (x, fx) = golden_section(&mut f, at(idx - 1), at(idx + 1), tol);
    // The refinement may drift to a slightly worse local value on a noisy
    // objective; never return something worse than the grid sample.
    if fx <= best_value {
        Ok((x, fx))
    } else {
        Ok((at(idx), best_value))
    }
}
