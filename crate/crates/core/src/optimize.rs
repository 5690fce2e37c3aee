//! One-dimensional minimization: uniform scan followed by golden-section
//! refinement of the best cell.
//!
//! Non-finite objective values are treated as `+inf`, so callers can mark a
//! probe invalid by returning `f64::NAN` or `f64::INFINITY`.

/// 1 / golden ratio.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Values within `tol * max(1, |v|)` of each other compare as equal; the
/// smaller abscissa then wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieTolerance(pub f64);

impl TieTolerance {
    pub const EXACT: TieTolerance = TieTolerance(0.0);

    /// `true` if `(x, v)` beats `(best_x, best)`.
    fn improves(self, x: f64, v: f64, best_x: f64, best: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        if !best.is_finite() {
            return true;
        }
        let slack = self.0 * best.abs().max(1.0);
        v < best - slack || ((v - best).abs() <= slack && x < best_x)
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Golden-section search on `[lo, hi]` until the bracket is narrower than `tol`.
///
/// On ties the left sub-interval is kept, so a flat objective converges to `lo`.
/// The returned point is the best probe seen.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, ties: TieTolerance) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    let mut evaluations = 2;
    let mut best = if ties.improves(d, fd, c, fc) {
        Minimum { x: d, value: fd, evaluations }
    } else {
        Minimum { x: c, value: fc, evaluations }
    };
    while b - a > tol {
        // keep [a, d] unless d is strictly better than c
        if !ties.improves(d, fd, c, fc) {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sanitize(f(c));
            evaluations += 1;
            if ties.improves(c, fc, best.x, best.value) {
                best = Minimum { x: c, value: fc, evaluations };
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sanitize(f(d));
            evaluations += 1;
            if ties.improves(d, fd, best.x, best.value) {
                best = Minimum { x: d, value: fd, evaluations };
            }
        }
    }
    best.evaluations = evaluations;
    best
}

/// Scan `grid_points` equispaced probes on `[lo, hi]` (endpoints included),
/// then refine the bracket around the best probe with golden-section search.
///
/// The result is never worse than the best probe.
pub fn scan_then_refine<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    grid_points: usize,
    tol: f64,
    ties: TieTolerance,
) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    assert!(grid_points >= 2 && hi > lo);
    let step = (hi - lo) / (grid_points - 1) as f64;
    let probe = |k: usize| if k + 1 == grid_points { hi } else { lo + step * k as f64 };
    let mut best_k = 0;
    let mut best = Minimum {
        x: lo,
        value: f64::INFINITY,
        evaluations: 0,
    };
    for k in 0..grid_points {
        let x = probe(k);
        let v = sanitize(f(x));
        if ties.improves(x, v, best.x, best.value) {
            best_k = k;
            best.x = x;
            best.value = v;
        }
    }
    best.evaluations = grid_points;
    if !best.value.is_finite() {
        return best;
    }
    let left = probe(best_k.saturating_sub(1));
    let right = probe((best_k + 1).min(grid_points - 1));
    let refined = golden_section(&mut f, left, right, tol, ties);
    let evaluations = best.evaluations + refined.evaluations;
    let mut out = if ties.improves(refined.x, refined.value, best.x, best.value) {
        refined
    } else {
        best
    };
    out.evaluations = evaluations;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn golden_finds_parabola_vertex() {
        let m = golden_section(|x| (x - 1.3).powi(2), 0.0, 5.0, 1e-9, TieTolerance::EXACT);
        assert_abs_diff_eq!(m.x, 1.3, epsilon = 1e-8);
    }

    #[test]
    fn flat_objective_goes_left() {
        let m = golden_section(|_| 2.0, 1.0, 4.0, 1e-8, TieTolerance::EXACT);
        assert!(m.x - 1.0 < 1e-7, "{m:?}");
        let s = scan_then_refine(|_| 2.0, 1.0, 4.0, 33, 1e-6, TieTolerance::EXACT);
        assert_eq!(s.x, 1.0);
    }

    #[test]
    fn scan_handles_boundary_minimum() {
        let s = scan_then_refine(|x| x, 0.0, 10.0, 11, 1e-8, TieTolerance::EXACT);
        assert_eq!(s.x, 0.0);
        let s = scan_then_refine(|x| -x, 0.0, 10.0, 11, 1e-8, TieTolerance::EXACT);
        assert_abs_diff_eq!(s.x, 10.0, epsilon = 1e-8);
    }

    #[test]
    fn invalid_probes_are_skipped() {
        let s = scan_then_refine(
            |x| if x < 3.0 { f64::NAN } else { (x - 4.0).abs() },
            0.0,
            10.0,
            21,
            1e-8,
            TieTolerance::EXACT,
        );
        assert_abs_diff_eq!(s.x, 4.0, epsilon = 1e-7);
        let none = scan_then_refine(|_| f64::NAN, 0.0, 1.0, 5, 1e-8, TieTolerance::EXACT);
        assert!(none.value.is_infinite());
    }

    #[test]
    fn tie_tolerance_prefers_smaller_abscissa() {
        let t = TieTolerance(1e-12);
        assert!(t.improves(1.0, 5.0 + 1e-13, 2.0, 5.0));
        assert!(!t.improves(3.0, 5.0 - 1e-13, 2.0, 5.0));
        assert!(t.improves(3.0, 4.0, 2.0, 5.0));
    }
}
