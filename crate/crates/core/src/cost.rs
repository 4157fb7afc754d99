//! Convex cost on the diffusion coefficient, its conjugate, and the
//! pointwise projection onto the dual constraint set
//! `K = {(a, b) : a + F*(b) <= 0}`.
//!
//! The implemented family is the quadratic-with-positivity cost
//!
//! ```text
//! F(g) = (g - gamma_bar)^2   for g >= 0,      F(g) = +inf   for g < 0,
//! ```
//!
//! whose conjugate has the closed form (sup restricted to `g >= 0`):
//!
//! ```text
//! F*(b) = gamma_bar * b + b^2 / 4    for b >= -2 gamma_bar,
//! F*(b) = -gamma_bar^2               for b <  -2 gamma_bar.
//! ```
//!
//! The inner maximizer is `g* = gamma_bar + b/2` when nonnegative and `0`
//! otherwise; the two branches meet continuously (and C^1) at the kink
//! `b = -2 gamma_bar`. The closed form is validated against a dense grid
//! search of the defining supremum in the tests.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Membership slack under which a point counts as already inside `K`.
const MEMBERSHIP_TOL: f64 = 1e-12;
/// Convergence threshold on the derivative of the projection objective.
const H_PRIME_TOL: f64 = 1e-12;
/// Convergence threshold on the safeguard bracket width.
const BRACKET_TOL: f64 = 1e-14;
/// Iteration cap for the safeguarded Newton search.
const MAX_PROJECTION_ITERS: usize = 200;

/// Tag for the cost family. Only the quadratic-with-positivity family used
/// by the Gaussian benchmark is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    QuadraticPositive,
}

/// Convex cost model on the diffusion coefficient `gamma = sigma^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel<S> {
    gamma_bar: S,
    kind: CostKind,
}

/// A point of the dual constraint set `K` (or a candidate for projection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KPoint<S> {
    pub a: S,
    pub b: S,
}

impl<S: Scalar> CostModel<S> {
    /// Quadratic cost centered at `gamma_bar > 0`, infinite on negatives.
    pub fn quadratic(gamma_bar: S) -> Result<Self> {
        if !(gamma_bar > S::zero()) || !gamma_bar.is_finite() {
            return Err(Error::Validation(format!(
                "cost.gamma_bar must be > 0 (got {gamma_bar})"
            )));
        }
        Ok(Self {
            gamma_bar,
            kind: CostKind::QuadraticPositive,
        })
    }

    pub fn gamma_bar(&self) -> S {
        self.gamma_bar
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    /// Cost value `F(gamma)`; `+inf` for negative arguments.
    pub fn f_eval(&self, gamma: S) -> S {
        if gamma < S::zero() {
            S::infinity()
        } else {
            let d = gamma - self.gamma_bar;
            d * d
        }
    }

    /// Derivative `F'(gamma) = 2 (gamma - gamma_bar)` on the finite branch.
    pub fn f_deriv(&self, gamma: S) -> S {
        S::cast(2.0) * (gamma - self.gamma_bar)
    }

    /// Convex conjugate `F*(b) = sup_{g >= 0} (b g - F(g))` in closed form.
    pub fn f_conj(&self, b: S) -> S {
        let gb = self.gamma_bar;
        if b >= -S::cast(2.0) * gb {
            gb * b + b * b * S::cast(0.25)
        } else {
            -gb * gb
        }
    }

    /// Derivative of the conjugate; the two branches agree at the kink, and
    /// the active-branch (right-hand) expression is used there.
    pub fn f_conj_deriv(&self, b: S) -> S {
        let gb = self.gamma_bar;
        if b >= -S::cast(2.0) * gb {
            gb + b * S::cast(0.5)
        } else {
            S::zero()
        }
    }

    /// Second derivative of the conjugate away from the kink; the
    /// active-branch value is used at the kink itself.
    fn f_conj_second(&self, b: S) -> S {
        if b >= -S::cast(2.0) * self.gamma_bar {
            S::cast(0.5)
        } else {
            S::zero()
        }
    }

    /// True if `(a, b)` satisfies the constraint up to the membership slack.
    pub fn in_k(&self, a: S, b: S) -> bool {
        a + self.f_conj(b) <= S::cast(MEMBERSHIP_TOL)
    }

    /// Euclidean projection of `(alpha, beta)` onto
    /// `K = {(a, b) : a + F*(b) <= 0}`.
    ///
    /// Points already in `K` are returned unchanged. Otherwise the minimum
    /// sits on the boundary `a = -F*(b)` and the remaining one-dimensional
    /// problem
    ///
    /// ```text
    /// min_b h(b) = (F*(b) + alpha)^2 + (b - beta)^2
    /// ```
    ///
    /// is solved by safeguarded Newton on `h'` with a bisection fallback.
    /// For exterior points `h'` is negative wherever `F*(b) + alpha < 0`
    /// and strictly increasing on the rest, so the bracketed root is the
    /// unique critical point and therefore the projection.
    pub fn project_to_k(&self, alpha: S, beta: S) -> Result<KPoint<S>> {
        if self.in_k(alpha, beta) {
            return Ok(KPoint { a: alpha, b: beta });
        }
        // Half the derivative of the objective: hp(b) = h'(b) / 2.
        let hp = |b: S| (self.f_conj(b) + alpha) * self.f_conj_deriv(b) + (b - beta);
        let hp_tol = S::cast(H_PRIME_TOL * 0.5);
        let width_tol = S::cast(BRACKET_TOL);

        // Outside K, hp(beta) >= 0; grow the lower end geometrically until
        // the derivative changes sign.
        let mut hi = beta + S::one();
        let mut lo = beta - S::one();
        let mut width = S::one();
        let mut iters = 0usize;
        while hp(lo) > S::zero() {
            width = width * S::cast(2.0);
            lo = beta - width;
            iters += 1;
            if iters >= MAX_PROJECTION_ITERS {
                return Err(Error::ProjectionNoConvergence {
                    iterations: iters,
                    node: None,
                });
            }
        }

        let mut b = beta;
        let mut hp_b = hp(b);
        for _ in iters..MAX_PROJECTION_ITERS {
            if hp_b.abs() <= hp_tol || (hi - lo) <= width_tol {
                let a = -self.f_conj(b);
                return Ok(KPoint { a, b });
            }
            if hp_b > S::zero() {
                hi = b;
            } else {
                lo = b;
            }
            let g = self.f_conj(b) + alpha;
            let curvature = self.f_conj_deriv(b) * self.f_conj_deriv(b)
                + g * self.f_conj_second(b)
                + S::one();
            let newton = b - hp_b / curvature;
            b = if newton > lo && newton < hi {
                newton
            } else {
                (lo + hi) * S::cast(0.5)
            };
            // The bracket can collapse to adjacent floats before the f64
            // tolerances are met (always the case in f32); accept the point.
            if b <= lo || b >= hi {
                let a = -self.f_conj(b);
                return Ok(KPoint { a, b });
            }
            hp_b = hp(b);
        }
        Err(Error::ProjectionNoConvergence {
            iterations: MAX_PROJECTION_ITERS,
            node: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GB: f64 = 0.00375;

    fn model() -> CostModel<f64> {
        CostModel::quadratic(GB).unwrap()
    }

    /// Dense grid search of the defining supremum, the independent oracle
    /// for the closed-form conjugate.
    fn conj_by_scan(cost: &CostModel<f64>, b: f64) -> f64 {
        let step = 1e-7;
        let n = (1.0 / step) as usize;
        let mut best = f64::NEG_INFINITY;
        for k in 0..=n {
            let g = k as f64 * step;
            best = best.max(b * g - cost.f_eval(g));
        }
        best
    }

    /// Brute-force projection onto the boundary `a = -F*(b)`, scanning b.
    fn project_by_scan(cost: &CostModel<f64>, alpha: f64, beta: f64) -> (f64, f64) {
        let step = 1e-6;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let n = (2.0 / step) as usize;
        for k in 0..=n {
            let b = -1.0 + k as f64 * step;
            let a = -cost.f_conj(b);
            let d = (a - alpha).powi(2) + (b - beta).powi(2);
            if d < best.0 {
                best = (d, a, b);
            }
        }
        (best.1, best.2)
    }

    #[test]
    fn rejects_nonpositive_gamma_bar() {
        assert!(CostModel::quadratic(0.0f64).is_err());
        assert!(CostModel::quadratic(-1.0f64).is_err());
    }

    #[test]
    fn f_eval_cases() {
        let c = model();
        assert_eq!(c.f_eval(GB), 0.0);
        assert!((c.f_eval(0.0) - GB * GB).abs() < 1e-18);
        assert_eq!(c.f_eval(-0.001), f64::INFINITY);
    }

    #[test]
    fn f_conj_matches_grid_search_oracle() {
        let c = model();
        assert_eq!(c.f_conj(0.0), 0.0);

        let expect_pos = 3.0 * GB * GB; // = 4.21875e-5
        assert!((expect_pos - 4.21875e-5).abs() < 1e-18);
        assert!((c.f_conj(2.0 * GB) - expect_pos).abs() < 1e-12);
        assert!((c.f_conj(2.0 * GB) - conj_by_scan(&c, 2.0 * GB)).abs() < 1e-12);

        let expect_neg = -GB * GB; // = -1.40625e-5
        assert!((expect_neg + 1.40625e-5).abs() < 1e-18);
        assert!((c.f_conj(-2.0 * GB) - expect_neg).abs() < 1e-12);
        assert!((c.f_conj(-2.0 * GB) - conj_by_scan(&c, -2.0 * GB)).abs() < 1e-12);
    }

    #[test]
    fn f_conj_deriv_matches_finite_differences() {
        let c = model();
        let h = 1e-6;
        for b in [0.0, 2.0 * GB, 0.3, -GB] {
            let fd = (c.f_conj(b + h) - c.f_conj(b - h)) / (2.0 * h);
            assert!(
                (c.f_conj_deriv(b) - fd).abs() < 1e-9,
                "deriv mismatch at b={b}"
            );
        }
        assert!((c.f_conj_deriv(0.0) - GB).abs() < 1e-18);
        assert!((c.f_conj_deriv(2.0 * GB) - 2.0 * GB).abs() < 1e-18);
        // Flat branch: conjugate constant, derivative zero.
        assert_eq!(c.f_conj_deriv(-2.0 * GB - 1.0), 0.0);
        // Kink: branches agree, active-branch convention returns 0.
        assert_eq!(c.f_conj_deriv(-2.0 * GB), 0.0);
    }

    #[test]
    fn projection_keeps_interior_points() {
        let c = model();
        let p = c.project_to_k(-1.0, 0.0).unwrap();
        assert_eq!((p.a, p.b), (-1.0, 0.0));
    }

    #[test]
    fn projection_matches_scan_oracle() {
        let c = model();
        for (alpha, beta) in [(1.0, 0.0), (0.0, 2.0 * GB), (0.3, -0.2), (2.0, 1.0)] {
            let p = c.project_to_k(alpha, beta).unwrap();
            let (a_scan, b_scan) = project_by_scan(&c, alpha, beta);
            assert!(
                (p.b - b_scan).abs() < 1e-5,
                "b mismatch for ({alpha},{beta}): {} vs {b_scan}",
                p.b
            );
            assert!((p.a + c.f_conj(p.b)).abs() <= 1e-12, "not on boundary");
            // Ours must be at least as close as the scanned point.
            let ours = (p.a - alpha).powi(2) + (p.b - beta).powi(2);
            let scans = (a_scan - alpha).powi(2) + (b_scan - beta).powi(2);
            assert!(ours <= scans + 1e-12);
        }
    }

    #[test]
    fn projection_from_above_vertical_cases() {
        let c = model();
        // Spec case (0, 2*gb): boundary solution strictly closer than the
        // vertical drop (-F*(2gb), 2gb).
        let (alpha, beta) = (0.0, 2.0 * GB);
        let p = c.project_to_k(alpha, beta).unwrap();
        assert!(p.a < 0.0 && p.b < beta);
        let drop = (0.0 - (-c.f_conj(beta))).powi(2);
        let ours = (p.a - alpha).powi(2) + (p.b - beta).powi(2);
        assert!(ours < drop);
    }

    #[test]
    fn biconjugacy_on_sampled_gammas() {
        // F**(g) = sup_b (g b - F*(b)) must reproduce F(g) for g >= 0.
        let c = model();
        let b_lo = -4.0 * GB - 0.01;
        let b_hi = 20.0 * GB + 0.01;
        let nb = 200_000;
        for k in 0..1000 {
            let g = 10.0 * GB * k as f64 / 999.0;
            let mut sup = f64::NEG_INFINITY;
            for ib in 0..=nb {
                let b = b_lo + (b_hi - b_lo) * ib as f64 / nb as f64;
                sup = sup.max(g * b - c.f_conj(b));
            }
            assert!(
                (sup - c.f_eval(g)).abs() < 1e-8,
                "biconjugacy failed at gamma={g}: {sup} vs {}",
                c.f_eval(g)
            );
        }
    }

    #[test]
    fn young_fenchel_identity() {
        let c = model();
        for k in 1..=500 {
            let g = 10.0 * GB * k as f64 / 500.0;
            let slope = c.f_deriv(g);
            let lhs = c.f_eval(g) + c.f_conj(slope);
            let rhs = g * slope;
            assert!(
                (lhs - rhs).abs() < 1e-10,
                "Young-Fenchel failed at gamma={g}"
            );
        }
    }

    #[test]
    fn proposition_style_perspective_identity() {
        // x F(y/x) equals the support function of K's boundary for x > 0.
        let c = model();
        for (x, y) in [(0.5, 0.001), (2.0, 0.02), (1.0, 0.0), (0.1, 0.0004)] {
            let direct = x * c.f_eval(y / x);
            let mut sup = f64::NEG_INFINITY;
            let (b_lo, b_hi, nb) = (-0.1, 0.1, 200_000);
            for ib in 0..=nb {
                let b = b_lo + (b_hi - b_lo) * ib as f64 / nb as f64;
                let a = -c.f_conj(b);
                sup = sup.max(a * x + b * y);
            }
            let tol = 1e-6 * direct.abs().max(1e-9);
            assert!(
                (direct - sup).abs() < tol.max(1e-12),
                "perspective identity failed at ({x},{y}): {direct} vs {sup}"
            );
        }
    }

    #[test]
    fn projection_works_in_f32() {
        let c = CostModel::quadratic(0.00375f32).unwrap();
        let p = c.project_to_k(1.0f32, 0.0).unwrap();
        assert!(p.a + c.f_conj(p.b) <= 1e-5);
    }

    proptest! {
        #[test]
        fn projection_idempotent(alpha in -2.0f64..2.0, beta in -1.0f64..1.0) {
            let c = model();
            let p = c.project_to_k(alpha, beta).unwrap();
            let q = c.project_to_k(p.a, p.b).unwrap();
            prop_assert!((p.a - q.a).abs() <= 1e-10 && (p.b - q.b).abs() <= 1e-10);
        }

        #[test]
        fn projection_kkt_geometry(alpha in 0.001f64..2.0, beta in -1.0f64..1.0) {
            let c = model();
            // Only exterior points land on the boundary.
            prop_assume!(alpha + c.f_conj(beta) > 1e-9);
            let p = c.project_to_k(alpha, beta).unwrap();
            let (da, db) = (alpha - p.a, beta - p.b);
            let normal = (1.0, c.f_conj_deriv(p.b));
            let cross = da * normal.1 - db * normal.0;
            let scale = (da * da + db * db).sqrt() * (1.0 + normal.1 * normal.1).sqrt();
            prop_assert!(cross.abs() <= 1e-6 * scale.max(1e-12),
                "displacement not parallel to constraint normal: cross={cross}");
        }

        #[test]
        fn projected_points_satisfy_constraint(alpha in -2.0f64..2.0, beta in -1.0f64..1.0) {
            let c = model();
            let p = c.project_to_k(alpha, beta).unwrap();
            prop_assert!(p.a + c.f_conj(p.b) <= 1e-12);
        }
    }
}
