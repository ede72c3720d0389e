//! Oracles and experiments around uniqueness of entire solutions and its
//! failure when `s = m`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::smallvec;

use crate::check::CheckReport;
use crate::entire::{growth_threshold, run_expansion, BoundaryFamily, EntireRun, ExpansionConfig};
use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::operators::{check_sublinearization, pucci, Extremal, HamiltonianH, Orientation};
use crate::scalar::{norm2, Real, Vector};
use crate::solver::{ProblemSpec, SolveOptions};

/// `inf_{u > v} (|u|^{s−1}u − |v|^{s−1}v) / (u − v)^s`.
///
/// By homogeneity the infimum is taken over `u − v = 1`, i.e. over the
/// single variable `v`, with a grid of `samples` points on `[−8, 7]`
/// followed by golden-section refinement around the best grid point.
pub fn delta_s_oracle<T: Real>(s: T, samples: usize) -> Result<T> {
    if !(s > T::one()) {
        return Err(invalid("s", "s must exceed 1"));
    }
    let samples = samples.max(16);
    let s64 = s.as_f64();
    let g = |v: f64| (v + 1.0).signum() * (v + 1.0).abs().powf(s64) - v.signum() * v.abs().powf(s64);
    let (lo, hi) = (-8.0, 7.0);
    let step = (hi - lo) / (samples - 1) as f64;
    let best = (0..samples)
        .map(|i| lo + step * i as f64)
        .min_by(|a, b| g(*a).total_cmp(&g(*b)))
        .expect("non-empty grid");
    let (mut a, mut b) = (best - step, best + step);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    while b - a > 1e-12 {
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
    }
    Ok(T::lit(g(0.5 * (a + b)).min(g(best))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// `u(x) = α e^{±√2 x_i} + 1`, solving `Δu + ½|Du|² − |u|u = −1` in every
/// dimension, or its negative `v = −u`, solving `Δv − ½|Dv|² − |v|v = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CounterexampleField<T> {
    pub alpha: T,
    pub sign: Sign,
    pub axis: usize,
    pub dim: usize,
    pub negated: bool,
}

/// A field with closed-form first and second derivatives.
pub trait SmoothField<T: Real>: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    fn gradient(&self, x: &[T]) -> Vector<T>;
    fn hessian(&self, x: &[T]) -> SymMatrix<T>;
}

impl<T: Real> CounterexampleField<T> {
    pub fn new(alpha: T, sign: Sign, axis: usize, dim: usize) -> Result<Self> {
        if !(alpha >= T::zero()) {
            return Err(invalid("alpha", "must be nonnegative"));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if axis >= dim {
            return Err(invalid("axis", "must be smaller than the dimension"));
        }
        Ok(Self {
            alpha,
            sign,
            axis,
            dim,
            negated: false,
        })
    }

    pub fn negated(mut self) -> Self {
        self.negated = !self.negated;
        self
    }

    /// `±√2`.
    fn rate(&self) -> T {
        let r = T::lit(2.0).sqrt();
        match self.sign {
            Sign::Plus => r,
            Sign::Minus => -r,
        }
    }

    fn orient(&self, v: T) -> T {
        if self.negated {
            -v
        } else {
            v
        }
    }

    fn exp_term(&self, x: &[T]) -> T {
        self.alpha * (self.rate() * x[self.axis]).exp()
    }

    /// Left side of the field's own equation, which vanishes identically.
    pub fn residual(&self, x: &[T]) -> T {
        let u = self.value(x);
        let lap = self.hessian(x).trace();
        let g2 = norm2(&self.gradient(x)).powi(2);
        let half = T::lit(0.5);
        if self.negated {
            lap - half * g2 - u.abs() * u - T::one()
        } else {
            lap + half * g2 - u.abs() * u + T::one()
        }
    }

    /// Boundary family reproducing this member on every sphere.
    pub fn boundary_family(self) -> BoundaryFamily<T> {
        Arc::new(move |_, x| self.value(x))
    }
}

impl<T: Real> SmoothField<T> for CounterexampleField<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[T]) -> T {
        self.orient(self.exp_term(x) + T::one())
    }

    fn gradient(&self, x: &[T]) -> Vector<T> {
        let mut g: Vector<T> = smallvec![T::zero(); self.dim];
        g[self.axis] = self.orient(self.rate() * self.exp_term(x));
        g
    }

    fn hessian(&self, x: &[T]) -> SymMatrix<T> {
        let mut h = SymMatrix::zeros(self.dim);
        h.set(self.axis, self.axis, self.orient(T::lit(2.0) * self.exp_term(x)));
        h
    }
}

/// Uniform points in the cube `[−extent, extent]^dim`.
pub fn sample_points<T: Real>(dim: usize, count: usize, extent: f64, seed: u64) -> Vec<Vector<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| T::lit(rng.gen_range(-extent..=extent))).collect())
        .collect()
}

/// Margins `1e−9·(1 + u²) − |residual|` at the given points.
pub fn counterexample_residual<T: Real>(field: &CounterexampleField<T>, points: &[Vector<T>]) -> CheckReport<T> {
    let tol = T::lit(1e-9);
    let mut labels = vec!["u", "residual"];
    labels.extend(["x1", "x2"].iter().take(field.dim));
    CheckReport::from_margins(
        "counterexample_residual",
        &labels,
        points.iter().map(|x| {
            let u = field.value(x);
            let r = field.residual(x);
            let mut w = vec![u, r];
            w.extend_from_slice(x);
            (tol * (T::one() + u * u) - r.abs(), w)
        }),
    )
}

/// The problem solved by the counterexample family: `F = Δ`, `H = ½|p|²`,
/// `s = 2`, `f ≡ −1`.
pub fn counterexample_problem<T: Real>() -> ProblemSpec<T> {
    ProblemSpec::with_constant_f(
        crate::operators::OperatorF::laplacian(),
        HamiltonianH::prototype(T::zero(), T::lit(0.5), T::lit(2.0)).expect("valid"),
        T::lit(2.0),
        -T::one(),
    )
    .expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationRow<T> {
    pub radius: T,
    /// `sup_{B_1} |u − v|` (the whole ball when `R ≤ 1`).
    pub sup_inner: T,
    /// `|u(0) − v(0)|`.
    pub center: T,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeparationTable<T> {
    pub rows: Vec<SeparationRow<T>>,
    /// The problem satisfies `s > m`.
    pub gap: bool,
}

impl<T: Real> SeparationTable<T> {
    /// `sup_inner` does not increase once the first `skip` radii are dropped.
    pub fn non_increasing_after(&self, skip: usize) -> bool {
        let tail: Vec<T> = self.rows.iter().skip(skip).map(|r| r.sup_inner).collect();
        tail.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn min_center(&self) -> T {
        self.rows.iter().map(|r| r.center).fold(T::infinity(), T::min)
    }
}

/// Solves on each ball of `config` with both boundary families and records
/// how far apart the two solutions stay near the origin.
///
/// Problems with `s ≤ m` are accepted so that the sharpness control can run
/// through the same path; the table records which regime applies.
pub fn two_solution_experiment<T: Real>(
    problem: &ProblemSpec<T>,
    boundary_pair: (&BoundaryFamily<T>, &BoundaryFamily<T>),
    config: &ExpansionConfig<T>,
    options: &SolveOptions<T>,
) -> Result<(SeparationTable<T>, EntireRun<T>, EntireRun<T>)> {
    let a = run_expansion(problem, config, boundary_pair.0, options)?;
    let b = run_expansion(problem, config, boundary_pair.1, options)?;
    let table = separation(&a, &b)?;
    Ok((table, a, b))
}

/// Separation table between two runs on identical grids.
pub fn separation<T: Real>(a: &EntireRun<T>, b: &EntireRun<T>) -> Result<SeparationTable<T>> {
    if a.config != b.config {
        return Err(invalid("runs", "must share radii and grid spacing"));
    }
    let mut rows = Vec::with_capacity(a.fields.len());
    for (i, (&radius, (u, v))) in a.config.radii.iter().zip(a.fields.iter().zip(&b.fields)).enumerate() {
        let grid = u.grid();
        let mut sup_inner = T::zero();
        for (k, node) in grid.interior().iter().enumerate() {
            if norm2(&node.coords) <= T::one() {
                sup_inner = sup_inner.max((u.value(k) - v.value(k)).abs());
            }
        }
        let origin = grid
            .index_of([0, 0])
            .ok_or_else(|| invalid("grid", "origin is not a grid node"))?;
        rows.push(SeparationRow {
            radius,
            sup_inner,
            center: (u.value(origin) - v.value(origin)).abs(),
            converged: a.reports[i].converged && b.reports[i].converged,
        });
    }
    Ok(SeparationTable {
        rows,
        gap: a.problem.s > a.problem.m(),
    })
}

/// Sublinearization inequality at `x = y` for `σ` in `sigma_range`.
pub fn sublinearization_inequality_check<T: Real>(
    h: &HamiltonianH<T>,
    sigma_range: (T, T),
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<CheckReport<T>> {
    check_sublinearization(h, sigma_range, dim, samples, seed)
}

/// Result of [`extremal_difference_check`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremalDifferenceReport<T> {
    pub report: CheckReport<T>,
    /// Points where `u` is a classical subsolution and the inequality was
    /// evaluated.
    pub evaluated: usize,
    /// Smallest `(s−1)(1−σ) − (σ − σ^s)` across the run.
    pub elementary_gap: T,
    /// The same inequality with `σ − σ^s` replaced by `(s−1)(1−σ)`; a
    /// cross-check of the bound used to close the argument.
    pub bounded_report: CheckReport<T>,
}

/// Classical pointwise form of the inequality satisfied by `w_σ = u − σv`
/// (or `σu − v` when `−H` carries the convexity structure), evaluated with
/// exact derivatives at the points where `u` is a subsolution.
pub fn extremal_difference_check<T: Real>(
    u: &dyn SmoothField<T>,
    v: &dyn SmoothField<T>,
    sigma: T,
    problem: &ProblemSpec<T>,
    points: &[Vector<T>],
) -> Result<ExtremalDifferenceReport<T>> {
    let one = T::one();
    if !(sigma > T::zero() && sigma < one) {
        return Err(invalid("sigma", "must lie in (0, 1)"));
    }
    let h = &problem.hamiltonian;
    let lip = *h.lipschitz().ok_or(Error::MissingConstants("extremal_difference_check"))?;
    let conv = *h.convexity().ok_or(Error::MissingConstants("extremal_difference_check"))?;
    let concave = match h.orientation() {
        Orientation::Convex => false,
        Orientation::Concave => true,
        Orientation::Neither => return Err(Error::MissingConstants("extremal_difference_check")),
    };
    let gt = h.tilde_gamma()?;
    let (s, m) = (problem.s, problem.m());
    let ell = *problem.operator.ellipticity();
    let tol = T::lit(1e-9);
    let sub_tol = T::lit(1e-12);
    let elementary_gap = (s - one) * (one - sigma) - (sigma - sigma.powf(s));
    let mut exact = Vec::new();
    let mut bounded = Vec::new();
    for x in points {
        let (vv, vp, vh) = (v.value(x), v.gradient(x), v.hessian(x));
        let rv = problem.pointwise_residual(x, vv, &vp, &vh);
        if rv.abs() > tol * (one + vv.abs().powf(s)) {
            return Err(Error::Rejected(format!("v is not a solution at {x:?}: residual {rv}")));
        }
        let (uu, up, uh) = (u.value(x), u.gradient(x), u.hessian(x));
        if problem.pointwise_residual(x, uu, &up, &uh) < -sub_tol * (one + uu.abs().powf(s)) {
            continue;
        }
        // Convex case: w = u − σv; concave case: w = σu − v.
        let (a_val, a_grad, a_hess, b_val, b_grad, b_hess, sa, sb) = if concave {
            (uu, &up, &uh, vv, &vp, &vh, sigma, one)
        } else {
            (uu, &up, &uh, vv, &vp, &vh, one, sigma)
        };
        let dw: Vector<T> = a_grad.iter().zip(b_grad.iter()).map(|(&p, &q)| sa * p - sb * q).collect();
        let d2w = a_hess.scale(sa).sub(&b_hess.scale(sb));
        let ndw = norm2(&dw);
        let principal = pucci(&d2w, &ell, Extremal::Plus)
            + lip.gamma1 * ndw
            + (one - sigma).powf(one - m) * gt * ndw.powf(m);
        let zeroth = (sa * a_val).signed_pow(s) - (sb * b_val).signed_pow(s);
        let f = (problem.f)(x);
        let (extra, extra_bound, rhs) = if concave {
            let t = a_val.signed_pow(s);
            ((sigma.powf(s) - sigma) * t, -(s - one) * (one - sigma) * t, (sigma - one) * (f + conv.a))
        } else {
            let t = b_val.signed_pow(s);
            ((sigma - sigma.powf(s)) * t, (s - one) * (one - sigma) * t, (one - sigma) * (f - conv.a))
        };
        let mut w = vec![sigma, a_val, b_val];
        w.extend_from_slice(x);
        exact.push((principal - zeroth + extra - rhs, w.clone()));
        // The bound only enlarges the left side where the multiplied power is nonnegative.
        let extra_b = if (concave && a_val < T::zero()) || (!concave && b_val >= T::zero()) {
            extra_bound
        } else {
            extra
        };
        bounded.push((principal - zeroth + extra_b - rhs, w));
    }
    let mut labels = vec!["sigma", "u", "v"];
    labels.extend(["x1", "x2"].iter().take(u.dim()));
    let evaluated = exact.len();
    Ok(ExtremalDifferenceReport {
        report: CheckReport::from_margins("extremal_difference", &labels, exact),
        evaluated,
        elementary_gap,
        bounded_report: CheckReport::from_margins("extremal_difference_bounded", &labels, bounded),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoBranch {
    /// `m ≤ 2s/(s+1)`.
    First,
    Second,
}

/// Growth threshold for `f⁻`, written per branch of `μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoThreshold<T> {
    pub value: T,
    pub branch: RhoBranch,
    /// `2m′/(μs)` evaluated directly.
    pub via_mu: T,
}

impl<T: Real> RhoThreshold<T> {
    pub fn relative_mismatch(&self) -> T {
        if self.value.is_infinite() && self.via_mu.is_infinite() {
            return T::zero();
        }
        (self.value - self.via_mu).abs() / self.value.abs().max(T::min_positive_value())
    }
}

pub fn rho_threshold<T: Real>(s: T, m: T) -> Result<RhoThreshold<T>> {
    let via_mu = growth_threshold(s, m)?;
    let one = T::one();
    let two = T::lit(2.0);
    let (value, branch) = if m <= two * s / (s + one) {
        (m * (s - one) / ((m - one) * s), RhoBranch::First)
    } else {
        (two * (s - m) / (s * (m - one)), RhoBranch::Second)
    };
    Ok(RhoThreshold {
        value: if m == one { T::infinity() } else { value },
        branch,
        via_mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{hamiltonian_library, Coefficient, HamiltonianFamily, OperatorF};
    use crate::solver::mms::ManufacturedCase;
    use approx::assert_relative_eq;

    #[test]
    fn delta_oracle_matches_candidate() {
        for s in [1.5, 2.0, 2.5, 3.0, 4.0] {
            let d: f64 = delta_s_oracle(s, 2001).unwrap();
            assert!((d - 2f64.powf(1.0 - s)).abs() < 1e-6, "s={s}: {d}");
        }
        assert!(delta_s_oracle(1.0f64, 100).is_err());
        let mut prev = 1.0;
        for i in 0..=25 {
            let d: f64 = delta_s_oracle(1.5 + 0.1 * i as f64, 1001).unwrap();
            assert!(d > 0.0 && d < prev);
            prev = d;
        }
    }

    #[test]
    fn counterexample_hand_values() {
        let f = CounterexampleField::new(1.0f64, Sign::Plus, 0, 1).unwrap();
        assert_relative_eq!(f.value(&[0.0]), 2.0);
        assert_relative_eq!(f.gradient(&[0.0])[0], 2f64.sqrt());
        assert_relative_eq!(f.hessian(&[0.0]).get(0, 0), 2.0);
        assert_eq!(f.residual(&[0.0]).abs() < 1e-14, true);
        let z = CounterexampleField::new(0.0f64, Sign::Minus, 0, 1).unwrap();
        assert_eq!(z.residual(&[0.3]), 0.0);
    }

    #[test]
    fn counterexample_family_is_exact() {
        for dim in 1..=2 {
            let pts = sample_points::<f64>(dim, 1000, 2.0, 3);
            for alpha in [0.0, 0.5, 1.0, 10.0] {
                for sign in [Sign::Plus, Sign::Minus] {
                    for axis in 0..dim {
                        let f = CounterexampleField::new(alpha, sign, axis, dim).unwrap();
                        assert!(counterexample_residual(&f, &pts).passed_with(0.0));
                        assert!(counterexample_residual(&f.negated(), &pts).passed_with(0.0));
                    }
                }
            }
        }
        assert!(CounterexampleField::new(-1.0f64, Sign::Plus, 0, 1).is_err());
        assert!(CounterexampleField::new(1.0f64, Sign::Plus, 1, 1).is_err());
    }

    #[test]
    fn identical_boundaries_separate_by_zero() {
        let p = counterexample_problem::<f64>();
        let g = CounterexampleField::new(1.0, Sign::Plus, 0, 1).unwrap().boundary_family();
        let cfg = ExpansionConfig::integer_radii(2, 0.05, 1);
        let (t, _, _) = two_solution_experiment(&p, (&g, &g), &cfg, &SolveOptions::newton(1e-9, 200)).unwrap();
        assert!(t.rows.iter().all(|r| r.sup_inner == 0.0 && r.center == 0.0));
        assert!(!t.gap);
    }

    #[test]
    fn sublinearization_for_library() {
        let h = hamiltonian_library(
            HamiltonianFamily::Prototype {
                c1: Coefficient::constant(0.5f64),
                cm: Coefficient::oscillating(1.0, 0.3, 2.0),
                m: 1.5,
            },
            0.1,
        )
        .unwrap();
        let r = sublinearization_inequality_check(&h, (0.1, 0.999), 2, 20_000, 1).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(sublinearization_inequality_check(&HamiltonianH::<f64>::zero(), (0.1, 0.9), 1, 10, 1).is_err());
    }

    struct Cosine;

    impl SmoothField<f64> for Cosine {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0].cos()
        }
        fn gradient(&self, x: &[f64]) -> Vector<f64> {
            smallvec![-x[0].sin()]
        }
        fn hessian(&self, x: &[f64]) -> SymMatrix<f64> {
            SymMatrix::diag(&[-x[0].cos()])
        }
    }

    #[test]
    fn extremal_difference_on_manufactured_solution() {
        let case = ManufacturedCase::<f64>::cosine_1d();
        let pts = sample_points::<f64>(1, 200, 1.0, 5);
        for sigma in [0.1, 0.5, 0.9, 0.999] {
            let r = extremal_difference_check(&Cosine, &Cosine, sigma, &case.problem, &pts).unwrap();
            assert_eq!(r.evaluated, 200);
            assert!(r.report.passed(), "{sigma}: {r:?}");
            assert!(r.bounded_report.passed());
            assert!(r.elementary_gap >= 0.0);
        }
        let near_one = extremal_difference_check(&Cosine, &Cosine, 1.0 - 1e-10, &case.problem, &pts).unwrap();
        assert!(near_one.report.worst_margin.abs() < 1e-8);
    }

    #[test]
    fn extremal_difference_rejects_non_solutions() {
        let case = ManufacturedCase::<f64>::cosine_1d();
        let other = CounterexampleField::new(1.0, Sign::Plus, 0, 1).unwrap();
        let pts = sample_points::<f64>(1, 5, 1.0, 5);
        assert!(matches!(
            extremal_difference_check(&Cosine, &other, 0.5, &case.problem, &pts),
            Err(Error::Rejected(_))
        ));
    }

    #[test]
    fn extremal_difference_concave_case() {
        let case = ManufacturedCase::<f64>::cosine_1d();
        let flipped = ProblemSpec::new(
            OperatorF::laplacian(),
            case.problem.hamiltonian.negated(),
            3.0,
            Arc::new(|x: &[f64]| {
                let (c, s) = (x[0].cos(), x[0].sin());
                -c - s * s - c * c * c
            }),
        )
        .unwrap();
        let pts = sample_points::<f64>(1, 200, 1.0, 9);
        let r = extremal_difference_check(&Cosine, &Cosine, 0.7, &flipped, &pts).unwrap();
        assert!(r.report.passed(), "{r:?}");
    }

    #[test]
    fn rho_threshold_branches_agree() {
        for (s, m) in [(3.0f64, 1.2), (3.0, 1.5), (3.0, 1.6), (3.0, 2.0), (2.0, 1.9)] {
            let t = rho_threshold(s, m).unwrap();
            assert!(t.relative_mismatch() < 1e-12, "{t:?}");
        }
        assert_eq!(rho_threshold(3.0f64, 2.0).unwrap().branch, RhoBranch::Second);
        assert_eq!(rho_threshold(3.0f64, 1.2).unwrap().branch, RhoBranch::First);
        assert!(rho_threshold(3.0f64, 1.0).unwrap().value.is_infinite());
    }
}
