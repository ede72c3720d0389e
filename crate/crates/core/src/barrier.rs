//! Osserman-type radial barriers `φ_R(x) = C_R R^μ / (R² − |x|²)^μ` and the
//! scalar constants of the uniqueness argument.

use serde::Serialize;

use crate::check::CheckReport;
use crate::error::{invalid, Error, Result};
use crate::grid::BallGrid;
use crate::linalg::SymMatrix;
use crate::operators::{pucci, EllipticityPair, Extremal};
use crate::scalar::{norm2, Real, Vector};

/// Blow-up exponent of the barrier for the pair `(s, m)`.
///
/// `2/(s−1)` when `m ≤ 2s/(s+1)`, `m/(s−m)` otherwise. The branches agree
/// at `m = 2s/(s+1)`.
pub fn exponent_mu<T: Real>(s: T, m: T) -> Result<T> {
    let one = T::one();
    let two = T::lit(2.0);
    if !(s > one) {
        return Err(invalid("s", "s must exceed 1"));
    }
    if !(m >= one) {
        return Err(invalid("m", "m must be at least 1"));
    }
    if !(m < s) {
        return Err(invalid("m", "m must be smaller than s"));
    }
    if m <= two * s / (s + one) {
        Ok(two / (s - one))
    } else {
        Ok(m / (s - m))
    }
}

/// Inputs of [`barrier_constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierParams<T> {
    pub s: T,
    pub m: T,
    pub n: usize,
    pub lambda: T,
    pub big_lambda: T,
    pub gamma1: T,
    pub gamma: T,
    pub delta: T,
    pub radius: T,
}

impl<T: Real> BarrierParams<T> {
    /// Parameters with `λ = Λ`; only `Λ` enters the constants.
    pub fn new(s: T, m: T, n: usize, big_lambda: T, gamma1: T, gamma: T, delta: T, radius: T) -> Self {
        Self {
            s,
            m,
            n,
            lambda: big_lambda,
            big_lambda,
            gamma1,
            gamma,
            delta,
            radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierSpec<T> {
    pub radius: T,
    pub mu: T,
    pub c_r: T,
    pub a: T,
    pub b: T,
    pub delta: T,
    pub gamma1: T,
    pub gamma: T,
    pub s: T,
    pub m: T,
    pub n: usize,
    pub lambda: T,
    pub big_lambda: T,
}

/// Constants of the barrier on `B_R`:
///
/// * `a^{s−1} = 4μδ⁻¹ max{Λ(1+n+2μ), 1}`
/// * `b^{s−m} = 2^{m+1} μ^m δ⁻¹`
/// * `C_R = max{a(1+γ₁R)^{1/(s−1)} R^{μ−2/(s−1)}, b γ^{1/(s−m)} R^{μ−m/(s−m)}}`
pub fn barrier_constants<T: Real>(p: &BarrierParams<T>) -> Result<BarrierSpec<T>> {
    let mu = exponent_mu(p.s, p.m)?;
    let one = T::one();
    let two = T::lit(2.0);
    if p.n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    EllipticityPair::new(p.lambda, p.big_lambda)?;
    if !(p.delta > T::zero()) {
        return Err(invalid("delta", "must be positive"));
    }
    if !(p.radius > T::zero()) {
        return Err(invalid("R", "must be positive"));
    }
    if !(p.gamma1 >= T::zero()) {
        return Err(invalid("gamma1", "must be nonnegative"));
    }
    if !(p.gamma >= T::zero()) {
        return Err(invalid("gamma", "must be nonnegative"));
    }
    let (s, m, r) = (p.s, p.m, p.radius);
    let n = T::lit(p.n as f64);
    let a_pow = T::lit(4.0) * mu / p.delta * (p.big_lambda * (one + n + two * mu)).max(one);
    let a = a_pow.powf(one / (s - one));
    let b_pow = two.powf(m + one) * mu.powf(m) / p.delta;
    let b = b_pow.powf(one / (s - m));
    let first = a * (one + p.gamma1 * r).powf(one / (s - one)) * r.powf(mu - two / (s - one));
    let second = b * p.gamma.powf(one / (s - m)) * r.powf(mu - m / (s - m));
    Ok(BarrierSpec {
        radius: r,
        mu,
        c_r: first.max(second),
        a,
        b,
        delta: p.delta,
        gamma1: p.gamma1,
        gamma: p.gamma,
        s,
        m,
        n: p.n,
        lambda: p.lambda,
        big_lambda: p.big_lambda,
    })
}

impl<T: Real> BarrierSpec<T> {
    /// Same constants with `C_R` replaced.
    pub fn with_c_r(mut self, c_r: T) -> Self {
        self.c_r = c_r;
        self
    }

    pub fn ellipticity(&self) -> EllipticityPair<T> {
        EllipticityPair::new(self.lambda, self.big_lambda).expect("validated at construction")
    }

    /// `φ_R` as a function of `r = |x|`.
    pub fn value_at_radius(&self, r: T) -> T {
        let big = self.radius;
        self.c_r * big.powf(self.mu) / (big * big - r * r).powf(self.mu)
    }

    /// Radial derivatives `(φ', φ'/r, φ'')` at `r = |x| < R`.
    pub fn radial_derivatives(&self, r: T) -> (T, T, T) {
        let (big, mu) = (self.radius, self.mu);
        let one = T::one();
        let two = T::lit(2.0);
        let d = big * big - r * r;
        let k = two * mu * self.c_r * big.powf(mu);
        let over_r = k * d.powf(-mu - one);
        let second = k * d.powf(-mu - two) * (big * big + (one + two * mu) * r * r);
        (over_r * r, over_r, second)
    }

    /// `𝒫⁺(D²φ) + γ₁|Dφ| + γ|Dφ|^m − δφ^s` at `x`.
    pub fn residual(&self, x: &[T]) -> Result<T> {
        let (value, grad, hess) = barrier_eval(self, x)?;
        let g = norm2(&grad);
        Ok(pucci(&hess, &self.ellipticity(), Extremal::Plus) + self.gamma1 * g + self.gamma * g.powf(self.m)
            - self.delta * value.powf(self.s))
    }
}

/// Value, gradient and Hessian of `φ_R` at `x` with `|x| < R`.
pub fn barrier_eval<T: Real>(spec: &BarrierSpec<T>, x: &[T]) -> Result<(T, Vector<T>, SymMatrix<T>)> {
    let r = norm2(x);
    if !(r < spec.radius) {
        return Err(Error::OutsideBall {
            distance: r.as_f64(),
            radius: spec.radius.as_f64(),
        });
    }
    let n = x.len();
    let value = spec.value_at_radius(r);
    let (_, over_r, second) = spec.radial_derivatives(r);
    let grad: Vector<T> = x.iter().map(|&xi| over_r * xi).collect();
    let mut hess = SymMatrix::scaled_identity(n, over_r);
    if r > T::zero() {
        let unit: Vector<T> = x.iter().map(|&xi| xi / r).collect();
        hess = hess.add(&SymMatrix::outer(&unit).scale(second - over_r));
    }
    Ok((value, grad, hess))
}

/// Per-point residuals of the barrier inequality and their summary.
#[derive(Debug, Clone)]
pub struct BarrierCheck<T> {
    pub report: CheckReport<T>,
    /// `(point, residual)` for interior nodes followed by boundary projections.
    pub residuals: Vec<(Vector<T>, T)>,
}

impl<T: Real> BarrierCheck<T> {
    pub fn max_residual(&self) -> T {
        -self.report.worst_margin
    }
}

/// Evaluates the closed-form residual at every interior node of `grid` and
/// at the sphere projections of its boundary layer. The margin is the
/// negated residual, so the check passes when the largest residual is at
/// most `1e−9`.
pub fn verify_barrier_inequality<T: Real>(spec: &BarrierSpec<T>, grid: &BallGrid<T>) -> Result<BarrierCheck<T>> {
    if grid.dim() != spec.n {
        return Err(invalid("grid", "dimension differs from the barrier's n"));
    }
    let reach = norm2(grid.center()) + grid.radius() * (T::one() + T::lit(1e-12));
    if !(reach < spec.radius) {
        return Err(Error::OutsideBall {
            distance: reach.as_f64(),
            radius: spec.radius.as_f64(),
        });
    }
    let points = grid
        .interior()
        .iter()
        .map(|node| node.coords.clone())
        .chain(grid.boundary().iter().map(|b| b.projection.clone()));
    let mut residuals = Vec::with_capacity(grid.n_total());
    for x in points {
        let res = spec.residual(&x)?;
        residuals.push((x, res));
    }
    let labels: Vec<String> = (0..spec.n).map(|i| format!("x{i}")).chain(["residual".into()]).collect();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let report = CheckReport::from_margins(
        "barrier_inequality",
        &labels,
        residuals.iter().map(|(x, r)| {
            let mut w: Vec<T> = x.to_vec();
            w.push(*r);
            (-*r, w)
        }),
    );
    Ok(BarrierCheck { report, residuals })
}

/// `γ̃ = γ_m + (m−1)^{m−1} γ_m^m / (m^m c̲^{m−1})`.
pub fn tilde_gamma<T: Real>(gamma_m: T, m: T, c_lower: T) -> Result<T> {
    let one = T::one();
    if !(m > one) {
        return Err(invalid("m", "must exceed 1"));
    }
    if !(gamma_m >= T::zero()) {
        return Err(invalid("gamma_m", "must be nonnegative"));
    }
    if gamma_m == T::zero() {
        return Ok(T::zero());
    }
    if !(c_lower > T::zero()) {
        return Err(invalid("c_lower", "must be positive"));
    }
    Ok(gamma_m + (m - one).powf(m - one) * gamma_m.powf(m) / (m.powf(m) * c_lower.powf(m - one)))
}

/// `K = (8b/θ)^{(s−m)/(m−1)} γ̃^{1/(m−1)}` and the limit of the barrier at
/// the centre, `b γ̃^{1/(s−m)} K^{(1−m)/(s−m)}`, which equals `θ/8`.
pub fn uniqueness_scaling<T: Real>(theta: T, s: T, m: T, b: T, tilde_gamma: T) -> Result<(T, T)> {
    let one = T::one();
    if !(m > one) {
        return Err(invalid("m", "the scaling degenerates for m = 1"));
    }
    if !(m < s) {
        return Err(invalid("m", "m must be smaller than s"));
    }
    if !(theta > T::zero()) {
        return Err(invalid("theta", "must be positive"));
    }
    if !(b > T::zero()) {
        return Err(invalid("b", "must be positive"));
    }
    if !(tilde_gamma > T::zero()) {
        return Err(invalid("tilde_gamma", "must be positive"));
    }
    let k = (T::lit(8.0) * b / theta).powf((s - m) / (m - one)) * tilde_gamma.powf(one / (m - one));
    let limit = b * tilde_gamma.powf(one / (s - m)) * k.powf((one - m) / (s - m));
    Ok((k, limit))
}

/// `μ s` for the pair `(s, m)`; always equals `max{μ+2, (μ+1)m}`.
pub fn mu_s<T: Real>(s: T, m: T) -> Result<T> {
    Ok(exponent_mu(s, m)? * s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec(n: usize, r: f64) -> BarrierSpec<f64> {
        barrier_constants(&BarrierParams::new(3.0, 2.0, n, 1.0, 0.0, 1.0, 1.0, r)).unwrap()
    }

    #[test]
    fn mu_branches() {
        assert_eq!(exponent_mu(3.0, 1.0).unwrap(), 1.0);
        assert_eq!(exponent_mu(3.0, 2.0).unwrap(), 2.0);
        assert_relative_eq!(exponent_mu(3.0, 1.5).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(1.5 / (3.0 - 1.5), 2.0 / (3.0 - 1.0));
        assert!(exponent_mu(2.0, 2.0).is_err());
    }

    #[test]
    fn constants_example() {
        let sp = barrier_constants(&BarrierParams::new(3.0, 2.0, 2, 1.0, 0.0, 1.0, 1.0, 3.0)).unwrap();
        assert_eq!(sp.mu, 2.0);
        assert_relative_eq!(sp.a, 56f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(sp.b, 32.0, max_relative = 1e-14);
        assert_relative_eq!(sp.c_r, (sp.a * 3.0).max(32.0), max_relative = 1e-14);
        let big = barrier_constants(&BarrierParams::new(3.0, 2.0, 2, 1.0, 0.0, 1.0, 1.0, 10.0)).unwrap();
        assert_relative_eq!(big.c_r, big.a * 10.0, max_relative = 1e-14);
    }

    #[test]
    fn degenerate_gamma_drops_second_branch() {
        let sp = barrier_constants(&BarrierParams::new(3.0, 2.0, 1, 1.0, 0.5, 0.0, 1.0, 2.0)).unwrap();
        assert_relative_eq!(sp.c_r, sp.a * 2f64.sqrt() * 2f64.powf(1.0), max_relative = 1e-14);
    }

    #[test]
    fn delta_scaling() {
        let p = BarrierParams::new(3.0, 2.0, 2, 1.0, 0.0, 1.0, 1.0, 1.0);
        let s1 = barrier_constants(&p).unwrap();
        let s4 = barrier_constants(&BarrierParams { delta: 4.0, ..p }).unwrap();
        // a ∝ δ^{−1/(s−1)} and b ∝ δ^{−1/(s−m)}
        assert_relative_eq!(s1.a / s4.a, 2.0, max_relative = 1e-14);
        assert_relative_eq!(s1.b / s4.b, 4.0, max_relative = 1e-14);
    }

    #[test]
    fn eval_at_center_and_blow_up() {
        let sp = spec(1, 1.0);
        assert_relative_eq!(sp.c_r, 32.0, max_relative = 1e-14);
        let (v, g, _) = barrier_eval(&sp, &[0.0]).unwrap();
        assert_relative_eq!(v, 32.0, max_relative = 1e-14);
        assert_eq!(g[0], 0.0);
        let mut last = v;
        for r in [0.5, 0.9, 0.99, 0.999, 0.999_999] {
            let (v, _, _) = barrier_eval(&sp, &[r]).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(last > 1e12);
        assert!(barrier_eval(&sp, &[1.0]).is_err());
    }

    #[test]
    fn residual_at_center_matches_radial_formula() {
        let sp = barrier_constants(&BarrierParams::new(3.0, 2.0, 2, 1.5, 0.0, 0.0, 1.0, 2.0)).unwrap();
        let phi0 = sp.c_r * 2f64.powf(-sp.mu);
        let phi2 = 2.0 * sp.mu * sp.c_r * 2f64.powf(-sp.mu - 2.0);
        let expect = 1.5 * 2.0 * phi2 - phi0.powi(3);
        assert_relative_eq!(sp.residual(&[0.0, 0.0]).unwrap(), expect, max_relative = 1e-13);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sp = spec(2, 1.0);
        let x = [0.3, -0.4];
        let (_, g, hess) = barrier_eval(&sp, &x).unwrap();
        let f = |y: [f64; 2]| barrier_eval(&sp, &y).unwrap().0;
        let eps = 1e-4;
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += eps;
            xm[i] -= eps;
            assert_relative_eq!((f(xp) - f(xm)) / (2.0 * eps), g[i], max_relative = 1e-6);
            assert_relative_eq!((f(xp) - 2.0 * f(x) + f(xm)) / (eps * eps), hess.get(i, i), max_relative = 1e-5);
        }
        let cross = (f([x[0] + eps, x[1] + eps]) - f([x[0] + eps, x[1] - eps]) - f([x[0] - eps, x[1] + eps])
            + f([x[0] - eps, x[1] - eps]))
            / (4.0 * eps * eps);
        assert_relative_eq!(cross, hess.get(0, 1), max_relative = 1e-5);
    }

    #[test]
    fn inequality_holds_and_halving_breaks_it() {
        let grid = BallGrid::new(&[0.0, 0.0], 0.999, 0.05, 2).unwrap();
        let ok = verify_barrier_inequality(&spec(2, 1.0), &grid).unwrap();
        assert!(ok.report.passed(), "{:?}", ok.report);
        let sp = barrier_constants(&BarrierParams::new(4.0, 2.0, 2, 1.0, 1.0, 8.0, 1.0, 1.0)).unwrap();
        assert!(verify_barrier_inequality(&sp, &grid).unwrap().report.passed());
        let weak = sp.with_c_r(sp.c_r * 0.5);
        let bad = verify_barrier_inequality(&weak, &grid).unwrap();
        assert!(!bad.report.passed());
        assert!(bad.max_residual() > 0.0);
    }

    #[test]
    fn grid_reaching_the_sphere_is_rejected() {
        let sp = spec(1, 1.0);
        let grid = BallGrid::new(&[0.0], 1.0, 0.1, 1).unwrap();
        assert!(verify_barrier_inequality(&sp, &grid).is_err());
    }

    #[test]
    fn tilde_gamma_examples() {
        assert_relative_eq!(tilde_gamma(1.0, 2.0, 1.0).unwrap(), 1.25);
        assert_relative_eq!(tilde_gamma(1.0, 2.0, 4.0).unwrap(), 1.0625);
        assert!(tilde_gamma(1e-12, 2.0, 1.0).unwrap() < 1e-11);
        assert!(tilde_gamma(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn scaling_example() {
        let (k, lim) = uniqueness_scaling(1.0, 3.0, 2.0, 32.0, 1.25).unwrap();
        assert_relative_eq!(k, 320.0, max_relative = 1e-14);
        assert_relative_eq!(lim, 0.125, max_relative = 1e-14);
        let (k2, _) = uniqueness_scaling(2.0, 3.0, 2.0, 32.0, 1.25).unwrap();
        assert_relative_eq!(k / k2, 2.0, max_relative = 1e-14);
        assert!(uniqueness_scaling(1.0, 3.0, 1.0, 32.0, 1.25).is_err());
    }

    #[test]
    fn mu_s_exceeds_two() {
        for (s, m) in [(3.0f64, 1.0f64), (3.0, 1.5), (3.0, 2.0), (2.0, 1.2), (4.0, 2.0), (1.1, 1.05)] {
            let mu = exponent_mu(s, m).unwrap();
            let ms = mu_s(s, m).unwrap();
            assert!(ms > 2.0);
            assert_relative_eq!(ms, (mu + 2.0).max((mu + 1.0) * m), max_relative = 1e-12);
        }
    }
}
