//! Monotone finite-difference discretisation of
//! `F(x, D²u) + H(x, Du) − |u|^{s−1}u = f` and Dirichlet solvers on balls.
//!
//! The scheme at an interior node combines
//!
//! * second differences: the axis pair in 1D/2D plus, in 2D, the two
//!   diagonals (divided by `2h²`), fed to [`OperatorF::discrete`];
//! * upwind gradient magnitudes `r↑ = |max(u_{i±1} − u_i, 0)|/h` and
//!   `r↓ = |max(u_i − u_{i±1}, 0)|/h` (root-sum-square over axes), where the
//!   nondecreasing part of `H` is evaluated at `r↑` and the nonincreasing part
//!   at `r↓`;
//! * the nodal value in the zero-order term.
//!
//! Every piece is nondecreasing in the neighbour values and decreasing in the
//! centre value, so the scheme is monotone and the explicit update below is
//! order preserving.

mod banded;
pub mod mms;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{BallGrid, ScalarField};
use crate::operators::{HamiltonianH, OperatorF, OperatorKind};
use crate::scalar::{dist, Real, Vector};

pub use mms::{mms_convergence, ManufacturedCase, MmsRow, MmsTable};

use banded::BandedMatrix;

/// Right-hand side or boundary datum `x ↦ value`.
pub type ScalarFn<T> = Arc<dyn Fn(&[T]) -> T + Send + Sync>;

/// Nodal magnitudes above this abort the solve.
pub const OVERFLOW_CLAMP: f64 = 1e12;

const PARALLEL_THRESHOLD: usize = 2048;

/// The equation `F(x, D²u) + H(x, Du) − |u|^{s−1}u = f(x)`.
#[derive(Clone)]
pub struct ProblemSpec<T> {
    pub operator: OperatorF<T>,
    pub hamiltonian: HamiltonianH<T>,
    pub s: T,
    pub f: ScalarFn<T>,
}

impl<T: Real> std::fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("operator", &self.operator)
            .field("hamiltonian", &self.hamiltonian)
            .field("s", &self.s)
            .finish_non_exhaustive()
    }
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(operator: OperatorF<T>, hamiltonian: HamiltonianH<T>, s: T, f: ScalarFn<T>) -> Result<Self> {
        if !(s > T::one()) {
            return Err(invalid("s", "s must exceed 1"));
        }
        Ok(Self {
            operator,
            hamiltonian,
            s,
            f,
        })
    }

    /// Constant right-hand side.
    pub fn with_constant_f(operator: OperatorF<T>, hamiltonian: HamiltonianH<T>, s: T, f: T) -> Result<Self> {
        Self::new(operator, hamiltonian, s, Arc::new(move |_| f))
    }

    pub fn m(&self) -> T {
        self.hamiltonian.m()
    }

    /// Fails unless `s > m`, the hypothesis of the entire-solution theory.
    pub fn require_gap(&self) -> Result<()> {
        if self.s > self.m() {
            Ok(())
        } else {
            Err(invalid("s", "s must exceed m for entire-solution experiments"))
        }
    }

    /// `F(x, X) + H(x, p) − |u|^{s−1}u − f(x)` for exact derivatives.
    pub fn pointwise_residual(&self, x: &[T], u: T, p: &[T], hess: &crate::linalg::SymMatrix<T>) -> T {
        self.operator.eval(x, hess) + self.hamiltonian.eval(x, p) - u.signed_pow(self.s) - (self.f)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Damped pseudo-time iteration only.
    Explicit,
    /// Semismooth Newton with line search, finished by explicit sweeps if it
    /// stalls.
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions<T> {
    pub tol: T,
    pub max_iter: usize,
    pub method: Method,
}

impl<T: Real> SolveOptions<T> {
    pub fn explicit(tol: T, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            method: Method::Explicit,
        }
    }

    pub fn newton(tol: T, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            method: Method::Newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport<T> {
    pub method: Method,
    /// Total updates (Newton steps plus explicit sweeps).
    pub iterations: usize,
    pub newton_steps: usize,
    pub final_residual: T,
    /// Sup-norm residuals: every Newton step, and every 100th explicit sweep.
    pub history: Vec<(usize, T)>,
    /// Last pseudo-time step of the explicit iteration, if any ran.
    pub tau: Option<T>,
    pub tol: T,
    pub converged: bool,
}

/// The discrete operator bound to a problem and a grid.
pub struct Scheme<'a, T> {
    problem: &'a ProblemSpec<T>,
    grid: &'a BallGrid<T>,
    f: Vec<T>,
    big_lambda: T,
}

impl<'a, T: Real> Scheme<'a, T> {
    pub fn new(problem: &'a ProblemSpec<T>, grid: &'a BallGrid<T>) -> Result<Self> {
        let big_lambda = match problem.operator.kind() {
            OperatorKind::PucciPlus | OperatorKind::PucciMinus => problem.operator.ellipticity().big_lambda(),
            OperatorKind::Laplacian => T::one(),
            OperatorKind::WeightedTrace(c) if *c > T::zero() => *c,
            OperatorKind::WeightedTrace(_) => return Err(invalid("operator", "trace weight must be positive")),
            OperatorKind::Custom(_) => {
                return Err(Error::Unsupported("custom operators have no monotone discretisation".into()))
            }
        };
        if !problem.hamiltonian.is_radial() {
            return Err(Error::Unsupported(
                "the upwind scheme needs a Hamiltonian depending on |p| only".into(),
            ));
        }
        let f = grid.interior().iter().map(|node| (problem.f)(&node.coords)).collect::<Vec<_>>();
        crate::grid::check_finite(&f)?;
        Ok(Self {
            problem,
            grid,
            f,
            big_lambda,
        })
    }

    pub fn grid(&self) -> &BallGrid<T> {
        self.grid
    }

    /// Residual and upwind gradient magnitude at interior node `k`.
    fn node(&self, u: &[T], k: usize) -> (T, T) {
        let grid = self.grid;
        let n = grid.dim();
        let h = grid.h();
        let h2 = h * h;
        let two = T::lit(2.0);
        let nb = grid.neighbors(k);
        let u0 = u[k];
        let mut axis = [T::zero(); 2];
        let (mut up2, mut down2) = (T::zero(), T::zero());
        for a in 0..n {
            let (p, m) = (u[nb[2 * a]], u[nb[2 * a + 1]]);
            axis[a] = (p - two * u0 + m) / h2;
            let up = (p - u0).max(m - u0).max(T::zero());
            let down = (u0 - p).max(u0 - m).max(T::zero());
            up2 = up2 + up * up;
            down2 = down2 + down * down;
        }
        let second = if n == 2 {
            let d2 = two * h2;
            let diag = [
                (u[nb[4]] - two * u0 + u[nb[5]]) / d2,
                (u[nb[6]] - two * u0 + u[nb[7]]) / d2,
            ];
            self.problem.operator.discrete(&[&axis[..2], &diag])
        } else {
            self.problem.operator.discrete(&[&axis[..1]])
        }
        .expect("operator discretisation checked at construction");
        let (r_up, r_down) = (up2.sqrt() / h, down2.sqrt() / h);
        let x = &grid.interior()[k].coords;
        let ham = self
            .problem
            .hamiltonian
            .radial_split(x, r_up, r_down)
            .expect("radial Hamiltonian checked at construction");
        (second + ham - u0.signed_pow(self.problem.s) - self.f[k], r_up.max(r_down))
    }

    /// Residual at one interior node.
    pub fn residual_at(&self, u: &[T], k: usize) -> T {
        self.node(u, k).0
    }

    /// Residuals at all interior nodes and the largest upwind gradient.
    pub fn residuals(&self, u: &[T]) -> (Vec<T>, T) {
        let ni = self.grid.n_interior();
        let pairs: Vec<(T, T)> = if ni >= PARALLEL_THRESHOLD {
            (0..ni).into_par_iter().map(|k| self.node(u, k)).collect()
        } else {
            (0..ni).map(|k| self.node(u, k)).collect()
        };
        let g = pairs.iter().fold(T::zero(), |a, p| a.max(p.1));
        (pairs.into_iter().map(|p| p.0).collect(), g)
    }

    /// Pseudo-time step keeping `u ↦ u + τ·residual` monotone, given bounds
    /// `g` on the discrete gradient and `umax` on `|u|`.
    pub fn time_step(&self, g: T, umax: T) -> T {
        let n = T::lit(self.grid.dim() as f64);
        let h = self.grid.h();
        let two = T::lit(2.0);
        let ham = &self.problem.hamiltonian;
        let (g1, gm) = ham.lipschitz().map_or((T::zero(), T::zero()), |l| (l.gamma1, l.gamma_m));
        let m = ham.m();
        let grad_growth = if m > T::one() { g.powf(m - T::one()) } else { T::one() };
        let s = self.problem.s;
        h * h
            / (two * n * self.big_lambda
                + two * n.sqrt() * h * (g1 + gm * grad_growth)
                + h * h * s * umax.powf(s - T::one()))
    }
}

fn sup<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a.max(x.abs()))
}

fn l2<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a + x * x).sqrt()
}

/// Residual of the discrete equation at an interior node of `field`.
pub fn discretize_residual<T: Real>(problem: &ProblemSpec<T>, field: &ScalarField<T>, node: usize) -> Result<T> {
    if !field.grid().is_interior(node) {
        return Err(invalid("node", "must be an interior node"));
    }
    let scheme = Scheme::new(problem, field.grid())?;
    Ok(scheme.residual_at(field.values(), node))
}

/// Initial guess: boundary data blended radially with its mean.
fn initial_guess<T: Real>(grid: &BallGrid<T>, boundary: &dyn Fn(&[T]) -> T) -> Vec<T> {
    let ni = grid.n_interior();
    let mut u = Vec::with_capacity(grid.n_total());
    let bvals: Vec<T> = grid.boundary().iter().map(|b| boundary(&b.projection)).collect();
    let mean = bvals.iter().copied().sum::<T>() / T::lit(bvals.len().max(1) as f64);
    let c = grid.center();
    let radius = grid.radius();
    for node in grid.interior() {
        let r = dist(&node.coords, c);
        if r == T::zero() {
            u.push(mean);
            continue;
        }
        let t = r / radius;
        let proj: Vector<T> = node.coords.iter().zip(c).map(|(&x, &ci)| ci + (x - ci) / t).collect();
        u.push(t * boundary(&proj) + (T::one() - t) * mean);
    }
    debug_assert_eq!(u.len(), ni);
    u.extend(bvals);
    u
}

fn guard<T: Real>(u: &[T]) -> Result<()> {
    let clamp = T::lit(OVERFLOW_CLAMP);
    for (k, &v) in u.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFinite {
                node: k,
                value: v.as_f64(),
            });
        }
        if v.abs() > clamp {
            return Err(Error::Overflow { node: k });
        }
    }
    Ok(())
}

fn is_safe<T: Real>(u: &[T]) -> bool {
    let clamp = T::lit(OVERFLOW_CLAMP);
    u.iter().all(|v| v.is_finite() && v.abs() <= clamp)
}

/// Solves the Dirichlet problem on `grid` with data `boundary` sampled at the
/// sphere projections of the boundary layer.
///
/// The explicit method iterates `u ← u + τ·residual` with
/// `τ = h² / (2nΛ + 2√n·h(γ₁ + γ_m G^{m−1}) + h² s U^{s−1})`, where `G` and
/// `U` are the current discrete gradient and solution bounds. The Newton
/// method uses a Jacobian from coloured finite differences of the monotone
/// residual, factorised as a band matrix.
pub fn solve_dirichlet<T: Real>(
    problem: &ProblemSpec<T>,
    grid: Arc<BallGrid<T>>,
    boundary: &dyn Fn(&[T]) -> T,
    options: &SolveOptions<T>,
) -> Result<(ScalarField<T>, SolveReport<T>)> {
    if !(options.tol > T::zero()) {
        return Err(invalid("tol", "must be positive"));
    }
    let scheme = Scheme::new(problem, &grid)?;
    let mut u = initial_guess(&grid, boundary);
    guard(&u)?;
    let mut report = SolveReport {
        method: options.method,
        iterations: 0,
        newton_steps: 0,
        final_residual: T::zero(),
        history: Vec::new(),
        tau: None,
        tol: options.tol,
        converged: false,
    };
    let (mut res, mut g) = scheme.residuals(&u);
    let mut rnorm = sup(&res);
    report.history.push((0, rnorm));

    if options.method == Method::Newton && rnorm > options.tol {
        newton(&scheme, &mut u, &mut res, &mut g, &mut rnorm, options, &mut report)?;
    }

    let ni = grid.n_interior();
    while rnorm > options.tol && report.iterations < options.max_iter {
        let umax = sup(&u[..ni]).max(sup(&u[ni..]));
        let tau = scheme.time_step(g, umax);
        for k in 0..ni {
            u[k] = u[k] + tau * res[k];
        }
        guard(&u[..ni])?;
        report.iterations += 1;
        report.tau = Some(tau);
        (res, g) = scheme.residuals(&u);
        rnorm = sup(&res);
        if report.iterations % 100 == 0 {
            report.history.push((report.iterations, rnorm));
        }
    }
    if report.history.last().map(|h| h.0) != Some(report.iterations) {
        report.history.push((report.iterations, rnorm));
    }
    report.final_residual = rnorm;
    report.converged = rnorm <= options.tol;
    Ok((ScalarField::new(grid, u)?, report))
}

/// Colour of a lattice point such that equally coloured interior nodes never
/// share a stencil.
fn colour(lattice: [i64; 2], dim: usize) -> usize {
    let i = lattice[0].rem_euclid(3) as usize;
    if dim == 1 {
        i
    } else {
        3 * i + lattice[1].rem_euclid(3) as usize
    }
}

fn jacobian<T: Real>(scheme: &Scheme<'_, T>, u: &[T], res: &[T]) -> BandedMatrix<T> {
    let grid = scheme.grid;
    let ni = grid.n_interior();
    let stencil = if grid.dim() == 1 { 2 } else { 8 };
    let mut bw = 0;
    for k in 0..ni {
        for &j in &grid.neighbors(k)[..stencil] {
            if j < ni {
                bw = bw.max(j.abs_diff(k));
            }
        }
    }
    let mut jac = BandedMatrix::zeros(ni, bw);
    let colours = if grid.dim() == 1 { 3 } else { 9 };
    let eps = T::epsilon().sqrt();
    let mut work = u.to_vec();
    for c in 0..colours {
        let cols: Vec<usize> = (0..ni).filter(|&k| colour(grid.lattice_of(k), grid.dim()) == c).collect();
        if cols.is_empty() {
            continue;
        }
        let steps: Vec<T> = cols.iter().map(|&j| eps * u[j].abs().max(T::one())).collect();
        for (&j, &d) in cols.iter().zip(&steps) {
            work[j] = u[j] + d;
        }
        for (&j, &d) in cols.iter().zip(&steps) {
            let mut rows: Vec<usize> = vec![j];
            rows.extend(grid.neighbors(j)[..stencil].iter().copied().filter(|&r| r < ni));
            for r in rows {
                let v = (scheme.residual_at(&work, r) - res[r]) / d;
                jac.set(r, j, v);
            }
        }
        for &j in &cols {
            work[j] = u[j];
        }
    }
    jac
}

fn newton<T: Real>(
    scheme: &Scheme<'_, T>,
    u: &mut Vec<T>,
    res: &mut Vec<T>,
    g: &mut T,
    rnorm: &mut T,
    options: &SolveOptions<T>,
    report: &mut SolveReport<T>,
) -> Result<()> {
    let ni = scheme.grid.n_interior();
    let half = T::lit(0.5);
    while *rnorm > options.tol && report.iterations < options.max_iter {
        let mut jac = jacobian(scheme, u, res);
        if !jac.factorize() {
            return Ok(());
        }
        let mut delta: Vec<T> = res.iter().map(|&r| -r).collect();
        jac.solve(&mut delta);
        if !delta.iter().all(|d| d.is_finite()) {
            return Ok(());
        }
        let merit = l2(res);
        let mut t = T::one();
        let mut accepted = false;
        let mut trial = u.clone();
        for _ in 0..40 {
            for k in 0..ni {
                trial[k] = u[k] + t * delta[k];
            }
            if is_safe(&trial[..ni]) {
                let (r, gt) = scheme.residuals(&trial);
                let m = l2(&r);
                if m.is_finite() && m <= (T::one() - T::lit(1e-4) * t) * merit {
                    std::mem::swap(u, &mut trial);
                    *res = r;
                    *g = gt;
                    accepted = true;
                    break;
                }
            }
            t = t * half;
        }
        if !accepted {
            return Ok(());
        }
        report.iterations += 1;
        report.newton_steps += 1;
        *rnorm = sup(res);
        report.history.push((report.iterations, *rnorm));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::EllipticityPair;
    use approx::assert_relative_eq;

    fn grid(r: f64, h: f64, n: usize) -> Arc<BallGrid<f64>> {
        Arc::new(BallGrid::new(&vec![0.0; n], r, h, n).unwrap())
    }

    #[test]
    fn zero_data_is_exact() {
        let p = ProblemSpec::with_constant_f(
            OperatorF::pucci_plus(EllipticityPair::new(1.0, 2.0).unwrap()),
            HamiltonianH::prototype(1.0, 1.0, 2.0).unwrap(),
            3.0,
            0.0,
        )
        .unwrap();
        for n in [1, 2] {
            let (u, rep) = solve_dirichlet(&p, grid(1.0, 0.1, n), &|_| 0.0, &SolveOptions::explicit(1e-10, 10)).unwrap();
            assert!(rep.converged);
            assert!(rep.iterations <= 1);
            assert!(u.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn quadratic_residual_is_consistent() {
        // u = x², F = Δ, H = 0, s = 3, f = 2 − x⁶
        let p = ProblemSpec::new(
            OperatorF::pucci_plus(EllipticityPair::unit()),
            HamiltonianH::zero(),
            3.0,
            Arc::new(|x: &[f64]| 2.0 - x[0].powi(6)),
        )
        .unwrap();
        let g = grid(1.0, 0.1, 1);
        let field = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]).unwrap();
        for k in 0..g.n_interior() {
            assert!(discretize_residual(&p, &field, k).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn counterexample_residual_shrinks_with_h() {
        let p = ProblemSpec::with_constant_f(
            OperatorF::laplacian(),
            HamiltonianH::prototype(0.0, 0.5, 2.0).unwrap(),
            2.0,
            -1.0,
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for h in [0.05, 0.025, 0.0125] {
            let g = grid(1.0, h, 1);
            let field = ScalarField::from_fn(g.clone(), |x| (2f64.sqrt() * x[0]).exp() + 1.0).unwrap();
            let k = g.index_of([(0.4 / h).round() as i64, 0]).unwrap();
            let r = discretize_residual(&p, &field, k).unwrap().abs();
            assert!(r < 0.6 * prev, "{r} vs {prev}");
            prev = r;
        }
    }

    #[test]
    fn explicit_and_newton_agree() {
        let p = ProblemSpec::new(
            OperatorF::pucci_minus(EllipticityPair::new(0.5, 1.5).unwrap()),
            HamiltonianH::prototype(0.3, 1.0, 1.5).unwrap(),
            3.0,
            Arc::new(|x: &[f64]| x[0].sin()),
        )
        .unwrap();
        for n in [1, 2] {
            let g = grid(1.0, 0.1, n);
            let bd = |x: &[f64]| 1.0 + 0.5 * x[0];
            let (a, ra) = solve_dirichlet(&p, g.clone(), &bd, &SolveOptions::explicit(1e-10, 200_000)).unwrap();
            let (b, rb) = solve_dirichlet(&p, g.clone(), &bd, &SolveOptions::newton(1e-10, 200)).unwrap();
            assert!(ra.converged && rb.converged, "{ra:?} {rb:?}");
            assert!(rb.newton_steps > 0 && rb.iterations < 50);
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_relative_eq!(*x, *y, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn converged_residual_is_pointwise_small() {
        let p = ProblemSpec::with_constant_f(
            OperatorF::laplacian(),
            HamiltonianH::prototype(0.0, 1.0, 2.0).unwrap(),
            3.0,
            1.0,
        )
        .unwrap();
        let g = grid(1.0, 0.125, 2);
        let (u, rep) = solve_dirichlet(&p, g.clone(), &|_| 2.0, &SolveOptions::explicit(1e-9, 100_000)).unwrap();
        assert!(rep.converged);
        for k in 0..g.n_interior() {
            assert!(discretize_residual(&p, &u, k).unwrap().abs() <= 1e-9);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let p = ProblemSpec::with_constant_f(OperatorF::laplacian(), HamiltonianH::zero(), 3.0, 1.0).unwrap();
        let (_, rep) = solve_dirichlet(&p, grid(1.0, 0.05, 1), &|_| 0.0, &SolveOptions::explicit(1e-12, 3)).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }

    #[test]
    fn unsupported_inputs() {
        let custom = OperatorF::new(
            OperatorKind::Custom(Arc::new(|_: &[f64], x: &crate::linalg::SymMatrix<f64>| x.trace())),
            EllipticityPair::unit(),
        );
        let p = ProblemSpec::with_constant_f(custom, HamiltonianH::zero(), 2.0, 0.0).unwrap();
        assert!(matches!(
            solve_dirichlet(&p, grid(1.0, 0.1, 1), &|_| 0.0, &SolveOptions::explicit(1e-6, 1)),
            Err(Error::Unsupported(_))
        ));
        assert!(ProblemSpec::with_constant_f(OperatorF::laplacian(), HamiltonianH::zero(), 0.5, 0.0).is_err());
    }

    #[test]
    fn discrete_comparison() {
        let p = ProblemSpec::new(
            OperatorF::pucci_plus(EllipticityPair::new(1.0, 3.0).unwrap()),
            HamiltonianH::prototype(-0.5, 1.0, 2.0).unwrap(),
            2.5,
            Arc::new(|x: &[f64]| x.iter().sum::<f64>()),
        )
        .unwrap();
        let g = grid(1.0, 0.1, 2);
        let tol = 1e-9;
        let (a, _) = solve_dirichlet(&p, g.clone(), &|x| 1.0 + x[1], &SolveOptions::newton(tol, 500)).unwrap();
        let (b, _) = solve_dirichlet(&p, g.clone(), &|x| x[1] - 0.5, &SolveOptions::newton(tol, 500)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(*x >= *y - 10.0 * tol);
        }
    }
}
