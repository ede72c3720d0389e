//! Entire solutions as limits of Dirichlet problems on expanding balls, with
//! checks of the local a priori bound and of the growth rate.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::{barrier_constants, exponent_mu, BarrierParams};
use crate::check::CheckReport;
use crate::error::{invalid, Error, Result};
use crate::grid::{norm, Ball, BallGrid, NormKind, ScalarField};
use crate::scalar::{dist, Real};
use crate::solver::{solve_dirichlet, ProblemSpec, ScalarFn, SolveOptions, SolveReport};

/// Dirichlet datum on the sphere of radius `R`: `(R, x) ↦ g_R(x)`.
pub type BoundaryFamily<T> = Arc<dyn Fn(T, &[T]) -> T + Send + Sync>;

pub fn constant_family<T: Real>(c: T) -> BoundaryFamily<T> {
    Arc::new(move |_, _| c)
}

/// The same datum for every radius.
pub fn fixed_family<T: Real>(g: ScalarFn<T>) -> BoundaryFamily<T> {
    Arc::new(move |_, x| g(x))
}

/// Balls `B_R(0)` for each radius, discretised with spacing `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionConfig<T> {
    pub radii: Vec<T>,
    pub h: T,
    pub dim: usize,
}

impl<T: Real> ExpansionConfig<T> {
    /// Radii `1, 2, …, k_max`.
    pub fn integer_radii(k_max: usize, h: T, dim: usize) -> Self {
        Self {
            radii: (1..=k_max).map(|k| T::lit(k as f64)).collect(),
            h,
            dim,
        }
    }
}

/// `sup_{B_j} |u_k − u_{k'}|` for consecutive radii `k < k'`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationRow<T> {
    pub inner_radius: T,
    pub radius: T,
    pub next_radius: T,
    pub sup_difference: T,
}

pub struct EntireRun<T> {
    pub problem: ProblemSpec<T>,
    pub config: ExpansionConfig<T>,
    pub fields: Vec<ScalarField<T>>,
    pub reports: Vec<SolveReport<T>>,
    pub stabilization: Vec<StabilizationRow<T>>,
    /// Some solve stopped before reaching its tolerance.
    pub flagged: bool,
}

/// Largest difference of two fields on shared lattice nodes inside `ball`.
///
/// Both grids must use the same spacing and a common lattice.
pub fn sup_difference<T: Real>(a: &ScalarField<T>, b: &ScalarField<T>, ball: &Ball<T>) -> Result<T> {
    let (ga, gb) = (a.grid(), b.grid());
    if ga.dim() != gb.dim() || ga.h() != gb.h() {
        return Err(invalid("fields", "grids must share dimension and spacing"));
    }
    if !ga.covers(ball) || !gb.covers(ball) {
        return Err(Error::EmptySubdomain);
    }
    let nodes = ga.nodes_in(ball);
    if nodes.is_empty() {
        return Err(Error::EmptySubdomain);
    }
    let mut worst = T::zero();
    for k in nodes {
        let other = b
            .at_lattice(ga.lattice_of(k))
            .ok_or_else(|| invalid("fields", "grids do not share a lattice"))?;
        worst = worst.max((a.value(k) - other).abs());
    }
    Ok(worst)
}

/// Solves on every ball of `config` and tabulates how consecutive
/// solutions differ on the fixed inner balls `B_j`, `j < min(k, k')`.
pub fn construct_entire<T: Real>(
    problem: &ProblemSpec<T>,
    config: &ExpansionConfig<T>,
    boundary: &BoundaryFamily<T>,
    options: &SolveOptions<T>,
) -> Result<EntireRun<T>> {
    problem.require_gap()?;
    run_expansion(problem, config, boundary, options)
}

/// [`construct_entire`] without the `s > m` requirement, for control runs
/// outside the theory.
pub fn run_expansion<T: Real>(
    problem: &ProblemSpec<T>,
    config: &ExpansionConfig<T>,
    boundary: &BoundaryFamily<T>,
    options: &SolveOptions<T>,
) -> Result<EntireRun<T>> {
    if config.radii.is_empty() || config.radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("radii", "must be non-empty and increasing"));
    }
    let center = vec![T::zero(); config.dim];
    let solved: Vec<Result<(ScalarField<T>, SolveReport<T>)>> = config
        .radii
        .par_iter()
        .map(|&r| {
            let grid = Arc::new(BallGrid::new(&center, r, config.h, config.dim)?);
            let g = boundary.clone();
            solve_dirichlet(problem, grid, &move |x| g(r, x), options)
        })
        .collect();
    let mut fields = Vec::with_capacity(solved.len());
    let mut reports = Vec::with_capacity(solved.len());
    for item in solved {
        let (f, rep) = item?;
        fields.push(f);
        reports.push(rep);
    }
    let mut stabilization = Vec::new();
    for (i, pair) in fields.windows(2).enumerate() {
        let (r, r_next) = (config.radii[i], config.radii[i + 1]);
        let mut j = T::one();
        while j < r {
            stabilization.push(StabilizationRow {
                inner_radius: j,
                radius: r,
                next_radius: r_next,
                sup_difference: sup_difference(&pair[0], &pair[1], &Ball::new(&center, j))?,
            });
            j = j + T::one();
        }
    }
    let flagged = reports.iter().any(|r| !r.converged);
    Ok(EntireRun {
        problem: problem.clone(),
        config: config.clone(),
        fields,
        reports,
        stabilization,
        flagged,
    })
}

impl<T: Real> EntireRun<T> {
    /// Consecutive differences on each inner ball decrease and the last one
    /// is below `threshold`.
    pub fn stabilized(&self, threshold: T) -> bool {
        let mut inner: Vec<T> = self.stabilization.iter().map(|r| r.inner_radius).collect();
        inner.sort_by(|a, b| a.partial_cmp(b).expect("finite radii"));
        inner.dedup();
        inner.iter().all(|&j| {
            let seq: Vec<T> = self
                .stabilization
                .iter()
                .filter(|r| r.inner_radius == j)
                .map(|r| r.sup_difference)
                .collect();
            seq.windows(2).all(|w| w[1] <= w[0]) && seq.last().map_or(true, |&d| d <= threshold)
        })
    }

    /// `sup_{B_ρ} |u_k|` for each radius whose grid covers `B_ρ(0)`.
    pub fn sup_on_ball(&self, rho: T) -> Result<Vec<(T, T)>> {
        let ball = Ball::centered(self.config.dim, rho);
        self.fields
            .iter()
            .zip(&self.config.radii)
            .filter(|(f, _)| f.grid().covers(&ball))
            .map(|(f, &r)| Ok((r, norm(f, NormKind::Sup, &ball)?)))
            .collect()
    }
}

/// `sup_{B_ρ} |u_k − v_k|` for the radii two runs share.
pub fn compare_runs<T: Real>(a: &EntireRun<T>, b: &EntireRun<T>, rho: T) -> Result<Vec<(T, T)>> {
    let ball = Ball::centered(a.config.dim, rho);
    let mut out = Vec::new();
    for (fa, &r) in a.fields.iter().zip(&a.config.radii) {
        if let Some(i) = b.config.radii.iter().position(|&q| q == r) {
            if fa.grid().covers(&ball) {
                out.push((r, sup_difference(fa, &b.fields[i], &ball)?));
            }
        }
    }
    Ok(out)
}

/// Least-squares slope `p` of `log y ≈ c − p log x`, discarding the first
/// `discard` points.
pub fn fit_decay_exponent<T: Real>(points: &[(T, T)], discard: usize) -> Result<T> {
    let tail: Vec<(f64, f64)> = points
        .iter()
        .skip(discard)
        .map(|&(x, y)| (x.as_f64().ln(), y.as_f64().ln()))
        .collect();
    if tail.len() < 2 || tail.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(invalid("points", "need two positive points after discarding"));
    }
    let n = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = tail.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(T::lit(-sxy / sxx))
}

/// Structural constants entering the local bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalBoundParams<T> {
    pub s: T,
    pub m: T,
    pub n: usize,
    pub lambda: T,
    pub big_lambda: T,
    pub gamma1: T,
    pub gamma_m: T,
}

impl<T: Real> LocalBoundParams<T> {
    /// Constants of a problem whose operator and Hamiltonian carry them.
    pub fn from_problem(problem: &ProblemSpec<T>, n: usize) -> Result<Self> {
        let lip = problem
            .hamiltonian
            .lipschitz()
            .ok_or(Error::MissingConstants("local_bound"))?;
        let ell = problem.operator.ellipticity();
        Ok(Self {
            s: problem.s,
            m: problem.m(),
            n,
            lambda: ell.lambda(),
            big_lambda: ell.big_lambda(),
            gamma1: lip.gamma1,
            gamma_m: lip.gamma_m,
        })
    }
}

/// Empirical constants standing in for the ABP estimate:
/// `sup u ≤ sup_∂ u⁺ + C·diam·‖f⁻‖_{Lⁿ}` whenever
/// `‖f⁻‖_{Lⁿ}·diam < δ̂`, for radii `r ≤ r_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbpConstants<T> {
    pub c: T,
    pub delta_hat: T,
    pub r_max: T,
    /// Number of calibration solves behind `c`; zero when configured by hand.
    pub calibration_runs: usize,
}

impl<T: Real> AbpConstants<T> {
    pub fn configured(c: T, delta_hat: T, r_max: T) -> Self {
        Self {
            c,
            delta_hat,
            r_max,
            calibration_runs: 0,
        }
    }
}

/// Fits the ABP constant `C` on problems with constant `f = −c` and zero
/// boundary data on `B_{radius}`: the largest observed
/// `sup u / (diam · ‖f⁻‖_{Lⁿ})`.
pub fn calibrate_abp<T: Real>(
    problem: &ProblemSpec<T>,
    levels: &[T],
    radius: T,
    h: T,
    dim: usize,
    delta_hat: T,
    r_max: T,
    options: &SolveOptions<T>,
) -> Result<AbpConstants<T>> {
    if levels.is_empty() || levels.iter().any(|&c| !(c > T::zero())) {
        return Err(invalid("levels", "need positive calibration levels"));
    }
    let grid = Arc::new(BallGrid::new(&vec![T::zero(); dim], radius, h, dim)?);
    let ball = Ball::centered(dim, radius);
    let diam = T::lit(2.0) * radius;
    let mut c_fit = T::zero();
    for &level in levels {
        let p = ProblemSpec::new(
            problem.operator.clone(),
            problem.hamiltonian.clone(),
            problem.s,
            Arc::new(move |_| -level),
        )?;
        let (u, rep) = solve_dirichlet(&p, grid.clone(), &|_| T::zero(), options)?;
        if !rep.converged {
            return Err(Error::Rejected(format!("calibration solve at level {level} did not converge")));
        }
        let fneg = ScalarField::constant(grid.clone(), level);
        let fnorm = norm(&fneg, NormKind::Lp(T::lit(dim as f64)), &ball)?;
        let top = u.interior_values().iter().fold(T::zero(), |a, &v| a.max(v));
        c_fit = c_fit.max(top / (diam * fnorm));
    }
    Ok(AbpConstants {
        c: c_fit,
        delta_hat,
        r_max,
        calibration_runs: levels.len(),
    })
}

/// Terms of the local bound `sup_{B_r}|u| ≤ C₀-term + C r ‖f⁻‖_{Lⁿ(B_{2r})}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalBound<T> {
    pub barrier_term: T,
    pub source_term: T,
    pub f_norm: T,
    pub c_2r: T,
    pub mu: T,
}

impl<T: Real> LocalBound<T> {
    pub fn total(&self) -> T {
        self.barrier_term + self.source_term
    }
}

/// Local bound on `B_r(center)` from the barrier `φ_{2r}` (with
/// `γ = 2^{m−1}γ_m`, `δ = 1`) and the ABP source term.
///
/// `f_minus` is `f⁻` sampled on a grid covering `B_{2r}(center)`; `None`
/// means `f ≡ 0`. `c0_scale` multiplies the barrier term (1 for the honest
/// bound).
pub fn local_bound<T: Real>(
    r: T,
    center: &[T],
    f_minus: Option<&ScalarField<T>>,
    params: &LocalBoundParams<T>,
    abp: &AbpConstants<T>,
    c0_scale: T,
) -> Result<LocalBound<T>> {
    if !(r > T::zero()) {
        return Err(invalid("r", "must be positive"));
    }
    if r > abp.r_max {
        return Err(Error::RadiusTooLarge {
            r: r.as_f64(),
            r_max: abp.r_max.as_f64(),
        });
    }
    let two = T::lit(2.0);
    let spec = barrier_constants(&BarrierParams {
        s: params.s,
        m: params.m,
        n: params.n,
        lambda: params.lambda,
        big_lambda: params.big_lambda,
        gamma1: params.gamma1,
        gamma: two.powf(params.m - T::one()) * params.gamma_m,
        delta: T::one(),
        radius: two * r,
    })?;
    let mu = spec.mu;
    let barrier_term = c0_scale * spec.c_r * (two / T::lit(3.0)).powf(mu) * r.powf(-mu);
    let (f_norm, source_term) = match f_minus {
        None => (T::zero(), T::zero()),
        Some(f) => {
            let ball = Ball::new(center, two * r);
            let fnorm = norm(f, NormKind::Lp(T::lit(params.n as f64)), &ball)?;
            let lhs = fnorm * T::lit(4.0) * r;
            if !(lhs < abp.delta_hat) {
                return Err(Error::SmallnessViolated {
                    lhs: lhs.as_f64(),
                    delta_hat: abp.delta_hat.as_f64(),
                });
            }
            (fnorm, abp.c * r * fnorm)
        }
    };
    Ok(LocalBound {
        barrier_term,
        source_term,
        f_norm,
        c_2r: spec.c_r,
        mu,
    })
}

/// Margins `local_bound − sup_{B_r(center)} |u_k|` over the solutions of a
/// run whose ball contains `B_{2r}(center)`.
pub fn check_local_bound<T: Real>(
    run: &EntireRun<T>,
    r: T,
    center: &[T],
    abp: &AbpConstants<T>,
    c0_scale: T,
) -> Result<CheckReport<T>> {
    let params = LocalBoundParams::from_problem(&run.problem, run.config.dim)?;
    let inner = Ball::new(center, r);
    let mut items = Vec::new();
    for (field, &radius) in run.fields.iter().zip(&run.config.radii) {
        let grid = field.grid_arc();
        if dist(center, grid.center()) + T::lit(2.0) * r >= radius {
            continue;
        }
        let f = &run.problem.f;
        let fneg = ScalarField::from_fn_lattice(grid.clone(), |x| f(x).neg_part())?;
        let any_source = fneg.values().iter().any(|&v| v > T::zero());
        let bound = local_bound(r, center, any_source.then_some(&fneg), &params, abp, c0_scale)?;
        let sup = norm(field, NormKind::Sup, &inner)?;
        items.push((bound.total() - sup, vec![radius, bound.total(), sup]));
    }
    if items.is_empty() {
        return Err(Error::EmptySubdomain);
    }
    Ok(CheckReport::from_margins("local_bound", &["radius", "bound", "sup_abs_u"], items))
}

/// Right-hand side `f = −(1 + |x|^ρ)` of the growth experiment.
pub fn growth_rhs<T: Real>(rho: T) -> ScalarFn<T> {
    Arc::new(move |x: &[T]| {
        let r = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        -(T::one() + r.powf(rho))
    })
}

/// `2m′/(μs)` with `m′ = m/(m−1)`; infinite for `m = 1`.
pub fn growth_threshold<T: Real>(s: T, m: T) -> Result<T> {
    let mu = exponent_mu(s, m)?;
    if m == T::one() {
        return Ok(T::infinity());
    }
    let conj = m / (m - T::one());
    Ok(T::lit(2.0) * conj / (mu * s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShellRow<T> {
    pub inner: T,
    pub outer: T,
    pub max_ratio: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthProfile<T> {
    pub rho: T,
    /// `μsρ/2`.
    pub exponent: T,
    pub threshold: T,
    pub shells: Vec<ShellRow<T>>,
    /// The last half of the shell maxima is non-increasing.
    pub bounded: bool,
}

/// Shell maxima of `(u⁺)^s / |x|^{μsρ/2}` for the largest solution of `run`,
/// over unit shells `[j, j+1)`, `j ≥ 1`, stopping one unit short of its
/// boundary.
pub fn growth_profile<T: Real>(run: &EntireRun<T>, rho: T) -> Result<GrowthProfile<T>> {
    if !(rho >= T::zero()) {
        return Err(invalid("rho", "must be nonnegative"));
    }
    let (s, m) = (run.problem.s, run.problem.m());
    let mu = exponent_mu(s, m)?;
    let exponent = mu * s * rho / T::lit(2.0);
    let field = run.fields.last().expect("runs are non-empty");
    let grid = field.grid();
    let radius = *run.config.radii.last().expect("runs are non-empty");
    let mut shells = Vec::new();
    let mut j = T::one();
    while j + T::lit(2.0) <= radius {
        let (lo, hi) = (j, j + T::one());
        let mut best = T::zero();
        for (k, node) in grid.interior().iter().enumerate() {
            let r = dist(&node.coords, grid.center());
            if r >= lo && r < hi {
                best = best.max(field.value(k).pos().powf(s) / r.powf(exponent));
            }
        }
        shells.push(ShellRow {
            inner: lo,
            outer: hi,
            max_ratio: best,
        });
        j = hi;
    }
    if shells.is_empty() {
        return Err(invalid("radii", "largest radius must be at least 3"));
    }
    let tail = &shells[shells.len() / 2..];
    let tol = T::lit(1e-6);
    let bounded = tail
        .windows(2)
        .all(|w| w[1].max_ratio <= w[0].max_ratio * (T::one() + tol) + tol);
    Ok(GrowthProfile {
        rho,
        exponent,
        threshold: growth_threshold(s, m)?,
        shells,
        bounded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{HamiltonianH, OperatorF};
    use approx::assert_relative_eq;

    fn prototype(f: f64) -> ProblemSpec<f64> {
        ProblemSpec::with_constant_f(OperatorF::laplacian(), HamiltonianH::prototype(0.0, 1.0, 2.0).unwrap(), 3.0, f)
            .unwrap()
    }

    fn params() -> LocalBoundParams<f64> {
        LocalBoundParams::from_problem(&prototype(0.0), 1).unwrap()
    }

    #[test]
    fn zero_problem_is_exactly_stable() {
        let run = construct_entire(
            &prototype(0.0),
            &ExpansionConfig::integer_radii(3, 0.05, 1),
            &constant_family(0.0),
            &SolveOptions::newton(1e-10, 100),
        )
        .unwrap();
        assert!(!run.flagged);
        assert!(run.stabilization.iter().all(|r| r.sup_difference == 0.0));
        assert!(run.stabilized(0.0));
        let abp = AbpConstants::configured(1.0, 1.0, 0.5);
        let rep = check_local_bound(&run, 0.5, &[0.0], &abp, 1.0).unwrap();
        let bound = local_bound(0.5, &[0.0], None, &params(), &abp, 1.0).unwrap();
        assert_eq!(rep.worst_margin, bound.total());
    }

    #[test]
    fn requires_gap() {
        let p = ProblemSpec::with_constant_f(
            OperatorF::laplacian(),
            HamiltonianH::prototype(0.0, 0.5, 2.0).unwrap(),
            2.0,
            -1.0,
        )
        .unwrap();
        let cfg = ExpansionConfig::integer_radii(2, 0.1, 1);
        assert!(construct_entire(&p, &cfg, &constant_family(0.0), &SolveOptions::newton(1e-8, 50)).is_err());
        assert!(run_expansion(&p, &cfg, &constant_family(1.0), &SolveOptions::newton(1e-8, 50)).is_ok());
    }

    #[test]
    fn zero_source_bound_is_barrier_value() {
        let abp = AbpConstants::configured(1.0, 1.0, 0.5);
        let p = params();
        for r in [0.125, 0.25, 0.5] {
            let b = local_bound(r, &[0.0], None, &p, &abp, 1.0).unwrap();
            // φ_{2r} on |x| = r
            let spec = barrier_constants(&BarrierParams::new(3.0, 2.0, 1, 1.0, 0.0, 4.0, 1.0, 2.0 * r)).unwrap();
            assert_relative_eq!(b.total(), spec.value_at_radius(r), max_relative = 1e-13);
        }
        assert!(matches!(
            local_bound(0.75, &[0.0], None, &p, &abp, 1.0),
            Err(Error::RadiusTooLarge { .. })
        ));
    }

    #[test]
    fn bound_scaling_between_regimes() {
        let abp = AbpConstants::configured(1.0, 1.0, 100.0);
        let p = params();
        let small = local_bound(0.01, &[0.0], None, &p, &abp, 1.0).unwrap().total();
        let twice = local_bound(0.02, &[0.0], None, &p, &abp, 1.0).unwrap().total();
        let ratio = small / twice;
        assert!((2.0 - 1e-9..=4.0 + 1e-9).contains(&ratio), "{ratio}");
        let big = local_bound(20.0, &[0.0], None, &p, &abp, 1.0).unwrap().total();
        let big2 = local_bound(40.0, &[0.0], None, &p, &abp, 1.0).unwrap().total();
        assert_relative_eq!(big / big2, 2.0, max_relative = 1e-12);
        assert_relative_eq!(small / twice, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn constant_source_term() {
        let grid = Arc::new(BallGrid::new(&[0.0], 2.0, 0.01, 1).unwrap());
        let fneg = ScalarField::constant(grid.clone(), 1.0);
        let abp = AbpConstants::configured(0.7, 10.0, 0.5);
        let b = local_bound(0.25, &[0.0], Some(&fneg), &params(), &abp, 1.0).unwrap();
        // ‖1‖_{L¹(B_0.5)} over the 101 nodes |x| ≤ 0.5 with weight h
        assert_relative_eq!(b.f_norm, 1.01, max_relative = 1e-12);
        assert_relative_eq!(b.source_term, 0.7 * 0.25 * 1.01, max_relative = 1e-12);
        let tight = AbpConstants::configured(0.7, 0.5, 0.5);
        assert!(matches!(
            local_bound(0.25, &[0.0], Some(&fneg), &params(), &tight, 1.0),
            Err(Error::SmallnessViolated { .. })
        ));
    }

    #[test]
    fn decay_fit_recovers_power() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|k| (k as f64, 3.0 * (k as f64).powf(-2.0))).collect();
        assert_relative_eq!(fit_decay_exponent(&pts, 2).unwrap(), 2.0, max_relative = 1e-12);
    }

    #[test]
    fn threshold_branches() {
        assert_relative_eq!(growth_threshold(3.0, 2.0).unwrap(), 2.0 / 3.0, max_relative = 1e-14);
        assert!(growth_threshold(3.0f64, 1.0).unwrap().is_infinite());
    }

    #[test]
    fn calibration_gives_positive_constant() {
        let abp = calibrate_abp(&prototype(0.0), &[0.5, 1.0], 0.5, 0.02, 1, 1.0, 0.5, &SolveOptions::newton(1e-10, 100))
            .unwrap();
        assert!(abp.c > 0.0 && abp.c < 1.0, "{abp:?}");
        assert_eq!(abp.calibration_runs, 2);
    }
}
