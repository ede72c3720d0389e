//! Manufactured-solution convergence harness.

use std::sync::Arc;

use serde::Serialize;

use super::{solve_dirichlet, ProblemSpec, ScalarFn, SolveOptions};
use crate::error::{invalid, Error, Result};
use crate::grid::BallGrid;
use crate::operators::{EllipticityPair, HamiltonianH, OperatorF};
use crate::scalar::{dist, Real};

/// A problem on `B_radius(0)` whose exact solution is known in closed form.
#[derive(Clone)]
pub struct ManufacturedCase<T> {
    pub name: String,
    pub problem: ProblemSpec<T>,
    pub exact: ScalarFn<T>,
    pub dim: usize,
    pub radius: T,
}

impl<T: Real> ManufacturedCase<T> {
    /// `u* = cos x` on `(−1, 1)` with `F = Δ`, `H = |p|²`, `s = 3`.
    pub fn cosine_1d() -> Self {
        let f: ScalarFn<T> = Arc::new(|x: &[T]| {
            let (c, s) = (x[0].cos(), x[0].sin());
            -c + s * s - c * c * c
        });
        Self {
            name: "cosine_1d".into(),
            problem: ProblemSpec::new(OperatorF::laplacian(), quadratic_h(), T::lit(3.0), f).expect("valid"),
            exact: Arc::new(|x: &[T]| x[0].cos()),
            dim: 1,
            radius: T::one(),
        }
    }

    /// `u* = x` with `F = Δ`, `H = 0`, `s = 3`, on which the scheme is exact.
    pub fn linear_1d() -> Self {
        let f: ScalarFn<T> = Arc::new(|x: &[T]| -x[0].powi(3));
        Self {
            name: "linear_1d".into(),
            problem: ProblemSpec::new(OperatorF::laplacian(), HamiltonianH::zero(), T::lit(3.0), f).expect("valid"),
            exact: Arc::new(|x: &[T]| x[0]),
            dim: 1,
            radius: T::one(),
        }
    }

    /// `u* = 1 − |x|²` on the unit disc with `F = 𝒫⁺` (`λ = Λ = 1`),
    /// `H = 0`, `s = 3`.
    pub fn quadratic_2d() -> Self {
        let exact = |x: &[T]| T::one() - x[0] * x[0] - x[1] * x[1];
        let f: ScalarFn<T> = Arc::new(move |x: &[T]| T::lit(-4.0) - exact(x).signed_pow(T::lit(3.0)));
        Self {
            name: "quadratic_2d".into(),
            problem: ProblemSpec::new(
                OperatorF::pucci_plus(EllipticityPair::unit()),
                HamiltonianH::zero(),
                T::lit(3.0),
                f,
            )
            .expect("valid"),
            exact: Arc::new(exact),
            dim: 2,
            radius: T::one(),
        }
    }
}

fn quadratic_h<T: Real>() -> HamiltonianH<T> {
    HamiltonianH::prototype(T::zero(), T::one(), T::lit(2.0)).expect("valid")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmsRow<T> {
    pub h: T,
    pub error: T,
    /// `log(e_prev/e) / log(h_prev/h)`; absent on the first row.
    pub order: Option<T>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MmsTable<T> {
    pub case: String,
    pub rows: Vec<MmsRow<T>>,
}

impl<T: Real> MmsTable<T> {
    pub fn min_order(&self) -> Option<T> {
        self.rows.iter().filter_map(|r| r.order).reduce(T::min)
    }

    pub fn errors_decrease(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// Solves `case` for every spacing in `hs` (strictly decreasing) and
/// tabulates the interior sup-norm error against the exact solution.
pub fn mms_convergence<T: Real>(case: &ManufacturedCase<T>, hs: &[T], options: &SolveOptions<T>) -> Result<MmsTable<T>> {
    if hs.is_empty() || hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("h_list", "must be non-empty and strictly decreasing"));
    }
    let center = vec![T::zero(); case.dim];
    let mut rows: Vec<MmsRow<T>> = Vec::with_capacity(hs.len());
    for &h in hs {
        let grid = Arc::new(BallGrid::new(&center, case.radius, h, case.dim)?);
        let exact = case.exact.clone();
        let (u, report) = solve_dirichlet(&case.problem, grid.clone(), &|x| exact(x), options)?;
        if !report.converged {
            return Err(Error::Rejected(format!(
                "solve at h = {h} stopped at residual {} after {} iterations",
                report.final_residual, report.iterations
            )));
        }
        let error = grid
            .interior()
            .iter()
            .enumerate()
            .map(|(k, node)| (u.value(k) - (case.exact)(&node.coords)).abs())
            .fold(T::zero(), T::max);
        let order = rows
            .last()
            .map(|prev| (prev.error / error).ln() / (prev.h / h).ln());
        rows.push(MmsRow {
            h,
            error,
            order,
            iterations: report.iterations,
            converged: report.converged,
        });
        debug_assert!(grid.interior().iter().all(|n| dist(&n.coords, &center) < case.radius));
    }
    Ok(MmsTable {
        case: case.name.clone(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_case_is_exact() {
        let case = ManufacturedCase::<f64>::linear_1d();
        let t = mms_convergence(&case, &[0.1, 0.05], &SolveOptions::explicit(1e-12, 1_000_000)).unwrap();
        for r in &t.rows {
            assert!(r.error < 1e-10, "{r:?}");
        }
    }

    #[test]
    fn cosine_case_converges_first_order() {
        let case = ManufacturedCase::<f64>::cosine_1d();
        let t = mms_convergence(&case, &[0.1, 0.05, 0.025], &SolveOptions::explicit(1e-11, 2_000_000)).unwrap();
        assert!(t.errors_decrease());
        // first-order upwinding: the observed order approaches 1 from below
        let orders: Vec<f64> = t.rows.iter().filter_map(|r| r.order).collect();
        assert!(orders.iter().all(|&p| (0.85..1.1).contains(&p)), "{t:?}");
        assert!(orders[1] > orders[0]);
    }

    #[test]
    fn rejects_unsorted_spacings() {
        let case = ManufacturedCase::<f64>::linear_1d();
        assert!(mms_convergence(&case, &[0.05, 0.1], &SolveOptions::explicit(1e-8, 10)).is_err());
    }
}
