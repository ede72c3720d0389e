//! Pucci extremal operators, the second-order operators `F` the solver
//! understands, and randomised checkers for uniform ellipticity.

mod hamiltonian;

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::smallvec;

use crate::check::{sweep, CheckReport};
use crate::error::{invalid, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{Real, Vector};

pub use hamiltonian::{
    check_hamiltonian, check_sublinearization, empirical_power_difference_constant, hamiltonian_library, Coefficient,
    Condition, Convexity, HamiltonianFamily, HamiltonianH, Lipschitz, Orientation,
};

/// `0 < λ ≤ Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticityPair<T> {
    lambda: T,
    big_lambda: T,
}

impl<T: Real> EllipticityPair<T> {
    pub fn new(lambda: T, big_lambda: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(invalid("lambda", "must be positive"));
        }
        if !(big_lambda >= lambda) || !big_lambda.is_finite() {
            return Err(invalid("Lambda", "must be finite and at least lambda"));
        }
        Ok(Self { lambda, big_lambda })
    }

    pub fn unit() -> Self {
        Self {
            lambda: T::one(),
            big_lambda: T::one(),
        }
    }

    #[inline]
    pub fn lambda(&self) -> T {
        self.lambda
    }

    #[inline]
    pub fn big_lambda(&self) -> T {
        self.big_lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extremal {
    Plus,
    Minus,
}

/// Scalar Pucci formula applied to one eigenvalue (or one directional
/// second difference).
#[inline]
pub fn pucci_scalar<T: Real>(e: T, ell: &EllipticityPair<T>, extremal: Extremal) -> T {
    match extremal {
        Extremal::Plus => ell.big_lambda * e.pos() - ell.lambda * e.neg_part(),
        Extremal::Minus => ell.lambda * e.pos() - ell.big_lambda * e.neg_part(),
    }
}

/// `𝒫±(X)` from the spectrum of `X`.
pub fn pucci<T: Real>(x: &SymMatrix<T>, ell: &EllipticityPair<T>, extremal: Extremal) -> T {
    x.eigenvalues()
        .iter()
        .map(|&e| pucci_scalar(e, ell, extremal))
        .sum()
}

/// Uniformly random rotation (orthonormal frame) of ℝⁿ.
pub fn random_rotation<T: Real>(n: usize, rng: &mut impl Rng) -> Vec<Vector<T>> {
    if n == 1 {
        return vec![smallvec![T::one()]];
    }
    if n == 2 {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        return vec![smallvec![T::lit(c), T::lit(s)], smallvec![T::lit(-s), T::lit(c)]];
    }
    // Gram-Schmidt on Gaussian columns.
    let mut frame: Vec<Vector<T>> = Vec::with_capacity(n);
    while frame.len() < n {
        let mut v: Vector<T> = (0..n).map(|_| T::lit(gaussian(rng))).collect();
        for e in &frame {
            let d = crate::scalar::dot(&v, e);
            for (vi, &ei) in v.iter_mut().zip(e) {
                *vi = *vi - d * ei;
            }
        }
        let nv = crate::scalar::norm2(&v);
        if nv > T::lit(1e-8) {
            v.iter_mut().for_each(|vi| *vi = *vi / nv);
            frame.push(v);
        }
    }
    frame
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Random admissible `A = Q D Qᵀ` with `λI ≤ A ≤ ΛI`.
///
/// Diagonal entries follow the arcsine law on `[λ, Λ]`, which puts most
/// mass near the endpoints where the extremal traces are attained.
pub fn random_admissible<T: Real>(n: usize, ell: &EllipticityPair<T>, rng: &mut impl Rng) -> SymMatrix<T> {
    let q = random_rotation::<T>(n, rng);
    let d: Vec<T> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen_range(0.0..1.0);
            let t = (0.5 * std::f64::consts::PI * u).sin().powi(2);
            ell.lambda + (ell.big_lambda - ell.lambda) * T::lit(t)
        })
        .collect();
    SymMatrix::from_spectral(&d, &q)
}

/// Sampled `sup` (Plus) or `inf` (Minus) of `Tr(AX)` over matrices from `draw`.
pub fn pucci_bruteforce_with<T: Real>(
    x: &SymMatrix<T>,
    extremal: Extremal,
    samples: usize,
    mut draw: impl FnMut() -> SymMatrix<T>,
) -> T {
    let init = match extremal {
        Extremal::Plus => T::neg_infinity(),
        Extremal::Minus => T::infinity(),
    };
    (0..samples.max(1)).fold(init, |acc, _| {
        let t = draw().trace_product(x);
        match extremal {
            Extremal::Plus => acc.max(t),
            Extremal::Minus => acc.min(t),
        }
    })
}

/// Brute-force extremal operator over random admissible matrices; a lower
/// (Plus) or upper (Minus) bound on the exact value.
pub fn pucci_bruteforce<T: Real>(
    x: &SymMatrix<T>,
    ell: &EllipticityPair<T>,
    extremal: Extremal,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> T {
    let n = x.dim();
    pucci_bruteforce_with(x, extremal, samples, || random_admissible(n, ell, rng))
}

pub type CustomOperator<T> = Arc<dyn Fn(&[T], &SymMatrix<T>) -> T + Send + Sync>;

#[derive(Clone)]
pub enum OperatorKind<T> {
    PucciPlus,
    PucciMinus,
    Laplacian,
    /// `c · Tr(X)`.
    WeightedTrace(T),
    Custom(CustomOperator<T>),
}

impl<T: fmt::Debug> fmt::Debug for OperatorKind<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PucciPlus => write!(f, "PucciPlus"),
            Self::PucciMinus => write!(f, "PucciMinus"),
            Self::Laplacian => write!(f, "Laplacian"),
            Self::WeightedTrace(c) => write!(f, "WeightedTrace({c:?})"),
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    PucciPlus,
    PucciMinus,
    Laplacian,
    WeightedTrace,
    Custom,
}

/// Second-order operator `F(x, X)` with its declared ellipticity constants.
#[derive(Debug, Clone)]
pub struct OperatorF<T> {
    kind: OperatorKind<T>,
    ellipticity: EllipticityPair<T>,
}

impl<T: Real> OperatorF<T> {
    pub fn new(kind: OperatorKind<T>, ellipticity: EllipticityPair<T>) -> Self {
        Self { kind, ellipticity }
    }

    pub fn pucci_plus(ellipticity: EllipticityPair<T>) -> Self {
        Self::new(OperatorKind::PucciPlus, ellipticity)
    }

    pub fn pucci_minus(ellipticity: EllipticityPair<T>) -> Self {
        Self::new(OperatorKind::PucciMinus, ellipticity)
    }

    pub fn laplacian() -> Self {
        Self::new(OperatorKind::Laplacian, EllipticityPair::unit())
    }

    pub fn kind(&self) -> &OperatorKind<T> {
        &self.kind
    }

    pub fn ellipticity(&self) -> &EllipticityPair<T> {
        &self.ellipticity
    }

    pub fn tag(&self) -> OperatorTag {
        match self.kind {
            OperatorKind::PucciPlus => OperatorTag::PucciPlus,
            OperatorKind::PucciMinus => OperatorTag::PucciMinus,
            OperatorKind::Laplacian => OperatorTag::Laplacian,
            OperatorKind::WeightedTrace(_) => OperatorTag::WeightedTrace,
            OperatorKind::Custom(_) => OperatorTag::Custom,
        }
    }

    pub fn eval(&self, x: &[T], m: &SymMatrix<T>) -> T {
        match &self.kind {
            OperatorKind::PucciPlus => pucci(m, &self.ellipticity, Extremal::Plus),
            OperatorKind::PucciMinus => pucci(m, &self.ellipticity, Extremal::Minus),
            OperatorKind::Laplacian => m.trace(),
            OperatorKind::WeightedTrace(c) => *c * m.trace(),
            OperatorKind::Custom(f) => f(x, m),
        }
    }

    /// Monotone discrete operator from directional second differences.
    ///
    /// `frames` holds, per orthonormal frame of stencil directions, the
    /// second differences along that frame. Pucci operators take the
    /// extremal over frames of the frame-wise scalar formula; trace
    /// operators use the first (axis) frame. Custom operators have no
    /// discretisation.
    pub fn discrete(&self, frames: &[&[T]]) -> Option<T> {
        let frame_value = |q: &[T], ext: Extremal| -> T {
            q.iter().map(|&e| pucci_scalar(e, &self.ellipticity, ext)).sum()
        };
        match &self.kind {
            OperatorKind::PucciPlus => frames
                .iter()
                .map(|q| frame_value(q, Extremal::Plus))
                .reduce(T::max),
            OperatorKind::PucciMinus => frames
                .iter()
                .map(|q| frame_value(q, Extremal::Minus))
                .reduce(T::min),
            OperatorKind::Laplacian => frames.first().map(|q| q.iter().copied().sum()),
            OperatorKind::WeightedTrace(c) => frames.first().map(|q| *c * q.iter().copied().sum()),
            OperatorKind::Custom(_) => None,
        }
    }
}

/// Symmetric matrix with independent entries uniform in `(−scale, scale)`.
pub fn random_sym<T: Real>(n: usize, scale: f64, rng: &mut impl Rng) -> SymMatrix<T> {
    let mut m = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            m.set(i, j, T::lit(rng.gen_range(-scale..scale)));
        }
    }
    m
}

fn sym_from_upper<T: Real>(n: usize, upper: &[T]) -> SymMatrix<T> {
    let mut m = SymMatrix::zeros(n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m.set(i, j, upper[k]);
            k += 1;
        }
    }
    m
}

/// Samples `(x, X, Y)` and checks `𝒫⁻(Y−X) ≤ F(x,Y) − F(x,X) ≤ 𝒫⁺(Y−X)`
/// with the operator's declared constants.
pub fn check_uniform_ellipticity<T: Real>(op: &OperatorF<T>, dim: usize, samples: usize, seed: u64) -> CheckReport<T> {
    let nu = dim * (dim + 1) / 2;
    let mut labels: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    for name in ["X", "Y"] {
        for i in 0..dim {
            for j in i..dim {
                labels.push(format!("{name}{i}{j}"));
            }
        }
    }
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let ell = op.ellipticity;
    sweep(
        "uniform_ellipticity",
        &labels,
        samples,
        seed,
        |rng| {
            let mut v: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-10.0..10.0))).collect();
            for _ in 0..2 * nu {
                v.push(T::lit(rng.gen_range(-10.0..10.0)));
            }
            v
        },
        |v| {
            let x = &v[..dim];
            let mx = sym_from_upper(dim, &v[dim..dim + nu]);
            let my = sym_from_upper(dim, &v[dim + nu..]);
            let diff = op.eval(x, &my) - op.eval(x, &mx);
            let d = my.sub(&mx);
            let lower = diff - pucci(&d, &ell, Extremal::Minus);
            let upper = pucci(&d, &ell, Extremal::Plus) - diff;
            lower.min(upper)
        },
    )
}

/// Checks `r^m ≤ (2−m) r + (m−1) r²` on sampled `r ∈ [0, 10³]`.
pub fn interpolation_check<T: Real>(m: T, samples: usize, seed: u64) -> Result<CheckReport<T>> {
    if !(m >= T::one() && m <= T::lit(2.0)) {
        return Err(invalid("m", "must lie in [1, 2]"));
    }
    let two = T::lit(2.0);
    Ok(sweep(
        "interpolation",
        &["r"],
        samples,
        seed,
        |rng| {
            let r = match rng.gen_range(0..64) {
                0 => 0.0,
                1 => 1.0,
                _ => 10f64.powf(rng.gen_range(-6.0..3.0)),
            };
            vec![T::lit(r)]
        },
        |v| interpolation_margin(m, v[0], two),
    ))
}

#[inline]
fn interpolation_margin<T: Real>(m: T, r: T, two: T) -> T {
    (two - m) * r + (m - T::one()) * r * r - r.powf(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn ell(l: f64, u: f64) -> EllipticityPair<f64> {
        EllipticityPair::new(l, u).unwrap()
    }

    #[test]
    fn pucci_closed_form_examples() {
        let e = ell(1.0, 2.0);
        let z = SymMatrix::zeros(2);
        assert_eq!(pucci(&z, &e, Extremal::Plus), 0.0);
        assert_eq!(pucci(&z, &e, Extremal::Minus), 0.0);
        let x = SymMatrix::diag(&[1.0, -1.0]);
        assert_eq!(pucci(&x, &e, Extremal::Plus), 1.0);
        assert_eq!(pucci(&x, &e, Extremal::Minus), -1.0);
        assert_eq!(pucci(&SymMatrix::identity(2), &e, Extremal::Plus), 4.0);
    }

    #[test]
    fn bruteforce_approaches_from_below() {
        let e = ell(1.0, 2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id = SymMatrix::identity(2);
        let b = pucci_bruteforce(&id, &e, Extremal::Plus, 10_000, &mut rng);
        assert!(b <= 4.0 + 1e-12 && b > 3.99);

        let x = SymMatrix::diag(&[1.0, -1.0]);
        let b = pucci_bruteforce(&x, &e, Extremal::Plus, 100_000, &mut rng);
        assert!((b - 1.0).abs() < 0.01 && b <= 1.0 + 1e-12, "{b}");
    }

    #[test]
    fn bruteforce_single_forced_sample() {
        let e = ell(1.5, 2.0);
        let x = SymMatrix::from_rows(&[&[3.0, 0.5], &[0.5, -1.0]]);
        let v = pucci_bruteforce_with(&x, Extremal::Plus, 1, || SymMatrix::scaled_identity(2, e.lambda()));
        assert_eq!(v, 1.5 * x.trace());
    }

    #[test]
    fn ellipticity_checker_examples() {
        let e = ell(1.0, 3.0);
        assert!(check_uniform_ellipticity(&OperatorF::pucci_plus(e), 2, 20_000, 1).passed());
        assert!(check_uniform_ellipticity(&OperatorF::pucci_minus(e), 3, 5_000, 1).passed());
        assert!(check_uniform_ellipticity(&OperatorF::<f64>::laplacian(), 2, 20_000, 1).passed());
        let wrong = OperatorF::new(OperatorKind::Laplacian, ell(2.0, 2.0));
        let rep = check_uniform_ellipticity(&wrong, 2, 20_000, 1);
        assert!(!rep.passed());
        // direct evaluation at the witness
        let d = SymMatrix::from_rows(&[
            &[rep.witness_value("Y00").unwrap() - rep.witness_value("X00").unwrap(), 0.0],
            &[0.0, rep.witness_value("Y11").unwrap() - rep.witness_value("X11").unwrap()],
        ]);
        assert!(d.trace().abs() > 0.0);
    }

    #[test]
    fn discrete_pucci_takes_extremal_frame() {
        let e = ell(1.0, 2.0);
        let op = OperatorF::pucci_plus(e);
        let axis = [1.0, -1.0];
        let diag = [0.5, 0.5];
        // axis: 2·1 − 1 = 1, diagonal: 2·0.5 + 2·0.5 = 2
        assert_eq!(op.discrete(&[&axis, &diag]), Some(2.0));
        let op = OperatorF::pucci_minus(e);
        assert_eq!(op.discrete(&[&axis, &diag]), Some(-1.0));
        assert_eq!(OperatorF::<f64>::laplacian().discrete(&[&axis, &diag]), Some(0.0));
    }

    #[test]
    fn interpolation_examples() {
        assert_eq!(interpolation_margin(1.0, 7.0, 2.0), 0.0);
        assert_eq!(interpolation_margin(2.0, 7.0, 2.0), 0.0);
        assert_relative_eq!(interpolation_margin(1.5, 2.0, 2.0), 3.0 - 2f64.powf(1.5), epsilon = 1e-15);
        assert!(interpolation_check(1.5, 100_000, 9).unwrap().passed());
        assert!(interpolation_check(2.5f64, 10, 9).is_err());
    }

    #[test]
    fn pucci_f32() {
        let e = EllipticityPair::<f32>::new(1.0, 2.0).unwrap();
        assert_eq!(pucci(&SymMatrix::<f32>::identity(2), &e, Extremal::Plus), 4.0);
    }
}
