//! Hamiltonians `H(x, p)` with superlinear growth in `p`, the constants of
//! their structure conditions, and samplers that test those conditions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barrier::tilde_gamma;
use crate::check::{sweep, CheckReport};
use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{dist, norm2, Real};

/// `c(x) = base + amplitude · sin(frequency · x₁)`; Lipschitz in `x`.
///
/// Deserializes from a bare number (a constant) or a table with `base` and
/// optional `amplitude`, `frequency`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(
    bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"),
    from = "CoefficientRepr<T>"
)]
pub struct Coefficient<T> {
    pub base: T,
    pub amplitude: T,
    pub frequency: T,
}

#[derive(Deserialize)]
#[serde(untagged, bound(deserialize = "T: Real + Deserialize<'de>"))]
enum CoefficientRepr<T> {
    Constant(T),
    Full(CoefficientTable<T>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Real + Deserialize<'de>"))]
struct CoefficientTable<T> {
    base: T,
    #[serde(default = "T::zero")]
    amplitude: T,
    #[serde(default = "T::zero")]
    frequency: T,
}

impl<T: Real> From<CoefficientRepr<T>> for Coefficient<T> {
    fn from(r: CoefficientRepr<T>) -> Self {
        match r {
            CoefficientRepr::Constant(c) => Self::constant(c),
            CoefficientRepr::Full(t) => Self::oscillating(t.base, t.amplitude, t.frequency),
        }
    }
}

impl<T: Real> Coefficient<T> {
    pub fn constant(c: T) -> Self {
        Self {
            base: c,
            amplitude: T::zero(),
            frequency: T::zero(),
        }
    }

    pub fn oscillating(base: T, amplitude: T, frequency: T) -> Self {
        Self {
            base,
            amplitude,
            frequency,
        }
    }

    #[inline]
    pub fn eval(&self, x: &[T]) -> T {
        if self.amplitude == T::zero() {
            self.base
        } else {
            self.base + self.amplitude * (self.frequency * x[0]).sin()
        }
    }

    pub fn inf(&self) -> T {
        self.base - self.amplitude.abs()
    }

    pub fn sup(&self) -> T {
        self.base + self.amplitude.abs()
    }

    pub fn sup_abs(&self) -> T {
        self.base.abs() + self.amplitude.abs()
    }

    pub fn lipschitz(&self) -> T {
        (self.amplitude * self.frequency).abs()
    }
}

/// Hamiltonian families with their defining parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub enum HamiltonianFamily<T> {
    Zero,
    /// `c₁(x)|p| + c_m(x)|p|^m`.
    Prototype {
        c1: Coefficient<T>,
        cm: Coefficient<T>,
        m: T,
    },
    /// `c(x)|p|^m + a(x)|p|^l` with `0 < l < m`.
    TwoPower {
        c: Coefficient<T>,
        a: Coefficient<T>,
        m: T,
        l: T,
    },
    /// `c(x) ((|p|²−1)² − 1) / (|p|² + 1)`, a nonconvex member of the
    /// `φ(x,|p|)|p|^m` class with `m = 2`.
    RationalFactor { c: Coefficient<T> },
    /// `sup_α inf_β ⟨S_{αβ} p, p⟩^{m/2}` over finite index sets.
    SupInf {
        matrices: Vec<Vec<SymMatrix<T>>>,
        m: T,
        nu: T,
    },
}

/// Constants of the Lipschitz-type structure conditions:
/// `|H(x,p+q) − H(y,p)| ≤ ω|x−y|(|p|^m+1) + (γ₁ + γ_m(|p|^{m−1}+|q|^{m−1}))|q|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lipschitz<T> {
    pub gamma1: T,
    pub gamma_m: T,
    /// Lipschitz constant of the modulus in `x`.
    pub omega: T,
}

/// Constants of `H(x,p) − σH(x,σ⁻¹p) ≤ (1−σ)(−c̲|p|^m + A)` for `σ ∈ (σ₀, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Convexity<T> {
    pub c_lower: T,
    pub a: T,
    pub sigma0: T,
}

/// Which of `H`, `−H` satisfies the convexity-type condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Convex,
    Concave,
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    LipschitzStructure,
    ShiftModulus,
    ConvexityType,
    Sublinearization,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::LipschitzStructure,
        Condition::ShiftModulus,
        Condition::ConvexityType,
        Condition::Sublinearization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::LipschitzStructure => "lipschitz_structure",
            Condition::ShiftModulus => "shift_modulus",
            Condition::ConvexityType => "convexity_type",
            Condition::Sublinearization => "sublinearization",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Real + Serialize"))]
pub struct HamiltonianH<T> {
    family: HamiltonianFamily<T>,
    negated: bool,
    m: T,
    lipschitz: Option<Lipschitz<T>>,
    convexity: Option<Convexity<T>>,
    orientation: Orientation,
}

/// Builds a library Hamiltonian and derives its structure constants.
///
/// `sigma0` is the lower end of the `σ` range in the convexity condition.
pub fn hamiltonian_library<T: Real>(family: HamiltonianFamily<T>, sigma0: T) -> Result<HamiltonianH<T>> {
    if !(sigma0 > T::zero() && sigma0 < T::one()) {
        return Err(invalid("sigma0", "must lie in (0, 1)"));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let (m, lipschitz, convexity, orientation) = match &family {
        HamiltonianFamily::Zero => (
            two,
            Some(Lipschitz {
                gamma1: T::zero(),
                gamma_m: T::zero(),
                omega: T::zero(),
            }),
            Some(Convexity {
                c_lower: T::zero(),
                a: T::zero(),
                sigma0,
            }),
            Orientation::Convex,
        ),
        HamiltonianFamily::Prototype { c1, cm, m } => {
            let m = *m;
            if !(m >= one && m <= two) {
                return Err(invalid("m", "must lie in [1, 2]"));
            }
            let lip = Lipschitz {
                gamma1: c1.sup_abs(),
                gamma_m: m * cm.sup_abs(),
                omega: c1.lipschitz() + cm.lipschitz(),
            };
            // 1 − σ^{1−m} ≤ −(m−1)(1−σ)
            let (conv, orient) = if m > one && cm.inf() > T::zero() {
                (Some(cm.inf() * (m - one)), Orientation::Convex)
            } else if m > one && cm.sup() < T::zero() {
                (Some(-cm.sup() * (m - one)), Orientation::Concave)
            } else {
                (None, Orientation::Neither)
            };
            let conv = conv.map(|c_lower| Convexity {
                c_lower,
                a: T::zero(),
                sigma0,
            });
            (m, Some(lip), conv, orient)
        }
        HamiltonianFamily::TwoPower { c, a, m, l } => {
            let (m, l) = (*m, *l);
            if !(m > one && m <= two) {
                return Err(invalid("m", "must lie in (1, 2]"));
            }
            if !(l > T::zero() && l < m) {
                return Err(invalid("l", "must lie in (0, m)"));
            }
            if !(c.inf() > T::zero()) {
                return Err(invalid("c", "must be bounded below by a positive constant"));
            }
            // (1−σ)(−c̲(m−1)|p|^m + K|p|^l), then Young: K t^l ≤ e t^m + A.
            let k = a.sup_abs() * (l - one).abs() / sigma0.powf(l);
            let e = c.inf() * (m - one) / two;
            let a_const = if k > T::zero() {
                let t_star = (k * l / (e * m)).powf(one / (m - l));
                k * (one - l / m) * t_star.powf(l)
            } else {
                T::zero()
            };
            // |p|^l is not Lipschitz at 0 when l < 1.
            let lip = (l >= one).then(|| Lipschitz {
                gamma1: two * l * a.sup_abs(),
                gamma_m: m * c.sup_abs() + l * a.sup_abs(),
                omega: c.lipschitz() + a.lipschitz(),
            });
            (
                m,
                lip,
                Some(Convexity {
                    c_lower: e,
                    a: a_const,
                    sigma0,
                }),
                Orientation::Convex,
            )
        }
        HamiltonianFamily::RationalFactor { c } => {
            if !(c.inf() > T::zero()) {
                return Err(invalid("c", "must be bounded below by a positive constant"));
            }
            // g(r) = r² − 3 + 3/(1+r²): |g'(r) − 2r| ≤ 6r/(1+r²)² < 1.95.
            let lip = Lipschitz {
                gamma1: two * c.sup_abs(),
                gamma_m: two * c.sup_abs(),
                omega: c.lipschitz(),
            };
            let conv = Convexity {
                c_lower: c.inf(),
                a: T::lit(6.0) * c.sup_abs(),
                sigma0,
            };
            (two, Some(lip), Some(conv), Orientation::Convex)
        }
        HamiltonianFamily::SupInf { matrices, m, nu } => {
            let (m, nu) = (*m, *nu);
            if !(nu > T::zero()) {
                return Err(invalid("nu", "must be positive"));
            }
            if !(m > one && m <= two) {
                return Err(invalid("m", "must lie in (1, 2]"));
            }
            if matrices.is_empty() || matrices.iter().any(Vec::is_empty) {
                return Err(invalid("matrices", "index sets must be non-empty"));
            }
            let dim = matrices[0][0].dim();
            let mut top = T::zero();
            for s in matrices.iter().flatten() {
                if s.dim() != dim {
                    return Err(invalid("matrices", "dimension mismatch"));
                }
                let ev = s.eigenvalues();
                if ev[0] < nu * (one - T::lit(1e-12)) {
                    return Err(invalid("matrices", "every S must satisfy S ≥ νI"));
                }
                top = top.max(ev[ev.len() - 1]);
            }
            let lip = Lipschitz {
                gamma1: T::zero(),
                gamma_m: m * top.powf(m / two),
                omega: T::zero(),
            };
            let conv = Convexity {
                c_lower: (m - one) * nu.powf(m / two),
                a: T::zero(),
                sigma0,
            };
            (m, Some(lip), Some(conv), Orientation::Convex)
        }
    };
    Ok(HamiltonianH {
        family,
        negated: false,
        m,
        lipschitz,
        convexity,
        orientation,
    })
}

impl<T: Real> HamiltonianH<T> {
    pub fn zero() -> Self {
        hamiltonian_library(HamiltonianFamily::Zero, T::lit(0.5)).expect("zero Hamiltonian is valid")
    }

    /// `c₁|p| + c_m|p|^m` with constant coefficients.
    pub fn prototype(c1: T, cm: T, m: T) -> Result<Self> {
        hamiltonian_library(
            HamiltonianFamily::Prototype {
                c1: Coefficient::constant(c1),
                cm: Coefficient::constant(cm),
                m,
            },
            T::lit(0.5),
        )
    }

    pub fn family(&self) -> &HamiltonianFamily<T> {
        &self.family
    }

    pub fn is_negated(&self) -> bool {
        self.negated
    }

    #[inline]
    pub fn m(&self) -> T {
        self.m
    }

    pub fn lipschitz(&self) -> Option<&Lipschitz<T>> {
        self.lipschitz.as_ref()
    }

    /// Convexity constants for whichever of `H`, `−H` the orientation names.
    pub fn convexity(&self) -> Option<&Convexity<T>> {
        self.convexity.as_ref()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// `−H`. Lipschitz constants are unchanged; the orientation flips.
    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.negated = !self.negated;
        out.orientation = match self.orientation {
            Orientation::Convex => Orientation::Concave,
            Orientation::Concave => Orientation::Convex,
            Orientation::Neither => Orientation::Neither,
        };
        out
    }

    /// Conditions the derived constants are claimed to satisfy.
    pub fn claims(&self) -> Vec<Condition> {
        let mut out = Vec::new();
        if self.lipschitz.is_some() {
            out.push(Condition::LipschitzStructure);
            out.push(Condition::ShiftModulus);
        }
        if self.convexity.is_some() && self.orientation != Orientation::Neither {
            out.push(Condition::ConvexityType);
            if self.lipschitz.is_some() && self.m > T::one() {
                out.push(Condition::Sublinearization);
            }
        }
        out
    }

    /// `γ̃` of the sublinearisation bound.
    pub fn tilde_gamma(&self) -> Result<T> {
        let lip = self.lipschitz.ok_or(Error::MissingConstants("sublinearization"))?;
        let conv = self.convexity.ok_or(Error::MissingConstants("sublinearization"))?;
        tilde_gamma(lip.gamma_m, self.m, conv.c_lower)
    }

    pub fn eval(&self, x: &[T], p: &[T]) -> T {
        let v = self.family_eval(x, p);
        if self.negated {
            -v
        } else {
            v
        }
    }

    fn family_eval(&self, x: &[T], p: &[T]) -> T {
        match &self.family {
            HamiltonianFamily::SupInf { matrices, m, .. } => {
                let e = *m / T::lit(2.0);
                matrices
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|s| s.quadratic_form(p).max(T::zero()).powf(e))
                            .fold(T::infinity(), T::min)
                    })
                    .fold(T::neg_infinity(), T::max)
            }
            _ => {
                let (inc, dec) = self.radial_family(x, norm2(p)).expect("radial family");
                inc + dec
            }
        }
    }

    /// Splits a radial `H(x, r)` into nondecreasing and nonincreasing parts in
    /// `r`. `None` for non-radial families.
    fn radial_family(&self, x: &[T], r: T) -> Option<(T, T)> {
        let zero = T::zero();
        let split = |v: T, increasing: bool| if increasing { (v, zero) } else { (zero, v) };
        let add = |a: (T, T), b: (T, T)| (a.0 + b.0, a.1 + b.1);
        match &self.family {
            HamiltonianFamily::Zero => Some((zero, zero)),
            HamiltonianFamily::Prototype { c1, cm, m } => {
                let (a, b) = (c1.eval(x), cm.eval(x));
                Some(add(split(a * r, a >= zero), split(b * r.powf(*m), b >= zero)))
            }
            HamiltonianFamily::TwoPower { c, a, m, l } => {
                let (cv, av) = (c.eval(x), a.eval(x));
                Some(add(split(cv * r.powf(*m), cv >= zero), split(av * r.powf(*l), av >= zero)))
            }
            HamiltonianFamily::RationalFactor { c } => {
                let cv = c.eval(x);
                let r2 = r * r;
                let three = T::lit(3.0);
                let quad = cv * r2;
                let bump = cv * (three / (T::one() + r2) - three);
                Some(if cv >= zero { (quad, bump) } else { (bump, quad) })
            }
            HamiltonianFamily::SupInf { matrices, m, .. } => {
                // Radial only when every S is a multiple of the identity.
                let mut best = T::neg_infinity();
                for row in matrices {
                    let mut worst = T::infinity();
                    for s in row {
                        let d = s.get(0, 0);
                        let n = s.dim();
                        for i in 0..n {
                            for j in i..n {
                                let expect = if i == j { d } else { zero };
                                if s.get(i, j) != expect {
                                    return None;
                                }
                            }
                        }
                        worst = worst.min(d.powf(*m / T::lit(2.0)));
                    }
                    best = best.max(worst);
                }
                Some((best * r.powf(*m), zero))
            }
        }
    }

    /// Monotone evaluation for upwind schemes: the nondecreasing part of
    /// `H(x, ·)` at `r_up`, the nonincreasing part at `r_down`. Agrees with
    /// `H(x, p)` when both radii equal `|p|`. `None` for non-radial `H`.
    pub fn radial_split(&self, x: &[T], r_up: T, r_down: T) -> Option<T> {
        if self.negated {
            // inc(−H) = −dec(H), dec(−H) = −inc(H)
            let (_, dec) = self.radial_family(x, r_up)?;
            let (inc, _) = self.radial_family(x, r_down)?;
            Some(-dec - inc)
        } else {
            let (inc, _) = self.radial_family(x, r_up)?;
            let (_, dec) = self.radial_family(x, r_down)?;
            Some(inc + dec)
        }
    }

    pub fn is_radial(&self) -> bool {
        let x = [T::zero(); 4];
        self.radial_family(&x, T::one()).is_some()
    }
}

/// Sample layout: `x (n) | y (n) | p (n) | q (n) | σ`.
struct Layout {
    n: usize,
}

impl Layout {
    fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in ["x", "y", "p", "q"] {
            for i in 0..self.n {
                out.push(format!("{name}{i}"));
            }
        }
        out.push("sigma".into());
        out
    }

    fn split<'a, T>(&self, v: &'a [T]) -> (&'a [T], &'a [T], &'a [T], &'a [T], T)
    where
        T: Copy,
    {
        let n = self.n;
        (&v[..n], &v[n..2 * n], &v[2 * n..3 * n], &v[3 * n..4 * n], v[4 * n])
    }
}

fn log_uniform_vector<T: Real>(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng, out: &mut Vec<T>) {
    if rng.gen_range(0..32) == 0 {
        out.extend((0..n).map(|_| T::zero()));
        return;
    }
    let mag = 10f64.powf(rng.gen_range(lo.log10()..hi.log10()));
    let dir: Vec<f64> = loop {
        let v: Vec<f64> = (0..n).map(|_| super::gaussian(rng)).collect();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if nv > 1e-12 {
            break v.into_iter().map(|a| a / nv).collect();
        }
    };
    out.extend(dir.into_iter().map(|d| T::lit(d * mag)));
}

fn sample<T: Real>(n: usize, sigma_lo: f64, sigma_hi: f64, rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut v: Vec<T> = Vec::with_capacity(4 * n + 1);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let shift = 10f64.powf(rng.gen_range(-6.0..0.0));
    let dir: Vec<f64> = (0..n).map(|_| super::gaussian(rng)).collect();
    let nd = dir.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    v.extend(x.iter().map(|&a| T::lit(a)));
    v.extend(x.iter().zip(&dir).map(|(&a, &d)| T::lit(a + shift * d / nd)));
    log_uniform_vector(n, 1e-3, 1e3, rng, &mut v);
    log_uniform_vector(n, 1e-3, 1e3, rng, &mut v);
    // Half the σ draws crowd the upper end, where (1−σ) is tiny.
    let width = sigma_hi - sigma_lo;
    let sigma = if rng.gen_bool(0.5) {
        sigma_lo + width * rng.gen_range(1e-12..1.0)
    } else {
        sigma_hi - width * 10f64.powf(rng.gen_range(-8.0..0.0))
    };
    v.push(T::lit(sigma.clamp(sigma_lo + 1e-15, sigma_hi - 1e-15)));
    v
}

fn shifted<T: Real>(p: &[T], q: &[T]) -> Vec<T> {
    p.iter().zip(q).map(|(&a, &b)| a + b).collect()
}

fn scaled<T: Real>(p: &[T], c: T) -> Vec<T> {
    p.iter().map(|&a| a * c).collect()
}

/// Samples the named structure condition with `H`'s derived constants.
///
/// `p, q` have log-uniform magnitudes in `[10⁻³, 10³]` (plus occasional exact
/// zeros), `x ∈ [−5, 5]ⁿ`, `|x − y|` log-uniform in `[10⁻⁶, 1]` and
/// `σ ∈ (σ₀, 1)`. For a concave orientation the convexity and
/// sublinearisation conditions are checked on `−H`.
pub fn check_hamiltonian<T: Real>(
    h: &HamiltonianH<T>,
    condition: Condition,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<CheckReport<T>> {
    match condition {
        Condition::LipschitzStructure | Condition::ShiftModulus => {
            let lip = h.lipschitz.ok_or(Error::MissingConstants(condition.name()))?;
            let layout = Layout { n: dim };
            let labels = layout.labels();
            let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
            let m = h.m;
            let one = T::one();
            let growth = move |p: &[T], q: &[T]| {
                lip.gamma1 + lip.gamma_m * (norm2(p).powf(m - one) + norm2(q).powf(m - one))
            };
            Ok(sweep(
                condition.name(),
                &labels,
                samples,
                seed,
                |rng| sample(dim, 0.5, 1.0, rng),
                |v| {
                    let (x, y, p, q, _) = layout.split(v);
                    if condition == Condition::LipschitzStructure {
                        let pq: Vec<T> = p.iter().zip(q).map(|(&a, &b)| a - b).collect();
                        growth(p, q) * norm2(&pq) - (h.eval(x, p) - h.eval(x, q)).abs()
                    } else {
                        let pq = shifted(p, q);
                        lip.omega * dist(x, y) * (norm2(p).powf(m) + one) + growth(p, q) * norm2(q)
                            - (h.eval(x, &pq) - h.eval(y, p)).abs()
                    }
                },
            ))
        }
        Condition::ConvexityType => {
            let conv = oriented_convexity(h, condition)?;
            let g = oriented(h);
            let layout = Layout { n: dim };
            let labels = layout.labels();
            let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
            let m = h.m;
            Ok(sweep(
                condition.name(),
                &labels,
                samples,
                seed,
                |rng| sample(dim, conv.sigma0.as_f64(), 1.0, rng),
                |v| {
                    let (x, _, p, _, sigma) = layout.split(v);
                    let lhs = g.eval(x, p) - sigma * g.eval(x, &scaled(p, sigma.recip()));
                    (T::one() - sigma) * (-conv.c_lower * norm2(p).powf(m) + conv.a) - lhs
                },
            ))
        }
        Condition::Sublinearization => {
            let conv = oriented_convexity(h, condition)?;
            check_sublinearization(h, (conv.sigma0, T::one()), dim, samples, seed)
        }
    }
}

fn oriented_convexity<T: Real>(h: &HamiltonianH<T>, condition: Condition) -> Result<Convexity<T>> {
    match (h.convexity, h.orientation) {
        (Some(c), Orientation::Convex | Orientation::Concave) => Ok(c),
        _ => Err(Error::MissingConstants(condition.name())),
    }
}

/// The Hamiltonian that satisfies the convexity-type condition.
fn oriented<T: Real>(h: &HamiltonianH<T>) -> HamiltonianH<T> {
    if h.orientation == Orientation::Concave {
        h.negated()
    } else {
        h.clone()
    }
}

/// Samples `H(x,p+q) − σH(x,σ⁻¹p) ≤ γ̃(1−σ)^{1−m}|q|^m + γ₁|q| + (1−σ)A` for
/// `σ` in the open interval `sigma_range`.
pub fn check_sublinearization<T: Real>(
    h: &HamiltonianH<T>,
    sigma_range: (T, T),
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<CheckReport<T>> {
    let name = Condition::Sublinearization.name();
    let lip = h.lipschitz.ok_or(Error::MissingConstants(name))?;
    let conv = oriented_convexity(h, Condition::Sublinearization)?;
    let (lo, hi) = sigma_range;
    if !(lo >= conv.sigma0 && hi <= T::one() && lo < hi) {
        return Err(invalid("sigma_range", "must be a sub-interval of (σ₀, 1)"));
    }
    let gt = h.tilde_gamma()?;
    let g = oriented(h);
    let layout = Layout { n: dim };
    let labels = layout.labels();
    let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
    let m = h.m;
    let one = T::one();
    Ok(sweep(
        name,
        &labels,
        samples,
        seed,
        |rng| sample(dim, lo.as_f64(), hi.as_f64(), rng),
        |v| {
            let (x, _, p, q, sigma) = layout.split(v);
            let lhs = g.eval(x, &shifted(p, q)) - sigma * g.eval(x, &scaled(p, sigma.recip()));
            let nq = norm2(q);
            gt * (one - sigma).powf(one - m) * nq.powf(m) + lip.gamma1 * nq + (one - sigma) * conv.a - lhs
        },
    ))
}

/// Empirical best constant in `|p+q|^m − |p|^m ≤ C(|p|^{m−1} + |q|^{m−1})|q|`.
///
/// By homogeneity `|q| = 1`; the ratio is maximised over `|p| = t` and the
/// angle between `p` and `q`, first on a grid and then by local refinement.
pub fn empirical_power_difference_constant<T: Real>(m: T) -> Result<T> {
    if !(m > T::zero()) {
        return Err(invalid("m", "must be positive"));
    }
    let one = T::one();
    let ratio = |log_t: T, theta: T| {
        let t = T::lit(10.0).powf(log_t);
        // |p + q|² = t² + 2t cosθ + 1
        let pq = (t * t + T::lit(2.0) * t * theta.cos() + one).max(T::zero()).sqrt();
        (pq.powf(m) - t.powf(m)) / (t.powf(m - one) + one)
    };
    let mut best = (T::neg_infinity(), T::zero(), T::zero());
    let nt = 400;
    let na = 64;
    for i in 0..=nt {
        let lt = T::lit(-4.0 + 8.0 * i as f64 / nt as f64);
        for j in 0..=na {
            let th = T::lit(std::f64::consts::PI * j as f64 / na as f64);
            let r = ratio(lt, th);
            if r > best.0 {
                best = (r, lt, th);
            }
        }
    }
    let (mut step_t, mut step_a) = (T::lit(8.0 / nt as f64), T::lit(std::f64::consts::PI / na as f64));
    for _ in 0..60 {
        let (_, lt, th) = best;
        for (dt, da) in [(step_t, T::zero()), (-step_t, T::zero()), (T::zero(), step_a), (T::zero(), -step_a)] {
            let r = ratio(lt + dt, th + da);
            if r > best.0 {
                best = (r, lt + dt, th + da);
            }
        }
        step_t = step_t * T::lit(0.7);
        step_a = step_a * T::lit(0.7);
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const N: usize = 200_000;

    fn all_claims_pass(h: &HamiltonianH<f64>, dim: usize) {
        for c in h.claims() {
            let rep = check_hamiltonian(h, c, dim, N, 11).unwrap();
            assert!(rep.passed(), "{:?} failed: {rep:?}", c);
        }
    }

    #[test]
    fn quadratic_convexity_example() {
        let h = HamiltonianH::prototype(0.0, 1.0, 2.0).unwrap();
        let conv = h.convexity().unwrap();
        assert_eq!(conv.c_lower, 1.0);
        assert_eq!(conv.a, 0.0);
        let (sigma, p) = (0.5, [1.0, 0.0]);
        let x = [0.0, 0.0];
        let lhs = h.eval(&x, &p) - sigma * h.eval(&x, &[2.0, 0.0]);
        assert_relative_eq!(lhs, -1.0, epsilon = 1e-15);
        let margin = (1.0 - sigma) * (-conv.c_lower + conv.a) - lhs;
        assert_relative_eq!(margin, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_hamiltonian_passes_everything() {
        let h = HamiltonianH::<f64>::zero();
        for c in Condition::ALL {
            let rep = check_hamiltonian(&h, c, 2, 20_000, 1).unwrap();
            assert!(rep.worst_margin >= 0.0, "{c:?}: {rep:?}");
        }
    }

    #[test]
    fn library_values() {
        let h = HamiltonianH::prototype(0.0, 1.0, 2.0).unwrap();
        assert_eq!(h.eval(&[0.3], &[0.0]), 0.0);
        assert_relative_eq!(h.eval(&[0.3], &[1.5]), 2.25);

        let r = hamiltonian_library(
            HamiltonianFamily::RationalFactor {
                c: Coefficient::constant(1.0),
            },
            0.5,
        )
        .unwrap();
        assert_relative_eq!(r.eval(&[0.0, 0.0], &[1.0, 0.0]), -0.5, epsilon = 1e-15);
        assert_eq!(r.eval(&[0.0, 0.0], &[0.0, 0.0]), 0.0);

        let s = hamiltonian_library(
            HamiltonianFamily::SupInf {
                matrices: vec![vec![SymMatrix::scaled_identity(2, 2.0)]],
                m: 2.0,
                nu: 1.0,
            },
            0.5,
        )
        .unwrap();
        assert_relative_eq!(s.eval(&[0.0, 0.0], &[0.6, 0.8]), 2.0, epsilon = 1e-15);
        assert!(s.is_radial());
    }

    #[test]
    fn sup_inf_rejects_nonpositive_nu() {
        let bad = hamiltonian_library(
            HamiltonianFamily::SupInf {
                matrices: vec![vec![SymMatrix::identity(2)]],
                m: 2.0,
                nu: 0.0,
            },
            0.5,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn radial_split_agrees_with_eval() {
        let fams = vec![
            HamiltonianFamily::Prototype {
                c1: Coefficient::constant(-0.7),
                cm: Coefficient::oscillating(1.0, 0.3, 2.0),
                m: 1.5,
            },
            HamiltonianFamily::RationalFactor {
                c: Coefficient::constant(2.0),
            },
            HamiltonianFamily::TwoPower {
                c: Coefficient::constant(1.0),
                a: Coefficient::constant(-1.0),
                m: 2.0,
                l: 1.5,
            },
        ];
        for f in fams {
            let h = hamiltonian_library(f, 0.5).unwrap();
            for h in [h.clone(), h.negated()] {
                for r in [0.0, 0.3, 1.0, 7.0] {
                    let x = [0.4];
                    assert_relative_eq!(h.radial_split(&x, r, r).unwrap(), h.eval(&x, &[r]), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn prototype_family_claims() {
        let h = hamiltonian_library(
            HamiltonianFamily::Prototype {
                c1: Coefficient::oscillating(0.5, 0.5, 1.0),
                cm: Coefficient::oscillating(1.5, 0.5, 3.0),
                m: 1.5,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(h.claims().len(), 4);
        all_claims_pass(&h, 2);
    }

    #[test]
    fn concave_prototype_checks_negation() {
        let h = HamiltonianH::prototype(0.0, -1.0, 2.0).unwrap();
        assert_eq!(h.orientation(), Orientation::Concave);
        all_claims_pass(&h, 2);
        // −H of a convex one is concave and still passes through the flip
        all_claims_pass(&HamiltonianH::prototype(1.0, 2.0, 1.7).unwrap().negated(), 1);
    }

    #[test]
    fn two_power_young_constants() {
        let h = hamiltonian_library(
            HamiltonianFamily::TwoPower {
                c: Coefficient::oscillating(2.0, 0.5, 1.0),
                a: Coefficient::constant(3.0),
                m: 2.0,
                l: 1.5,
            },
            0.5,
        )
        .unwrap();
        let conv = h.convexity().unwrap();
        // K = 3·0.5/0.5^1.5, e = 1.5·1/2; A = K(1 − l/m) t*^l with t* = (K l/(e m))^{1/(m−l)}
        let k = 3.0 * 0.5 / 0.5f64.powf(1.5);
        let e = 0.75;
        let t = (k * 1.5 / (e * 2.0)).powf(2.0);
        assert_relative_eq!(conv.a, k * 0.25 * t.powf(1.5), max_relative = 1e-12);
        all_claims_pass(&h, 2);

        let sub = hamiltonian_library(
            HamiltonianFamily::TwoPower {
                c: Coefficient::constant(1.0),
                a: Coefficient::constant(1.0),
                m: 1.8,
                l: 0.5,
            },
            0.5,
        )
        .unwrap();
        assert_eq!(sub.claims(), vec![Condition::ConvexityType]);
        all_claims_pass(&sub, 2);
    }

    #[test]
    fn rational_and_sup_inf_pass() {
        let r = hamiltonian_library(
            HamiltonianFamily::RationalFactor {
                c: Coefficient::oscillating(1.0, 0.25, 2.0),
            },
            0.5,
        )
        .unwrap();
        all_claims_pass(&r, 2);

        let s1 = SymMatrix::from_rows(&[&[2.0, 0.5], &[0.5, 1.0]]);
        let s2 = SymMatrix::from_rows(&[&[1.0, -0.3], &[-0.3, 3.0]]);
        let s3 = SymMatrix::scaled_identity(2, 1.5);
        let s = hamiltonian_library(
            HamiltonianFamily::SupInf {
                matrices: vec![vec![s1, s2.clone()], vec![s3, s2]],
                m: 1.6,
                nu: 0.5,
            },
            0.5,
        )
        .unwrap();
        assert!(!s.is_radial());
        all_claims_pass(&s, 2);
    }

    #[test]
    fn missing_constants_are_errors() {
        let h = HamiltonianH::prototype(1.0, 0.0, 1.0).unwrap();
        assert!(matches!(
            check_hamiltonian(&h, Condition::ConvexityType, 2, 10, 0),
            Err(Error::MissingConstants(_))
        ));
    }

    #[test]
    fn analytic_power_constant_dominates_empirical() {
        for m in [1.2, 1.5, 2.0] {
            let c = empirical_power_difference_constant(m).unwrap();
            assert!(c <= m + 1e-12, "m = {m}: {c}");
            assert!(c > 0.5 * m);
        }
    }
}
