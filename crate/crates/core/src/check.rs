//! Randomised inequality sweeps and their reports.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::scalar::Real;

/// Margins below this are violations (double-precision headroom).
pub const VIOLATION_TOL: f64 = 1e-9;

const CHUNK: usize = 4096;

/// Outcome of a sweep: the minimum over all samples of `bound - quantity`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport<T> {
    pub condition: String,
    pub samples: usize,
    /// Negative means violated. `-∞` when a sample produced NaN.
    pub worst_margin: T,
    /// Named parameters of the sample realising `worst_margin`.
    pub witness: Vec<(String, T)>,
}

impl<T: Real> CheckReport<T> {
    pub fn passed(&self) -> bool {
        self.passed_with(T::lit(VIOLATION_TOL))
    }

    pub fn passed_with(&self, tol: T) -> bool {
        self.worst_margin >= -tol
    }

    pub fn witness_value(&self, name: &str) -> Option<T> {
        self.witness.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    /// Report over an explicit list of `(margin, witness)` pairs.
    pub fn from_margins<I>(condition: impl Into<String>, labels: &[&str], items: I) -> Self
    where
        I: IntoIterator<Item = (T, Vec<T>)>,
    {
        let mut count = 0;
        let mut worst: Option<(T, Vec<T>)> = None;
        for (margin, params) in items {
            count += 1;
            let margin = sanitize(margin);
            if worst.as_ref().map_or(true, |(w, _)| margin < *w) {
                worst = Some((margin, params));
            }
        }
        let (worst_margin, params) = worst.unwrap_or((T::infinity(), Vec::new()));
        Self {
            condition: condition.into(),
            samples: count,
            worst_margin,
            witness: label(labels, &params),
        }
    }
}

fn sanitize<T: Real>(m: T) -> T {
    if m.is_nan() {
        T::neg_infinity()
    } else {
        m
    }
}

fn label<T: Real>(labels: &[&str], params: &[T]) -> Vec<(String, T)> {
    labels
        .iter()
        .zip(params)
        .map(|(k, v)| (k.to_string(), *v))
        .collect()
}

/// Runs `samples` draws of `sampler`, evaluating `margin` on each.
///
/// Samples are generated in fixed-size chunks, chunk `c` from a ChaCha stream
/// `c` of `seed`, so the report is independent of the worker count. Ties on
/// the worst margin resolve to the lowest sample index.
pub fn sweep<T, S, M>(condition: &str, labels: &[&str], samples: usize, seed: u64, sampler: S, margin: M) -> CheckReport<T>
where
    T: Real,
    S: Fn(&mut ChaCha8Rng) -> Vec<T> + Sync,
    M: Fn(&[T]) -> T + Sync,
{
    let chunks = samples.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let start = c * CHUNK;
            let end = (start + CHUNK).min(samples);
            let mut local: Option<(T, usize, Vec<T>)> = None;
            for idx in start..end {
                let params = sampler(&mut rng);
                let m = sanitize(margin(&params));
                if local.as_ref().map_or(true, |(w, _, _)| m < *w) {
                    local = Some((m, idx, params));
                }
            }
            local
        })
        .reduce(
            || None,
            |a, b| match (a, b) {
                (None, x) | (x, None) => x,
                (Some(a), Some(b)) => {
                    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                        Some(b)
                    } else {
                        Some(a)
                    }
                }
            },
        );
    let (worst_margin, params) = match best {
        Some((m, _, p)) => (m, p),
        None => (T::infinity(), Vec::new()),
    };
    CheckReport {
        condition: condition.to_string(),
        samples,
        worst_margin,
        witness: label(labels, &params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sweep_is_reproducible_and_finds_minimum() {
        let run = || {
            sweep::<f64, _, _>(
                "toy",
                &["x"],
                20_000,
                7,
                |rng| vec![rng.gen_range(-1.0..1.0)],
                |p| p[0] * p[0] - 0.25,
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert!(a.worst_margin < -0.2499);
        assert!(!a.passed());
        assert!(a.witness_value("x").unwrap().abs() < 1e-2);
    }

    #[test]
    fn nan_counts_as_violation() {
        let r = CheckReport::<f64>::from_margins("nan", &["i"], vec![(1.0, vec![0.0]), (f64::NAN, vec![1.0])]);
        assert_eq!(r.worst_margin, f64::NEG_INFINITY);
        assert_eq!(r.witness_value("i"), Some(1.0));
    }
}
