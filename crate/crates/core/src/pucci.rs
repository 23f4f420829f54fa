//! Pucci extremal operators
//!
//! ```text
//! 𝓜⁺_{a,A}(M) = A Σ λᵢ⁺ − a Σ λᵢ⁻
//! 𝓜⁻_{a,A}(M) = a Σ λᵢ⁺ − A Σ λᵢ⁻
//! ```
//!
//! together with sample-based falsifiers for the structure conditions
//! (uniform ellipticity sandwich, Lipschitz continuity in p, x-Hölder
//! modulus). A passing check is evidence, never a certificate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matrix::SymMatrix;
use crate::problem::{OperatorKind, OperatorSpec};

#[derive(Debug, Error)]
pub enum PucciError {
    #[error("invalid ellipticity constants: need 0 < a <= A, got a={a}, A={big_a}")]
    InvalidEllipticity { a: f64, big_a: f64 },
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &SymMatrix) -> Vec<f64> {
    m.eigenvalues()
}

pub(crate) fn pucci_plus_unchecked(a: f64, big_a: f64, m: &SymMatrix) -> f64 {
    let mut plus = 0.0;
    let mut minus = 0.0;
    for lam in m.eigenvalues() {
        if lam > 0.0 {
            plus += lam;
        } else {
            minus += -lam;
        }
    }
    big_a * plus - a * minus
}

pub(crate) fn pucci_minus_unchecked(a: f64, big_a: f64, m: &SymMatrix) -> f64 {
    -pucci_plus_unchecked(a, big_a, &m.neg())
}

fn check_constants(a: f64, big_a: f64) -> Result<(), PucciError> {
    if a > 0.0 && big_a >= a {
        Ok(())
    } else {
        Err(PucciError::InvalidEllipticity { a, big_a })
    }
}

/// 𝓜⁺_{a,A}(M) = A Σ λᵢ⁺ − a Σ λᵢ⁻.
pub fn pucci_plus(a: f64, big_a: f64, m: &SymMatrix) -> Result<f64, PucciError> {
    check_constants(a, big_a)?;
    Ok(pucci_plus_unchecked(a, big_a, m))
}

/// 𝓜⁻_{a,A}(M) = a Σ λᵢ⁺ − A Σ λᵢ⁻ = −𝓜⁺_{a,A}(−M).
pub fn pucci_minus(a: f64, big_a: f64, m: &SymMatrix) -> Result<f64, PucciError> {
    check_constants(a, big_a)?;
    Ok(pucci_minus_unchecked(a, big_a, m))
}

/// Outcome of a sampled hypothesis check. The witness is the worst sample
/// triple (x, p, M) and is present exactly when some check failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub h1_pass: bool,
    pub h2_pass: bool,
    pub h3_pass: bool,
    pub h4_pass: bool,
    pub worst_violation: f64,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub x: [f64; 2],
    pub p: [f64; 2],
    pub m: SymMatrix,
    pub which: String,
}

impl HypothesisReport {
    fn all_pass() -> Self {
        Self {
            h1_pass: true,
            h2_pass: true,
            h3_pass: true,
            h4_pass: true,
            worst_violation: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, which: &str, violation: f64, x: [f64; 2], p: [f64; 2], m: &SymMatrix) {
        match which {
            "H1" => self.h1_pass = false,
            "H2" => self.h2_pass = false,
            "H3" => self.h3_pass = false,
            "H4" => self.h4_pass = false,
            _ => {}
        }
        if violation > self.worst_violation {
            self.worst_violation = violation;
            self.witness = Some(Witness { x, p, m: *m, which: which.to_string() });
        }
    }
}

/// A sample triple for hypothesis checks.
#[derive(Debug, Clone)]
pub struct SampleTriple {
    pub x: [f64; 2],
    pub p: [f64; 2],
    pub m: SymMatrix,
}

/// Deterministic pseudo-random sample triples with |x| ≤ 1, |p| ≤ 10 and
/// matrix entries of unit scale.
pub fn sample_triples(count: usize, seed: u64) -> Vec<SampleTriple> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
            SampleTriple {
                x: [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                p: [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)],
                m: SymMatrix::new2(
                    scale * rng.gen_range(-1.0..1.0),
                    scale * rng.gen_range(-1.0..1.0),
                    scale * rng.gen_range(-1.0..1.0),
                ),
            }
        })
        .collect()
}

/// Verify the uniform ellipticity sandwich 𝓜⁻(M) ≤ F(x, p, M) ≤ 𝓜⁺(M) at
/// every sample. Violations are reported, not thrown; a failure falsifies
/// the conjunction of F(x,p,0)=0 and the ellipticity condition, so both the
/// h1 and h2 flags carry the outcome.
pub fn check_sandwich(f: &OperatorSpec, samples: &[SampleTriple]) -> HypothesisReport {
    let mut report = HypothesisReport::all_pass();
    for s in samples {
        let v = f.evaluate(&s.x, &s.p, &s.m);
        let tol = 1e-10 * (1.0 + s.m.spectral_radius());
        let lo = pucci_minus_unchecked(f.a, f.big_a, &s.m);
        let hi = pucci_plus_unchecked(f.a, f.big_a, &s.m);
        let excess = (v - hi).max(lo - v);
        if excess > tol {
            report.record("H2", excess, s.x, s.p, &s.m);
            report.h1_pass = false;
        }
    }
    report
}

/// Per-hypothesis sampled falsifier:
///
/// - H1: F(x, p, 0) = 0,
/// - H2: a tr(P) ≤ F(x, p, M+P) − F(x, p, M) ≤ A tr(P) for random P ⪰ 0,
/// - H3: |F(x, p, M) − F(x, q, M)| ≤ lip_p |p − q|,
/// - H4: |F(x, p, M) − F(y, p, M)| ≤ c_F |M| |x − y|^θ_F, |M| the spectral
///   radius.
pub fn check_hypotheses(f: &OperatorSpec, samples: &[SampleTriple]) -> HypothesisReport {
    let mut report = HypothesisReport::all_pass();
    if matches!(f.kind, OperatorKind::PucciPlus | OperatorKind::PucciMinus) {
        // x- and p-independent, positively homogeneous: H1-H4 hold exactly.
        return report;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for s in samples {
        let scale = 1.0 + s.m.spectral_radius();
        let tol = 1e-9 * scale;

        let v0 = f.evaluate(&s.x, &s.p, &SymMatrix::zero(s.m.dim()));
        if v0.abs() > tol {
            report.record("H1", v0.abs(), s.x, s.p, &SymMatrix::zero(s.m.dim()));
        }

        // random P = t v⊗v + s w⊗w with t, s ≥ 0
        let dim = s.m.dim();
        let rv = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let p1 = SymMatrix::outer(&rv(&mut rng)).scaled(rng.gen_range(0.0..2.0));
        let p2 = SymMatrix::outer(&rv(&mut rng)).scaled(rng.gen_range(0.0..2.0));
        let pos = p1.add(&p2);
        let diff = f.evaluate(&s.x, &s.p, &s.m.add(&pos)) - f.evaluate(&s.x, &s.p, &s.m);
        let excess = (diff - f.big_a * pos.trace()).max(f.a * pos.trace() - diff);
        if excess > tol {
            report.record("H2", excess, s.x, s.p, &s.m);
        }

        let q = [s.p[0] + rng.gen_range(-5.0..5.0), s.p[1] + rng.gen_range(-5.0..5.0)];
        let dp = f64::hypot(s.p[0] - q[0], s.p[1] - q[1]);
        let dv = (f.evaluate(&s.x, &s.p, &s.m) - f.evaluate(&s.x, &q, &s.m)).abs();
        if dv > f.lip_p * dp + tol {
            report.record("H3", dv - f.lip_p * dp, s.x, s.p, &s.m);
        }

        let y = [s.x[0] + rng.gen_range(-1.0..1.0), s.x[1] + rng.gen_range(-1.0..1.0)];
        let dx = f64::hypot(s.x[0] - y[0], s.x[1] - y[1]);
        let dv = (f.evaluate(&s.x, &s.p, &s.m) - f.evaluate(&y, &s.p, &s.m)).abs();
        let bound = f.c_f * s.m.spectral_radius() * dx.powf(f.theta_f);
        if dv > bound + tol {
            report.record("H4", dv - bound, s.x, s.p, &s.m);
        }
    }
    report
}
