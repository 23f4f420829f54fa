//! Problem specification: the operator F with its ellipticity data, the
//! zero-order term β, the source f, Dirichlet data, and validation of the
//! standing assumptions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::DomainSpec;
use crate::matrix::SymMatrix;
use crate::pucci;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("invalid ellipticity constants: need 0 < a <= A, got a={a}, A={big_a}")]
    InvalidEllipticity { a: f64, big_a: f64 },
    #[error("invalid gradient exponent: need alpha > -1, got {0}")]
    InvalidAlpha(f64),
    #[error("invalid x-Hölder exponent: need theta_F in (1/2, 1), got {0}")]
    InvalidThetaF(f64),
    #[error("beta is decreasing near t = {at} (beta({at}) = {left} > beta({next}) = {right})")]
    NonMonotoneBeta { at: f64, next: f64, left: f64, right: f64 },
    #[error("beta(0) = {0}, expected 0")]
    BetaNotZeroAtZero(f64),
    #[error("source is not finite at ({0}, {1})")]
    NonFiniteSource(f64, f64),
    #[error("custom operator violates F(x, p, 0) = 0: |F| = {violation} at a sample point")]
    H1Violation { violation: f64 },
    #[error("custom operator declared without an evaluation function")]
    MissingEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    PucciPlus,
    PucciMinus,
    Custom,
}

pub type OperatorFn = Arc<dyn Fn(&[f64], &[f64], &SymMatrix) -> f64 + Send + Sync>;

/// A uniformly elliptic operator F(x, p, M) with ellipticity constants
/// 0 < a ≤ A, gradient exponent α > −1, and the Lipschitz/Hölder moduli of
/// the structure conditions in p and x.
#[derive(Clone)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    /// Lower ellipticity constant a.
    pub a: f64,
    /// Upper ellipticity constant A.
    pub big_a: f64,
    /// Gradient exponent α in |∇u|^α.
    pub alpha: f64,
    /// Lipschitz bound of F in p.
    pub lip_p: f64,
    /// x-Hölder modulus constant.
    pub c_f: f64,
    /// x-Hölder exponent, in (1/2, 1).
    pub theta_f: f64,
    /// Declared positive 1-homogeneity F(x, tp, tM) = t F(x, p, M).
    pub homogeneous: bool,
    pub eval: Option<OperatorFn>,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("kind", &self.kind)
            .field("a", &self.a)
            .field("big_a", &self.big_a)
            .field("alpha", &self.alpha)
            .field("lip_p", &self.lip_p)
            .field("c_f", &self.c_f)
            .field("theta_f", &self.theta_f)
            .field("homogeneous", &self.homogeneous)
            .finish()
    }
}

impl OperatorSpec {
    pub fn pucci_plus(a: f64, big_a: f64, alpha: f64) -> Result<Self, ProblemError> {
        Self::pucci(OperatorKind::PucciPlus, a, big_a, alpha)
    }

    pub fn pucci_minus(a: f64, big_a: f64, alpha: f64) -> Result<Self, ProblemError> {
        Self::pucci(OperatorKind::PucciMinus, a, big_a, alpha)
    }

    fn pucci(kind: OperatorKind, a: f64, big_a: f64, alpha: f64) -> Result<Self, ProblemError> {
        let spec = Self {
            kind,
            a,
            big_a,
            alpha,
            lip_p: 0.0,
            c_f: 0.0,
            theta_f: 0.75,
            homogeneous: true,
            eval: None,
        };
        spec.check_constants()?;
        Ok(spec)
    }

    /// An operator given by an arbitrary evaluation function; hypothesis
    /// metadata defaults to lip_p = 0, c_F = 0, θ_F = 0.75 and can be
    /// adjusted with the builder methods.
    pub fn custom(a: f64, big_a: f64, alpha: f64, eval: OperatorFn) -> Self {
        Self {
            kind: OperatorKind::Custom,
            a,
            big_a,
            alpha,
            lip_p: 0.0,
            c_f: 0.0,
            theta_f: 0.75,
            homogeneous: false,
            eval: Some(eval),
        }
    }

    pub fn with_lipschitz(mut self, lip_p: f64) -> Self {
        self.lip_p = lip_p;
        self
    }

    pub fn with_x_modulus(mut self, c_f: f64, theta_f: f64) -> Self {
        self.c_f = c_f;
        self.theta_f = theta_f;
        self
    }

    pub fn with_homogeneous(mut self, homogeneous: bool) -> Self {
        self.homogeneous = homogeneous;
        self
    }

    pub fn check_constants(&self) -> Result<(), ProblemError> {
        if !(self.a > 0.0 && self.big_a >= self.a) {
            return Err(ProblemError::InvalidEllipticity { a: self.a, big_a: self.big_a });
        }
        if !(self.alpha > -1.0) {
            return Err(ProblemError::InvalidAlpha(self.alpha));
        }
        if !(self.theta_f > 0.5 && self.theta_f < 1.0) {
            return Err(ProblemError::InvalidThetaF(self.theta_f));
        }
        Ok(())
    }

    /// Evaluate F(x, p, M).
    pub fn evaluate(&self, x: &[f64], p: &[f64], m: &SymMatrix) -> f64 {
        match self.kind {
            OperatorKind::PucciPlus => pucci::pucci_plus_unchecked(self.a, self.big_a, m),
            OperatorKind::PucciMinus => pucci::pucci_minus_unchecked(self.a, self.big_a, m),
            OperatorKind::Custom => {
                let f = self.eval.as_ref().expect("custom operator without eval");
                f(x, p, m)
            }
        }
    }
}

/// Zero-order term β: nondecreasing, continuous, β(0) = 0. The strictness
/// tag gates which comparison-test mode is meaningful.
#[derive(Clone)]
pub enum BetaSpec {
    Zero,
    /// β(t) = c t with c > 0.
    Linear { coeff: f64 },
    /// β(t) = c sign(t) |t|^p with c > 0, p > 0.
    Power { coeff: f64, exponent: f64 },
    /// β(t) = e^t − 1.
    Exp,
    /// β(t) = |t|^α t / n, the vanishing zero-order term of the existence
    /// sequence for equations without zero-order terms.
    VanishingZeroOrder { alpha: f64, n: f64 },
    /// Piecewise-linear interpolation of sorted (t, β(t)) pairs; extended by
    /// the boundary slopes.
    Table { points: Vec<(f64, f64)> },
    Custom { f: Arc<dyn Fn(f64) -> f64 + Send + Sync>, strictly_increasing: bool },
}

impl fmt::Debug for BetaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BetaSpec::Zero => write!(f, "BetaSpec::Zero"),
            BetaSpec::Linear { coeff } => write!(f, "BetaSpec::Linear({coeff})"),
            BetaSpec::Power { coeff, exponent } => write!(f, "BetaSpec::Power({coeff}, {exponent})"),
            BetaSpec::Exp => write!(f, "BetaSpec::Exp"),
            BetaSpec::VanishingZeroOrder { alpha, n } => {
                write!(f, "BetaSpec::VanishingZeroOrder(alpha={alpha}, n={n})")
            }
            BetaSpec::Table { points } => write!(f, "BetaSpec::Table({} points)", points.len()),
            BetaSpec::Custom { strictly_increasing, .. } => {
                write!(f, "BetaSpec::Custom(strict={strictly_increasing})")
            }
        }
    }
}

impl BetaSpec {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            BetaSpec::Zero => 0.0,
            BetaSpec::Linear { coeff } => coeff * t,
            BetaSpec::Power { coeff, exponent } => coeff * t.signum() * t.abs().powf(*exponent),
            BetaSpec::Exp => t.exp_m1(),
            BetaSpec::VanishingZeroOrder { alpha, n } => t.abs().powf(*alpha) * t / n,
            BetaSpec::Table { points } => {
                if points.is_empty() {
                    return 0.0;
                }
                match points.iter().position(|&(s, _)| s >= t) {
                    Some(0) => {
                        let (s0, v0) = points[0];
                        let slope = if points.len() > 1 {
                            let (s1, v1) = points[1];
                            (v1 - v0) / (s1 - s0)
                        } else {
                            0.0
                        };
                        v0 + slope * (t - s0)
                    }
                    Some(i) => {
                        let (s0, v0) = points[i - 1];
                        let (s1, v1) = points[i];
                        v0 + (v1 - v0) * (t - s0) / (s1 - s0)
                    }
                    None => {
                        let n = points.len();
                        let (s1, v1) = points[n - 1];
                        let slope = if n > 1 {
                            let (s0, v0) = points[n - 2];
                            (v1 - v0) / (s1 - s0)
                        } else {
                            0.0
                        };
                        v1 + slope * (t - s1)
                    }
                }
            }
            BetaSpec::Custom { f, .. } => f(t),
        }
    }

    pub fn strictly_increasing(&self) -> bool {
        match self {
            BetaSpec::Zero => false,
            BetaSpec::Linear { coeff } => *coeff > 0.0,
            BetaSpec::Power { coeff, exponent } => *coeff > 0.0 && *exponent > 0.0,
            BetaSpec::Exp => true,
            BetaSpec::VanishingZeroOrder { alpha, n } => *alpha > -1.0 && *n > 0.0,
            BetaSpec::Table { points } => points.windows(2).all(|w| w[1].1 > w[0].1),
            BetaSpec::Custom { strictly_increasing, .. } => *strictly_increasing,
        }
    }

    /// Symmetric secant slope near t, used for local time step bounds.
    pub fn secant_slope(&self, t: f64) -> f64 {
        let s = 1e-4 * (1.0 + t.abs());
        (self.eval(t + s) - self.eval(t - s)) / (2.0 * s)
    }
}

/// Source field f on the domain.
#[derive(Clone)]
pub enum SourceSpec {
    Constant(f64),
    /// amp · exp(−|x − center|² / width²)
    Gaussian { amp: f64, center: [f64; 2], width: f64 },
    /// offset + g·x
    Ramp { gradient: [f64; 2], offset: f64 },
    Custom(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceSpec::Constant(c) => write!(f, "SourceSpec::Constant({c})"),
            SourceSpec::Gaussian { amp, center, width } => {
                write!(f, "SourceSpec::Gaussian(amp={amp}, center={center:?}, width={width})")
            }
            SourceSpec::Ramp { gradient, offset } => {
                write!(f, "SourceSpec::Ramp(gradient={gradient:?}, offset={offset})")
            }
            SourceSpec::Custom(_) => write!(f, "SourceSpec::Custom"),
        }
    }
}

impl SourceSpec {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            SourceSpec::Constant(c) => *c,
            SourceSpec::Gaussian { amp, center, width } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                amp * (-(dx * dx + dy * dy) / (width * width)).exp()
            }
            SourceSpec::Ramp { gradient, offset } => offset + gradient[0] * x[0] + gradient[1] * x[1],
            SourceSpec::Custom(f) => f(x),
        }
    }
}

/// Dirichlet data on 𝒟, evaluated at boundary points. Defaults to zero.
#[derive(Clone)]
pub enum DirichletSpec {
    Zero,
    Constant(f64),
    /// sin(θ/2) on the outer arc of a disk-sector family domain, zero on the
    /// rays: the boundary trace of the separated-variables corner solution
    /// r^(1/2) sin(θ/2).
    ZarembaArc,
    Custom(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl fmt::Debug for DirichletSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirichletSpec::Zero => write!(f, "DirichletSpec::Zero"),
            DirichletSpec::Constant(c) => write!(f, "DirichletSpec::Constant({c})"),
            DirichletSpec::ZarembaArc => write!(f, "DirichletSpec::ZarembaArc"),
            DirichletSpec::Custom(_) => write!(f, "DirichletSpec::Custom"),
        }
    }
}

impl DirichletSpec {
    pub fn eval(&self, domain: &DomainSpec, x: [f64; 2]) -> f64 {
        match self {
            DirichletSpec::Zero => 0.0,
            DirichletSpec::Constant(c) => *c,
            DirichletSpec::ZarembaArc => {
                use crate::geometry::Shape;
                let radius = match &domain.shape {
                    Shape::Disk { radius }
                    | Shape::HalfDisk { radius }
                    | Shape::DiskSector { radius, .. } => *radius,
                    Shape::Rectangle { .. } => return 0.0,
                };
                let r = f64::hypot(x[0], x[1]);
                if (r - radius).abs() <= 1e-6 * radius.max(1.0) {
                    let th = crate::geometry::polar_angle(x[0], x[1]).unwrap_or(0.0);
                    (0.5 * th).sin()
                } else {
                    0.0
                }
            }
            DirichletSpec::Custom(f) => f(x),
        }
    }
}

/// The full mixed boundary value problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub domain: DomainSpec,
    pub operator: OperatorSpec,
    pub beta: BetaSpec,
    pub source: SourceSpec,
    pub dirichlet: DirichletSpec,
}

/// Which standing assumptions were checked, and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckOutcome {
    /// Holds by construction for the built-in Pucci kinds.
    Analytic,
    SampleVerified,
    SampleFalsified,
    NotChecked,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationNotes {
    pub h1: CheckOutcome,
    pub h2: CheckOutcome,
    pub h3: CheckOutcome,
    pub h4: CheckOutcome,
    pub beta_sampled_points: usize,
}

/// Validate a problem specification: ellipticity and exponent ranges, β
/// monotone with β(0) = 0 on a sampled lattice, finite source, and, for
/// custom operators, a sampled F(x, p, 0) = 0 check. Returns the spec
/// unchanged together with a record of what was verified. Idempotent.
pub fn validate_problem(spec: ProblemSpec) -> Result<(ProblemSpec, ValidationNotes), ProblemError> {
    spec.operator.check_constants()?;
    if spec.operator.kind == OperatorKind::Custom && spec.operator.eval.is_none() {
        return Err(ProblemError::MissingEval);
    }

    let b0 = spec.beta.eval(0.0);
    if b0.abs() > 1e-12 {
        return Err(ProblemError::BetaNotZeroAtZero(b0));
    }
    let beta_samples = 129;
    let mut prev_t = -8.0;
    let mut prev_v = spec.beta.eval(prev_t);
    for k in 1..beta_samples {
        let t = -8.0 + 16.0 * k as f64 / (beta_samples - 1) as f64;
        let v = spec.beta.eval(t);
        if v < prev_v - 1e-12 * (1.0 + prev_v.abs()) {
            return Err(ProblemError::NonMonotoneBeta { at: prev_t, next: t, left: prev_v, right: v });
        }
        prev_t = t;
        prev_v = v;
    }

    let (lo, hi) = spec.domain.bbox();
    for i in 0..17 {
        for j in 0..17 {
            let x = [
                lo[0] + (hi[0] - lo[0]) * i as f64 / 16.0,
                lo[1] + (hi[1] - lo[1]) * j as f64 / 16.0,
            ];
            let v = spec.source.eval(x);
            if !v.is_finite() {
                return Err(ProblemError::NonFiniteSource(x[0], x[1]));
            }
        }
    }

    let notes = match spec.operator.kind {
        OperatorKind::PucciPlus | OperatorKind::PucciMinus => ValidationNotes {
            h1: CheckOutcome::Analytic,
            h2: CheckOutcome::Analytic,
            h3: CheckOutcome::Analytic,
            h4: CheckOutcome::Analytic,
            beta_sampled_points: beta_samples,
        },
        OperatorKind::Custom => {
            let report = pucci::check_hypotheses(&spec.operator, &pucci::sample_triples(256, 42));
            if !report.h1_pass {
                return Err(ProblemError::H1Violation { violation: report.worst_violation });
            }
            let out = |pass: bool| {
                if pass {
                    CheckOutcome::SampleVerified
                } else {
                    CheckOutcome::SampleFalsified
                }
            };
            ValidationNotes {
                h1: out(report.h1_pass),
                h2: out(report.h2_pass),
                h3: out(report.h3_pass),
                h4: out(report.h4_pass),
                beta_sampled_points: beta_samples,
            }
        }
    };

    Ok((spec, notes))
}
