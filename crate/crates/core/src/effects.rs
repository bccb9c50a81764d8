//! Effect operators, density states, POVMs, and the alpha-parameterized
//! partial-sum structures that make the effects a difference poset.
//!
//! The partial sum at parameter alpha is `A (+)_a B = (A^{1/a} + B^{1/a})^a`,
//! defined exactly when the root sum stays below the identity. alpha = 1 is
//! the ordinary effect sum, alpha = 2 the square-root sum. The partial order
//! underlying the alpha structure is `A <= B iff A^{1/a} <= B^{1/a}`, which
//! is the order generated by the partial sum itself.

use crate::numlin::{hermitian_eig, op_leq, order_defect, pow_psd, CMatrix};
use crate::{Complex64, Error, Rational, Result, Tolerances};

/// Positive operator between 0 and the identity.
///
/// Construction validates hermiticity and the two operator inequalities;
/// eigenvalues within `tol.psd` outside `[0, 1]` are clamped and the operator
/// rebuilt from the clamped spectrum, so downstream functional calculus never
/// sees drift.
#[derive(Clone, Debug)]
pub struct Effect {
    op: CMatrix,
}

impl Effect {
    pub fn new(op: CMatrix, tol: &Tolerances) -> Result<Self> {
        let residual = op.hermiticity_residual();
        if residual > tol.lin {
            return Err(Error::NotHermitian { residual });
        }
        let spec = hermitian_eig(&op, tol)?;
        for &v in &spec.eigenvalues {
            if v < -tol.psd || v > 1.0 + tol.psd {
                return Err(Error::NotEffect { eigenvalue: v });
            }
        }
        let clamped = spec
            .eigenvalues
            .iter()
            .any(|&v| !(0.0..=1.0).contains(&v));
        let op = if clamped {
            spec.map(|v| v.clamp(0.0, 1.0))
        } else {
            op
        };
        Ok(Effect { op })
    }

    pub fn identity(dim: usize) -> Self {
        Effect {
            op: CMatrix::identity(dim),
        }
    }

    pub fn zero(dim: usize) -> Self {
        Effect {
            op: CMatrix::zeros(dim),
        }
    }

    /// Scalar effect `c * identity` for `c` in `[0, 1]`.
    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::NotEffect { eigenvalue: c });
        }
        Ok(Effect {
            op: CMatrix::identity(dim).scale(Complex64::new(c, 0.0)),
        })
    }

    /// Rank-one projector onto the line spanned by `v` (normalized here).
    pub fn rank_one_projector(v: &[Complex64]) -> Result<Self> {
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(Error::Invalid("projector vector must be nonzero".into()));
        }
        let scale = 1.0 / norm2.sqrt();
        let unit: Vec<Complex64> = v.iter().map(|z| z * scale).collect();
        Ok(Effect {
            op: CMatrix::outer(&unit)?,
        })
    }

    pub fn op(&self) -> &CMatrix {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// Square root via functional calculus.
    pub fn sqrt(&self, tol: &Tolerances) -> CMatrix {
        pow_psd(&self.op, Rational::new(1, 2), tol).expect("effect is PSD by construction")
    }

    /// `op^{1/alpha}`, the root entering the alpha partial sum.
    pub fn root(&self, alpha: &AlphaParam, tol: &Tolerances) -> CMatrix {
        pow_psd(&self.op, alpha.ratio().recip(), tol).expect("effect is PSD by construction")
    }

    pub fn complement(&self) -> Effect {
        let one = CMatrix::identity(self.dim());
        Effect {
            op: one.sub(&self.op),
        }
    }

    pub fn is_projector(&self, tol: &Tolerances) -> bool {
        self.op.matmul(&self.op).max_abs_diff(&self.op) <= tol.func
    }

    pub fn is_zero(&self, tol: &Tolerances) -> bool {
        self.op.max_abs() <= tol.lin
    }

    pub fn is_identity(&self, tol: &Tolerances) -> bool {
        self.op.max_abs_diff(&CMatrix::identity(self.dim())) <= tol.lin
    }
}

/// Density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Debug)]
pub struct DensityState {
    op: CMatrix,
}

impl DensityState {
    pub fn new(op: CMatrix, tol: &Tolerances) -> Result<Self> {
        let residual = op.hermiticity_residual();
        if residual > tol.lin {
            return Err(Error::NotHermitian { residual });
        }
        let spec = hermitian_eig(&op, tol)?;
        let min = spec.eigenvalues.first().copied().unwrap_or(0.0);
        if min < -tol.psd {
            return Err(Error::NotState {
                reason: format!("negative eigenvalue {min:.3e}"),
            });
        }
        let tr = op.trace();
        if (tr.re - 1.0).abs() > tol.lin || tr.im.abs() > tol.lin {
            return Err(Error::NotState {
                reason: format!("trace {tr} differs from 1"),
            });
        }
        Ok(DensityState { op })
    }

    /// Pure state `|v><v|` with `v` normalized here.
    pub fn pure(v: &[Complex64]) -> Result<Self> {
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if norm2 <= 0.0 || !norm2.is_finite() {
            return Err(Error::Invalid("state vector must be nonzero".into()));
        }
        let scale = 1.0 / norm2.sqrt();
        let unit: Vec<Complex64> = v.iter().map(|z| z * scale).collect();
        Ok(DensityState {
            op: CMatrix::outer(&unit)?,
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityState {
            op: CMatrix::identity(dim).scale(Complex64::new(1.0 / dim.max(1) as f64, 0.0)),
        }
    }

    pub fn op(&self) -> &CMatrix {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

/// Labeled family of effects summing to the identity.
#[derive(Clone, Debug)]
pub struct Povm {
    outcomes: Vec<(String, Effect)>,
}

impl Povm {
    pub fn new(outcomes: Vec<(String, Effect)>, tol: &Tolerances) -> Result<Self> {
        let Some(first) = outcomes.first() else {
            return Err(Error::Invalid("a POVM needs at least one outcome".into()));
        };
        let dim = first.1.dim();
        let mut sum = CMatrix::zeros(dim);
        for (_, e) in &outcomes {
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: e.dim(),
                });
            }
            sum = sum.add(e.op());
        }
        let residual = sum.max_abs_diff(&CMatrix::identity(dim));
        if residual > tol.lin {
            return Err(Error::Invalid(format!(
                "POVM outcomes sum to identity only within {residual:.3e}"
            )));
        }
        Ok(Povm { outcomes })
    }

    pub fn outcomes(&self) -> &[(String, Effect)] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.outcomes[0].1.dim()
    }
}

/// Positive rational scale parameter for the alpha partial sum. Numerator and
/// denominator are kept small because fractional powers are evaluated
/// spectrally and large exponents have no modeling use here.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AlphaParam {
    ratio: Rational,
}

const ALPHA_LIMIT: i64 = 12;

impl AlphaParam {
    pub fn new(num: i64, den: i64) -> Result<Self> {
        if num <= 0 || den <= 0 {
            return Err(Error::Invalid(format!(
                "alpha must be positive, got {num}/{den}"
            )));
        }
        let ratio = Rational::new(num, den);
        if *ratio.numer() > ALPHA_LIMIT || *ratio.denom() > ALPHA_LIMIT {
            return Err(Error::Invalid(format!(
                "alpha {ratio} outside the supported range (numerator and denominator up to {ALPHA_LIMIT})"
            )));
        }
        Ok(AlphaParam { ratio })
    }

    pub fn one() -> Self {
        AlphaParam {
            ratio: Rational::new(1, 1),
        }
    }

    pub fn two() -> Self {
        AlphaParam {
            ratio: Rational::new(2, 1),
        }
    }

    pub fn ratio(&self) -> Rational {
        self.ratio
    }

    pub fn as_f64(&self) -> f64 {
        *self.ratio.numer() as f64 / *self.ratio.denom() as f64
    }
}

impl std::fmt::Display for AlphaParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if *self.ratio.denom() == 1 {
            write!(f, "{}", self.ratio.numer())
        } else {
            write!(f, "{}/{}", self.ratio.numer(), self.ratio.denom())
        }
    }
}

impl std::str::FromStr for AlphaParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parse_int = |t: &str| -> Result<i64> {
            t.trim()
                .parse::<i64>()
                .map_err(|_| Error::Invalid(format!("cannot parse alpha component {t:?}")))
        };
        match s.split_once('/') {
            Some((n, d)) => AlphaParam::new(parse_int(n)?, parse_int(d)?),
            None => AlphaParam::new(parse_int(s)?, 1),
        }
    }
}

/// Probability of the effect in the state: `Re tr(rho F)`, clamped to [0, 1].
pub fn gleason_prob(rho: &DensityState, f: &Effect, _tol: &Tolerances) -> Result<f64> {
    if rho.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: f.dim(),
        });
    }
    let p = rho.op().matmul(f.op()).trace().re;
    Ok(p.clamp(0.0, 1.0))
}

/// Alpha partial sum `(A^{1/a} + B^{1/a})^a`, defined when the root sum stays
/// below the identity.
pub fn oplus_alpha(a: &Effect, b: &Effect, alpha: &AlphaParam, tol: &Tolerances) -> Result<Effect> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let roots = a.root(alpha, tol).add(&b.root(alpha, tol));
    let excess = order_defect(&roots, &CMatrix::identity(a.dim()), tol)?;
    if excess > tol.psd {
        return Err(Error::NotSummable {
            detail: format!("root sum exceeds the identity by {excess:.3e} at alpha {alpha}"),
        });
    }
    Effect::new(pow_psd(&roots, alpha.ratio(), tol)?, tol)
}

/// Alpha partial difference `(B^{1/a} - A^{1/a})^a`, defined when
/// `A^{1/a} <= B^{1/a}`.
pub fn ominus_alpha(b: &Effect, a: &Effect, alpha: &AlphaParam, tol: &Tolerances) -> Result<Effect> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: b.dim(),
            right: a.dim(),
        });
    }
    let ra = a.root(alpha, tol);
    let rb = b.root(alpha, tol);
    let defect = order_defect(&ra, &rb, tol)?;
    if defect > tol.psd {
        return Err(Error::NotComparable {
            detail: format!("roots violate the order by {defect:.3e} at alpha {alpha}"),
        });
    }
    Effect::new(pow_psd(&rb.sub(&ra), alpha.ratio(), tol)?, tol)
}

/// n-fold alpha sum of one effect: `(n * A^{1/a})^a`.
pub fn nscale_alpha(a: &Effect, n: u32, alpha: &AlphaParam, tol: &Tolerances) -> Result<Effect> {
    let scaled = a
        .root(alpha, tol)
        .scale(Complex64::new(f64::from(n), 0.0));
    let excess = order_defect(&scaled, &CMatrix::identity(a.dim()), tol)?;
    if excess > tol.psd {
        return Err(Error::NotSummable {
            detail: format!("{n}-fold root sum exceeds the identity by {excess:.3e}"),
        });
    }
    Effect::new(pow_psd(&scaled, alpha.ratio(), tol)?, tol)
}

/// Order predicate of the alpha structure: `A^{1/a} <= B^{1/a}`.
pub fn leq_alpha(a: &Effect, b: &Effect, alpha: &AlphaParam, tol: &Tolerances) -> Result<bool> {
    op_leq(&a.root(alpha, tol), &b.root(alpha, tol), tol)
}

/// Outcome of a single axiom evaluation. Order statements report the order
/// defect (most negative eigenvalue overshoot), equality statements the
/// largest entry distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AxiomOutcome {
    Holds { residual: f64 },
    Fails { residual: f64 },
    Vacuous,
}

impl AxiomOutcome {
    fn from_residual(residual: f64, tolerance: f64) -> Self {
        if residual <= tolerance {
            AxiomOutcome::Holds { residual }
        } else {
            AxiomOutcome::Fails { residual }
        }
    }

    pub fn failed(&self) -> bool {
        matches!(self, AxiomOutcome::Fails { .. })
    }

    pub fn residual(&self) -> Option<f64> {
        match self {
            AxiomOutcome::Holds { residual } | AxiomOutcome::Fails { residual } => Some(*residual),
            AxiomOutcome::Vacuous => None,
        }
    }
}

/// Evaluation of the four difference-poset axioms on one effect triple.
#[derive(Clone, Debug)]
pub struct DPosetAxiomReport {
    pub alpha: AlphaParam,
    /// Difference defined iff the order holds; when defined, the difference
    /// reconstructs: `A (+)_a (B (-)_a A) = B`.
    pub defined_iff_leq: AxiomOutcome,
    /// `B (-)_a A <= B` in the alpha order.
    pub difference_below: AxiomOutcome,
    /// `B (-)_a (B (-)_a A) = A`.
    pub double_difference: AxiomOutcome,
    /// For chains `A <= B <= C`: `C (-)_a B <= C (-)_a A`.
    pub chain_reversal: AxiomOutcome,
    /// For chains `A <= B <= C`: `(C (-)_a A) (-)_a (C (-)_a B) = B (-)_a A`.
    pub chain_difference: AxiomOutcome,
}

impl DPosetAxiomReport {
    pub fn all_pass(&self) -> bool {
        ![
            &self.defined_iff_leq,
            &self.difference_below,
            &self.double_difference,
            &self.chain_reversal,
            &self.chain_difference,
        ]
        .iter()
        .any(|o| o.failed())
    }

    pub fn worst_residual(&self) -> f64 {
        [
            &self.defined_iff_leq,
            &self.difference_below,
            &self.double_difference,
            &self.chain_reversal,
            &self.chain_difference,
        ]
        .iter()
        .filter_map(|o| o.residual())
        .fold(0.0, f64::max)
    }
}

/// Evaluates the difference-poset axioms on `(A, B, C)` at the given alpha,
/// wherever the partial operations are defined; inapplicable clauses are
/// reported as vacuous.
pub fn dposet_axioms(
    a: &Effect,
    b: &Effect,
    c: &Effect,
    alpha: &AlphaParam,
    tol: &Tolerances,
) -> Result<DPosetAxiomReport> {
    for x in [b, c] {
        if x.dim() != a.dim() {
            return Err(Error::DimensionMismatch {
                left: a.dim(),
                right: x.dim(),
            });
        }
    }
    let leq_ab = leq_alpha(a, b, alpha, tol)?;
    let diff_ba = ominus_alpha(b, a, alpha, tol).ok();

    let defined_iff_leq = match (&diff_ba, leq_ab) {
        (Some(d), true) => {
            let recon = oplus_alpha(a, d, alpha, tol)
                .map(|s| s.op().max_abs_diff(b.op()))
                .unwrap_or(f64::INFINITY);
            AxiomOutcome::from_residual(recon, tol.func)
        }
        (None, false) => AxiomOutcome::Holds { residual: 0.0 },
        // The two routes disagree: quantify by the order defect of the roots.
        _ => AxiomOutcome::Fails {
            residual: order_defect(&a.root(alpha, tol), &b.root(alpha, tol), tol)?,
        },
    };

    let difference_below = match &diff_ba {
        Some(d) => {
            let defect = order_defect(&d.root(alpha, tol), &b.root(alpha, tol), tol)?;
            AxiomOutcome::from_residual(defect, tol.psd)
        }
        None => AxiomOutcome::Vacuous,
    };

    let double_difference = match &diff_ba {
        Some(d) => match ominus_alpha(b, d, alpha, tol) {
            Ok(dd) => AxiomOutcome::from_residual(dd.op().max_abs_diff(a.op()), tol.func),
            Err(_) => AxiomOutcome::Fails {
                residual: f64::INFINITY,
            },
        },
        None => AxiomOutcome::Vacuous,
    };

    let leq_bc = leq_alpha(b, c, alpha, tol)?;
    let (chain_reversal, chain_difference) = if leq_ab && leq_bc {
        let cb = ominus_alpha(c, b, alpha, tol)?;
        let ca = ominus_alpha(c, a, alpha, tol)?;
        let reversal_defect = order_defect(&cb.root(alpha, tol), &ca.root(alpha, tol), tol)?;
        let reversal = AxiomOutcome::from_residual(reversal_defect, tol.psd);
        let difference = match (ominus_alpha(&ca, &cb, alpha, tol), &diff_ba) {
            (Ok(lhs), Some(rhs)) => {
                AxiomOutcome::from_residual(lhs.op().max_abs_diff(rhs.op()), tol.func)
            }
            _ => AxiomOutcome::Fails {
                residual: f64::INFINITY,
            },
        };
        (reversal, difference)
    } else {
        (AxiomOutcome::Vacuous, AxiomOutcome::Vacuous)
    };

    Ok(DPosetAxiomReport {
        alpha: *alpha,
        defined_iff_leq,
        difference_below,
        double_difference,
        chain_reversal,
        chain_difference,
    })
}

/// True iff the spectrum extends both strictly below and strictly above 1/2.
pub fn is_regular(f: &Effect, tol: &Tolerances) -> bool {
    let spec = hermitian_eig(f.op(), tol).expect("effect is Hermitian by construction");
    let min = spec.eigenvalues.first().copied().unwrap_or(0.0);
    let max = spec.eigenvalues.last().copied().unwrap_or(0.0);
    min < 0.5 - tol.func && max > 0.5 + tol.func
}
