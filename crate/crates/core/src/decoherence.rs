//! Decoherence functional, consistency predicates, and the probability
//! measures they induce on families of histories.
//!
//! The central quantity is the sesquilinear weight
//! `d(u, v) = tr(C(u) rho C(v)^dagger)` built from class operators. Weak
//! consistency asks for vanishing real parts of off-diagonal weights, medium
//! consistency for vanishing off-diagonal weights outright; a family passing
//! the weak check carries the normalized diagonal as a probability measure.

use crate::effects::DensityState;
use crate::histories::{class_operator, disjoint_pointwise, EvolutionContext, HomogeneousHistory};
use crate::numlin::CMatrix;
use crate::{Complex64, Error, Result};

/// Which off-diagonal condition a consistency check enforces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConsistencyMode {
    /// `Re d(u, v) = 0` for distinct members.
    Weak,
    /// `d(u, v) = 0` for distinct members.
    Medium,
}

impl std::fmt::Display for ConsistencyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConsistencyMode::Weak => write!(f, "weak"),
            ConsistencyMode::Medium => write!(f, "medium"),
        }
    }
}

/// Gram matrix of decoherence weights over an ordered family of histories,
/// together with the data that produced it.
#[derive(Clone, Debug)]
pub struct DecoherenceMatrix {
    family: Vec<HomogeneousHistory>,
    gram: Vec<Complex64>,
    context: EvolutionContext,
    state: DensityState,
}

impl DecoherenceMatrix {
    pub fn len(&self) -> usize {
        self.family.len()
    }

    pub fn is_empty(&self) -> bool {
        self.family.is_empty()
    }

    pub fn family(&self) -> &[HomogeneousHistory] {
        &self.family
    }

    pub fn gram(&self, i: usize, j: usize) -> Complex64 {
        self.gram[i * self.family.len() + j]
    }

    pub fn context(&self) -> &EvolutionContext {
        &self.context
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }
}

/// Decoherence weight `tr(C(u) rho C(v)^dagger)`.
pub fn d_weight(
    rho: &DensityState,
    u: &HomogeneousHistory,
    v: &HomogeneousHistory,
    ctx: &EvolutionContext,
) -> Result<Complex64> {
    if rho.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: ctx.dim(),
        });
    }
    let cu = class_operator(u, ctx)?;
    let cv = class_operator(v, ctx)?;
    Ok(weight_from_class_operators(rho, &cu, &cv))
}

fn weight_from_class_operators(rho: &DensityState, cu: &CMatrix, cv: &CMatrix) -> Complex64 {
    cu.matmul(rho.op()).matmul(&cv.adjoint()).trace()
}

/// Batched decoherence weights: `gram[i][j] = d(rho, family[i], family[j])`.
/// Class operators are computed once per member. Hermiticity and diagonal
/// positivity are theorems for this functional, so violations beyond the
/// functional tolerance abort rather than propagate.
pub fn d_matrix(
    rho: &DensityState,
    family: &[HomogeneousHistory],
    ctx: &EvolutionContext,
) -> Result<DecoherenceMatrix> {
    if rho.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: ctx.dim(),
        });
    }
    let n = family.len();
    let mut class_ops = Vec::with_capacity(n);
    for u in family {
        class_ops.push(class_operator(u, ctx)?);
    }
    let tol = ctx.tol();
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..=i {
            let w = weight_from_class_operators(rho, &class_ops[i], &class_ops[j]);
            gram[i * n + j] = w;
            gram[j * n + i] = w.conj();
        }
    }
    for i in 0..n {
        let d = gram[i * n + i];
        if d.im.abs() > tol.func || d.re < -tol.func {
            return Err(Error::Internal(format!(
                "diagonal decoherence weight {d} at index {i} violates positivity"
            )));
        }
        if d.re < 0.0 {
            gram[i * n + i] = Complex64::new(0.0, 0.0);
        } else {
            gram[i * n + i] = Complex64::new(d.re, 0.0);
        }
    }
    Ok(DecoherenceMatrix {
        family: family.to_vec(),
        gram,
        context: ctx.clone(),
        state: rho.clone(),
    })
}

/// Outcome of a consistency check: every flagged pair with its residual.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub mode: ConsistencyMode,
    pub tolerance: f64,
    /// `(i, j, residual)` for each off-diagonal pair exceeding the tolerance.
    pub violations: Vec<(usize, usize, f64)>,
    pub passed: bool,
}

impl ConsistencyReport {
    pub fn worst_residual(&self) -> f64 {
        self.violations
            .iter()
            .map(|&(_, _, r)| r)
            .fold(0.0, f64::max)
    }
}

/// Checks off-diagonal decoherence weights against the mode's condition.
/// With `disjoint_only`, only pointwise-disjoint pairs are examined (the
/// family must then consist of projector histories).
pub fn consistency_check(
    dm: &DecoherenceMatrix,
    mode: ConsistencyMode,
    tolerance: f64,
    disjoint_only: bool,
) -> Result<ConsistencyReport> {
    let n = dm.len();
    let tol = dm.context().tol();
    let mut violations = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if disjoint_only
                && !disjoint_pointwise(&dm.family()[i], &dm.family()[j], tol)?
            {
                continue;
            }
            let g = dm.gram(i, j);
            let residual = match mode {
                ConsistencyMode::Weak => g.re.abs(),
                ConsistencyMode::Medium => g.norm(),
            };
            if residual > tolerance {
                violations.push((i, j, residual));
            }
        }
    }
    Ok(ConsistencyReport {
        mode,
        tolerance,
        passed: violations.is_empty(),
        violations,
    })
}

/// Weak-consistency policy used by `probability_measure`: families made
/// entirely of projector histories are checked over pointwise-disjoint pairs
/// only (matching the quantification of the underlying theorem); families
/// with genuine effect entries have no pointwise disjointness, so every pair
/// is checked.
fn measure_precondition(dm: &DecoherenceMatrix, tolerance: f64) -> Result<ConsistencyReport> {
    let tol = dm.context().tol();
    let all_projector = dm
        .family()
        .iter()
        .all(|h| h.is_projector_history(tol));
    consistency_check(dm, ConsistencyMode::Weak, tolerance, all_projector)
}

/// Normalized diagonal of the gram matrix: `p_i = d(u_i, u_i) / d(1, 1)`
/// with `family[unit_index]` playing the unit. Requires weak consistency at
/// `consistency_tol` and a nonvanishing unit weight.
pub fn probability_measure(
    dm: &DecoherenceMatrix,
    unit_index: usize,
    consistency_tol: f64,
) -> Result<Vec<f64>> {
    if unit_index >= dm.len() {
        return Err(Error::Invalid(format!(
            "unit index {unit_index} out of range for family of {}",
            dm.len()
        )));
    }
    let report = measure_precondition(dm, consistency_tol)?;
    if !report.passed {
        return Err(Error::NotConsistent {
            mode: report.mode.to_string(),
            tolerance: report.tolerance,
            violations: report.violations.len(),
            worst: report.worst_residual(),
        });
    }
    let unit_weight = dm.gram(unit_index, unit_index).re;
    if unit_weight <= dm.context().tol().func {
        return Err(Error::NullUnit {
            weight: unit_weight,
        });
    }
    Ok((0..dm.len())
        .map(|i| (dm.gram(i, i).re / unit_weight).clamp(0.0, 1.0))
        .collect())
}

/// Residual of the diagonal sum rule on two elements of one Boolean history
/// algebra: `|d(h or k) + d(h and k) - d(h) - d(k)|`, evaluated in the
/// supplied state. Vanishes within tolerance on preconsistent algebras; for
/// disjoint interfering pairs it equals twice the absolute real part of the
/// cross weight.
pub fn sum_rule_check(
    rho: &DensityState,
    h: &crate::logic::Element,
    k: &crate::logic::Element,
    alg: &crate::logic::BooleanHistoryAlgebra,
) -> Result<f64> {
    if rho.dim() != alg.ctx().dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: alg.ctx().dim(),
        });
    }
    let diag = |e: &crate::logic::Element| -> Result<Complex64> {
        let c = alg.element_class_operator(e)?;
        Ok(weight_from_class_operators(rho, &c, &c))
    };
    let lhs = diag(&alg.join(h, k))? + diag(&alg.meet(h, k))?;
    let rhs = diag(h)? + diag(k)?;
    Ok((lhs - rhs).norm())
}
