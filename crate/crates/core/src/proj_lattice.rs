//! Projector histories as operators on tensor-product spaces: the lattice
//! operations live there, and disjoint complete atom families generate the
//! Boolean algebras that carry probability measures.
//!
//! A projector history over a support embeds as the Kronecker product of its
//! entries (identity padding off its own support). Join and meet are
//! computed spectrally from the sum of the two projectors: the range of
//! `P + Q` is the joined subspace, and its eigenspace at 2 is the meet.

use crate::effects::{Effect, Povm};
use crate::histories::{
    class_operator, disjoint_pointwise, EvolutionContext, HomogeneousHistory, Support,
};
use crate::numlin::{hermitian_eig, kron, CMatrix};
use crate::{Error, Result, Tolerances};

/// Projector on the Kronecker space over a support.
#[derive(Clone, Debug)]
pub struct TensorProjector {
    support: Support,
    op: CMatrix,
}

impl TensorProjector {
    pub fn new(support: Support, op: CMatrix, tol: &Tolerances) -> Result<Self> {
        let hermitian = op.hermiticity_residual();
        if hermitian > tol.func {
            return Err(Error::NotHermitian {
                residual: hermitian,
            });
        }
        let idempotent = op.matmul(&op).max_abs_diff(&op);
        if idempotent > tol.func {
            return Err(Error::Invalid(format!(
                "operator is not idempotent (residual {idempotent:.3e})"
            )));
        }
        Ok(TensorProjector { support, op })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn op(&self) -> &CMatrix {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }
}

fn require_same_frame(p: &TensorProjector, q: &TensorProjector) -> Result<()> {
    if p.support() != q.support() || p.dim() != q.dim() {
        return Err(Error::SupportMismatch {
            detail: format!(
                "operands live on supports {:?} (dim {}) and {:?} (dim {})",
                p.support().times(),
                p.dim(),
                q.support().times(),
                q.dim()
            ),
        });
    }
    Ok(())
}

/// Kronecker embedding of a projector history over a covering support, with
/// identity padding at times the history does not constrain. Factors are
/// ordered by increasing time.
pub fn embed(
    h: &HomogeneousHistory,
    target: &Support,
    tol: &Tolerances,
) -> Result<TensorProjector> {
    if !h.is_projector_history(tol) {
        let time = h
            .entries()
            .find(|(_, e)| !e.is_projector(tol))
            .map(|(t, _)| t)
            .unwrap_or(f64::NAN);
        return Err(Error::NotProjectorHistory { time });
    }
    if !h.support().is_subset_of(target) {
        return Err(Error::SupportMismatch {
            detail: format!(
                "history support {:?} is not contained in target {:?}",
                h.support().times(),
                target.times()
            ),
        });
    }
    let dim = h.dim();
    let total = dim
        .checked_pow(target.len() as u32)
        .filter(|&d| d <= tol.dim_cap)
        .ok_or(Error::DimensionCap {
            dim: usize::MAX,
            cap: tol.dim_cap,
        })?;
    let mut acc = CMatrix::identity(1);
    for &t in target.times() {
        let factor = match h.effect_at(t) {
            Some(e) => e.op().clone(),
            None => CMatrix::identity(dim),
        };
        acc = kron(&acc, &factor);
    }
    debug_assert_eq!(acc.dim(), total.max(1));
    TensorProjector::new(target.clone(), acc, tol)
}

/// Spectral projector of `p + q` onto its eigenvalues above the rank
/// threshold: the projector onto `range(p) + range(q)`.
pub fn proj_join(
    p: &TensorProjector,
    q: &TensorProjector,
    tol: &Tolerances,
) -> Result<TensorProjector> {
    require_same_frame(p, q)?;
    let spec = hermitian_eig(&p.op().add(q.op()), tol)?;
    let op = spec.map(|v| if v > tol.rank { 1.0 } else { 0.0 });
    TensorProjector::new(p.support().clone(), op, tol)
}

/// Spectral projector of `p + q` onto its eigenspace at 2: a vector is in
/// both ranges exactly when the sum acts on it as 2.
pub fn proj_meet(
    p: &TensorProjector,
    q: &TensorProjector,
    tol: &Tolerances,
) -> Result<TensorProjector> {
    require_same_frame(p, q)?;
    let spec = hermitian_eig(&p.op().add(q.op()), tol)?;
    let op = spec.map(|v| if v >= 2.0 - tol.rank { 1.0 } else { 0.0 });
    TensorProjector::new(p.support().clone(), op, tol)
}

/// Orthocomplement `1 - p`.
pub fn proj_neg(p: &TensorProjector, tol: &Tolerances) -> Result<TensorProjector> {
    let op = CMatrix::identity(p.dim()).sub(p.op());
    TensorProjector::new(p.support().clone(), op, tol)
}

/// Pairwise disjoint, complete family of projector histories over one
/// support; the Boolean algebra of its subsets is the lattice all
/// probability statements quantify over.
#[derive(Clone, Debug)]
pub struct AtomFamily {
    support: Support,
    atoms: Vec<HomogeneousHistory>,
    labels: Vec<String>,
}

impl AtomFamily {
    /// Validates pairwise disjointness and completeness of the embedded sum.
    pub fn new(
        support: Support,
        atoms: Vec<HomogeneousHistory>,
        labels: Vec<String>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Invalid("atom family must be nonempty".into()));
        }
        if labels.len() != atoms.len() {
            return Err(Error::Invalid(format!(
                "{} atoms but {} labels",
                atoms.len(),
                labels.len()
            )));
        }
        let dim = atoms[0].dim();
        for a in &atoms {
            if a.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: a.dim(),
                });
            }
            if !a.support().is_subset_of(&support) {
                return Err(Error::SupportMismatch {
                    detail: format!(
                        "atom support {:?} escapes family support {:?}",
                        a.support().times(),
                        support.times()
                    ),
                });
            }
        }
        for i in 0..atoms.len() {
            for j in (i + 1)..atoms.len() {
                if !disjoint_pointwise(&atoms[i], &atoms[j], tol)? {
                    return Err(Error::NotDisjoint { i, j });
                }
            }
        }
        let mut sum = CMatrix::zeros(dim.pow(support.len() as u32).max(1));
        for a in &atoms {
            sum = sum.add(embed(a, &support, tol)?.op());
        }
        let residual = sum.max_abs_diff(&CMatrix::identity(sum.dim()));
        if residual > tol.func {
            return Err(Error::NotComplete { residual });
        }
        Ok(AtomFamily {
            support,
            atoms,
            labels,
        })
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn atoms(&self) -> &[HomogeneousHistory] {
        &self.atoms
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Builds the canonical disjoint complete family from one projective
/// measurement per time: atoms are all outcome combinations. Empty input
/// yields the single unit atom.
pub fn family_from_pvms(
    pvms: &[(f64, Povm)],
    dim: usize,
    tol: &Tolerances,
) -> Result<AtomFamily> {
    for (t, pvm) in pvms {
        if pvm.dim() != dim {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: pvm.dim(),
            });
        }
        for (label, e) in pvm.outcomes() {
            if !e.is_projector(tol) {
                return Err(Error::NotProjectiveMeasurement {
                    label: format!("{label} at time {t}"),
                });
            }
        }
    }
    let mut sorted: Vec<&(f64, Povm)> = pvms.iter().collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));
    for w in sorted.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Invalid(format!("duplicate measurement time {}", w[0].0)));
        }
    }
    let support = Support::new(sorted.iter().map(|(t, _)| *t).collect())?;

    // Cartesian product of outcome indices, earliest time varying slowest.
    let mut combos: Vec<Vec<usize>> = vec![Vec::new()];
    for (_, pvm) in &sorted {
        let mut next = Vec::with_capacity(combos.len() * pvm.len());
        for c in &combos {
            for k in 0..pvm.len() {
                let mut c2 = c.clone();
                c2.push(k);
                next.push(c2);
            }
        }
        combos = next;
    }
    let mut atoms = Vec::with_capacity(combos.len());
    let mut labels = Vec::with_capacity(combos.len());
    for combo in combos {
        let mut entries = Vec::with_capacity(combo.len());
        let mut name = Vec::with_capacity(combo.len());
        for (slot, &k) in combo.iter().enumerate() {
            let (t, pvm) = sorted[slot];
            let (label, e) = &pvm.outcomes()[k];
            entries.push((*t, e.clone()));
            name.push(label.clone());
        }
        atoms.push(HomogeneousHistory::new(dim, entries, tol)?);
        labels.push(name.join("."));
    }
    AtomFamily::new(support, atoms, labels, tol)
}

/// Additive class operator of an atom subset: the sum of the member atoms'
/// class operators. The empty subset maps to zero; the full family to the
/// identity.
pub fn class_operator_additive(
    family: &AtomFamily,
    subset: &[usize],
    ctx: &EvolutionContext,
) -> Result<CMatrix> {
    let mut seen = vec![false; family.len()];
    for &k in subset {
        if k >= family.len() {
            return Err(Error::Invalid(format!(
                "atom index {k} out of range for family of {}",
                family.len()
            )));
        }
        if seen[k] {
            return Err(Error::Invalid(format!("atom index {k} repeated in subset")));
        }
        seen[k] = true;
    }
    let mut acc = CMatrix::zeros(ctx.dim());
    for &k in subset {
        acc = acc.add(&class_operator(&family.atoms()[k], ctx)?);
    }
    Ok(acc)
}

/// Convenience: effect whose projector entries are all of one PVM outcome.
pub fn pvm_projector(e: &Effect, tol: &Tolerances) -> Result<()> {
    if e.is_projector(tol) {
        Ok(())
    } else {
        Err(Error::NotProjectiveMeasurement {
            label: "anonymous".into(),
        })
    }
}
