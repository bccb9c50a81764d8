//! Formal orthogonal sums of homogeneous tensor terms, the additive
//! decoherence functional over them, full D-posets of one-effect extensions,
//! and order-k repeated-effect histories.
//!
//! A homogeneous term assigns one effect per support time (identity slots
//! kept explicit) and caches its Kronecker product. A formal sum at
//! parameter alpha is a list of such terms whose alpha-roots sum to at most
//! the identity on the tensor space; whether the list genuinely extends to a
//! decomposition of the unit is tracked by a two-tier certificate. The
//! functional `d_hat` threads square roots of the factors through the
//! evolution exactly like a class operator, and extends additively over
//! term lists.

use crate::effects::{oplus_alpha, AlphaParam, DensityState, Effect};
use crate::histories::{EvolutionContext, HomogeneousHistory, Support};
use crate::numlin::{kron, op_leq, order_defect, pow_psd, CMatrix};
use crate::{Complex64, Error, Result, Tolerances};

/// One effect per support time, with the Kronecker product cached. Identity
/// factors are kept in place: a term is an explicit tensor word, not a
/// history with canonical support.
#[derive(Clone, Debug)]
pub struct HomogeneousTerm {
    dim: usize,
    support: Support,
    factors: Vec<Effect>,
    op: CMatrix,
}

impl HomogeneousTerm {
    pub fn new(
        dim: usize,
        support: Support,
        factors: Vec<Effect>,
        tol: &Tolerances,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("term dimension must be positive".into()));
        }
        if factors.len() != support.len() {
            return Err(Error::SlotMismatch {
                expected: support.len(),
                got: factors.len(),
            });
        }
        for f in &factors {
            if f.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: f.dim(),
                });
            }
        }
        let total = dim
            .checked_pow(support.len() as u32)
            .filter(|&d| d <= tol.dim_cap)
            .ok_or(Error::DimensionCap {
                dim: usize::MAX,
                cap: tol.dim_cap,
            })?;
        let mut op = CMatrix::identity(1);
        for f in &factors {
            op = kron(&op, f.op());
        }
        debug_assert_eq!(op.dim(), total.max(1));
        Ok(HomogeneousTerm {
            dim,
            support,
            factors,
            op,
        })
    }

    /// All-identity term over the support.
    pub fn unit(dim: usize, support: Support, tol: &Tolerances) -> Result<Self> {
        let factors = vec![Effect::identity(dim); support.len()];
        HomogeneousTerm::new(dim, support, factors, tol)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn factors(&self) -> &[Effect] {
        &self.factors
    }

    /// Cached Kronecker product of the factors (1x1 identity for an empty
    /// support).
    pub fn op(&self) -> &CMatrix {
        &self.op
    }

    /// Alpha-root of the tensor operator, computed factorwise:
    /// `(A (x) B)^{1/a} = A^{1/a} (x) B^{1/a}`.
    pub fn root_op(&self, alpha: &AlphaParam, tol: &Tolerances) -> CMatrix {
        let mut acc = CMatrix::identity(1);
        for f in &self.factors {
            acc = kron(&acc, &f.root(alpha, tol));
        }
        acc
    }

    /// The homogeneous history with the same factors (identity slots
    /// stripped there); the independent route for cross-checking `d_hat`.
    pub fn to_history(&self, tol: &Tolerances) -> Result<HomogeneousHistory> {
        let entries = self
            .support
            .times()
            .iter()
            .copied()
            .zip(self.factors.iter().cloned())
            .collect();
        HomogeneousHistory::new(self.dim, entries, tol)
    }

}

/// How far a formal sum's admissibility has been verified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Certificate {
    /// The necessary operator inequality holds: the alpha-roots of the terms
    /// sum to at most the identity (defect recorded).
    Necessary { defect: f64 },
    /// The terms, together with a completion, reproduce the unit
    /// decomposition exactly (residual recorded).
    Exact { residual: f64 },
}

impl Certificate {
    pub fn is_exact(&self) -> bool {
        matches!(self, Certificate::Exact { .. })
    }
}

/// List of homogeneous terms on one support, summed at a fixed alpha.
#[derive(Clone, Debug)]
pub struct FormalSum {
    alpha: AlphaParam,
    dim: usize,
    support: Support,
    terms: Vec<HomogeneousTerm>,
    certificate: Certificate,
}

impl FormalSum {
    /// Validates the necessary admissibility inequality; the certificate
    /// starts at the necessary tier (upgrade via `is_admissible`).
    pub fn new(
        alpha: AlphaParam,
        dim: usize,
        support: Support,
        terms: Vec<HomogeneousTerm>,
        tol: &Tolerances,
    ) -> Result<Self> {
        for t in &terms {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: t.dim(),
                });
            }
            if t.support() != &support {
                return Err(Error::SupportMismatch {
                    detail: format!(
                        "term support {:?} differs from sum support {:?}",
                        t.support().times(),
                        support.times()
                    ),
                });
            }
        }
        let defect = root_sum_defect(&terms, &alpha, dim, &support, tol)?;
        if defect > tol.psd {
            return Err(Error::NotAdmissible {
                detail: format!(
                    "alpha-roots of the terms exceed the identity by {defect:.3e}"
                ),
            });
        }
        Ok(FormalSum {
            alpha,
            dim,
            support,
            terms,
            certificate: Certificate::Necessary { defect },
        })
    }

    pub fn single(alpha: AlphaParam, term: HomogeneousTerm, tol: &Tolerances) -> Result<Self> {
        let dim = term.dim();
        let support = term.support().clone();
        FormalSum::new(alpha, dim, support, vec![term], tol)
    }

    pub fn alpha(&self) -> &AlphaParam {
        &self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn terms(&self) -> &[HomogeneousTerm] {
        &self.terms
    }

    pub fn certificate(&self) -> &Certificate {
        &self.certificate
    }

    /// Sum of the terms' alpha-roots (zero matrix for an empty sum).
    pub fn root_sum(&self, tol: &Tolerances) -> CMatrix {
        let mut acc = CMatrix::zeros(self.tensor_dim());
        for t in &self.terms {
            acc = acc.add(&t.root_op(&self.alpha, tol));
        }
        acc
    }

    /// Operator value `(sum of alpha-roots)^alpha`.
    pub fn value(&self, tol: &Tolerances) -> Result<CMatrix> {
        pow_psd(&self.root_sum(tol), self.alpha.ratio(), tol)
    }

    pub fn tensor_dim(&self) -> usize {
        self.dim.pow(self.support.len() as u32).max(1)
    }

    /// Re-runs admissibility and stores the resulting certificate.
    pub fn certify(&mut self, completion_hint: Option<&[HomogeneousTerm]>, tol: &Tolerances) -> Result<Certificate> {
        let cert = is_admissible(self, completion_hint, tol)?;
        self.certificate = cert;
        Ok(cert)
    }
}

fn root_sum_defect(
    terms: &[HomogeneousTerm],
    alpha: &AlphaParam,
    dim: usize,
    support: &Support,
    tol: &Tolerances,
) -> Result<f64> {
    let tensor_dim = dim.pow(support.len() as u32).max(1);
    let mut acc = CMatrix::zeros(tensor_dim);
    for t in terms {
        acc = acc.add(&t.root_op(alpha, tol));
    }
    order_defect(&acc, &CMatrix::identity(tensor_dim), tol)
}

/// Two-tier admissibility check. The necessary inequality (alpha-roots sum
/// to at most the identity) is always verified. With a completion hint, the
/// terms plus the hint must reproduce the unit decomposition exactly; with
/// no hint, the exact tier is still granted when the terms are
/// self-completing. The open question whether the necessary inequality is
/// also sufficient stays observable in the returned tier.
pub fn is_admissible(
    s: &FormalSum,
    completion_hint: Option<&[HomogeneousTerm]>,
    tol: &Tolerances,
) -> Result<Certificate> {
    let defect = root_sum_defect(&s.terms, &s.alpha, s.dim, &s.support, tol)?;
    if defect > tol.psd {
        return Err(Error::NotAdmissible {
            detail: format!("alpha-roots of the terms exceed the identity by {defect:.3e}"),
        });
    }
    let mut total = s.root_sum(tol);
    if let Some(hint) = completion_hint {
        for t in hint {
            if t.dim() != s.dim || t.support() != &s.support {
                return Err(Error::SupportMismatch {
                    detail: "completion hint term lives on a different support".into(),
                });
            }
            total = total.add(&t.root_op(&s.alpha, tol));
        }
    }
    let residual = total.max_abs_diff(&CMatrix::identity(s.tensor_dim()));
    if residual <= tol.func {
        Ok(Certificate::Exact { residual })
    } else if completion_hint.is_some() {
        Err(Error::IncompleteHint { residual })
    } else {
        Ok(Certificate::Necessary { defect })
    }
}

/// Formal sum of two sums at the same alpha and support: term-list
/// concatenation, kept only when the combined list is still admissible at
/// the necessary tier.
pub fn oplus_d(a: &FormalSum, b: &FormalSum, tol: &Tolerances) -> Result<FormalSum> {
    if a.alpha != b.alpha {
        return Err(Error::AlphaMismatch {
            left: a.alpha.to_string(),
            right: b.alpha.to_string(),
        });
    }
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    if a.support != b.support {
        return Err(Error::SupportMismatch {
            detail: format!(
                "summand supports {:?} and {:?} differ",
                a.support.times(),
                b.support.times()
            ),
        });
    }
    let mut terms = a.terms.clone();
    terms.extend(b.terms.iter().cloned());
    FormalSum::new(a.alpha, a.dim, a.support.clone(), terms, tol)
}

/// Canonical minimal representation: repeatedly merges two terms that agree
/// on all factors except (at most) one slot, replacing the differing slot by
/// the alpha partial sum of the two factors. A merge is performed only when
/// that slotwise sum is defined; equal terms merge in their first slot. The
/// relations rewritten here are the scaled-naturals identifications of the
/// tensor construction, which leave the sum's operator value fixed.
pub fn normal_form(s: &FormalSum, tol: &Tolerances) -> Result<FormalSum> {
    let mut terms = s.terms.clone();
    'merge: loop {
        for i in 0..terms.len() {
            for j in (i + 1)..terms.len() {
                if let Some(merged) = try_merge(&terms[i], &terms[j], &s.alpha, tol)? {
                    terms[i] = merged;
                    terms.remove(j);
                    continue 'merge;
                }
            }
        }
        break;
    }
    FormalSum::new(s.alpha, s.dim, s.support.clone(), terms, tol)
}

fn try_merge(
    a: &HomogeneousTerm,
    b: &HomogeneousTerm,
    alpha: &AlphaParam,
    tol: &Tolerances,
) -> Result<Option<HomogeneousTerm>> {
    if a.support() != b.support() || a.support().is_empty() {
        return Ok(None);
    }
    let mut differing: Option<usize> = None;
    for (k, (fa, fb)) in a.factors.iter().zip(b.factors.iter()).enumerate() {
        if fa.op().max_abs_diff(fb.op()) > tol.func {
            if differing.is_some() {
                return Ok(None);
            }
            differing = Some(k);
        }
    }
    let slot = differing.unwrap_or(0);
    match oplus_alpha(&a.factors[slot], &b.factors[slot], alpha, tol) {
        Ok(summed) => {
            let mut factors = a.factors.clone();
            factors[slot] = summed;
            Ok(Some(HomogeneousTerm::new(
                a.dim(),
                a.support().clone(),
                factors,
                tol,
            )?))
        }
        Err(Error::NotSummable { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Which complement formula produced a result.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComplementRoute {
    /// Complements the second slot termwise, closing with the first-slot
    /// remainder (the preferred form).
    Primary,
    /// Mirror image: complements the first slot termwise, closing with the
    /// second-slot remainder.
    Mirror,
}

/// Complement of an exactly certified sum on a one- or two-time support:
/// a sum whose terms complete `s` to the unit decomposition. Prefers the
/// primary formula and falls back to its mirror when the primary closing
/// term is not an effect; the route taken is returned for reporting.
pub fn complement(s: &FormalSum, tol: &Tolerances) -> Result<(FormalSum, ComplementRoute)> {
    if !s.certificate.is_exact() {
        return Err(Error::NotAdmissible {
            detail: "complement requires an exactly certified sum".into(),
        });
    }
    match s.support.len() {
        1 => {
            let closure = closing_effect(
                s.terms.iter().map(|t| &t.factors[0]),
                &s.alpha,
                s.dim,
                tol,
            )?
            .ok_or_else(|| Error::NotAdmissible {
                detail: "no closing effect exists for the sum".into(),
            })?;
            let term =
                HomogeneousTerm::new(s.dim, s.support.clone(), vec![closure], tol)?;
            let mut out = FormalSum::new(s.alpha, s.dim, s.support.clone(), vec![term], tol)?;
            out.certify(Some(&s.terms), tol)?;
            Ok((out, ComplementRoute::Primary))
        }
        2 => {
            if let Some(out) = two_time_complement(s, 0, tol)? {
                return Ok((out, ComplementRoute::Primary));
            }
            if let Some(out) = two_time_complement(s, 1, tol)? {
                return Ok((out, ComplementRoute::Mirror));
            }
            Err(Error::NotAdmissible {
                detail: "neither complement formula closes this sum".into(),
            })
        }
        n => Err(Error::Invalid(format!(
            "complement helper covers one- and two-time supports, got {n} times"
        ))),
    }
}

/// `(1 - sum of alpha-roots)^alpha` when that is an effect; None when the
/// roots already exceed the identity.
fn closing_effect<'a>(
    factors: impl Iterator<Item = &'a Effect>,
    alpha: &AlphaParam,
    dim: usize,
    tol: &Tolerances,
) -> Result<Option<Effect>> {
    let mut roots = CMatrix::zeros(dim);
    for f in factors {
        roots = roots.add(&f.root(alpha, tol));
    }
    let one = CMatrix::identity(dim);
    if order_defect(&roots, &one, tol)? > tol.psd {
        return Ok(None);
    }
    let rest = pow_psd(&one.sub(&roots), alpha.ratio(), tol)?;
    Ok(Some(Effect::new(rest, tol)?))
}

/// Complement on a two-time support, keeping `kept` as the slot whose
/// factors are copied and complementing the other slot termwise; the
/// closing term carries the kept slot's remainder against the identity.
fn two_time_complement(
    s: &FormalSum,
    kept: usize,
    tol: &Tolerances,
) -> Result<Option<FormalSum>> {
    let other = 1 - kept;
    let one = Effect::identity(s.dim);
    let mut terms = Vec::with_capacity(s.terms.len() + 1);
    for t in &s.terms {
        let flipped = complement_in_alpha(&t.factors[other], &s.alpha, tol)?;
        let mut factors = vec![one.clone(), one.clone()];
        factors[kept] = t.factors[kept].clone();
        factors[other] = flipped;
        terms.push(HomogeneousTerm::new(s.dim, s.support.clone(), factors, tol)?);
    }
    let Some(closure) = closing_effect(
        s.terms.iter().map(|t| &t.factors[kept]),
        &s.alpha,
        s.dim,
        tol,
    )?
    else {
        return Ok(None);
    };
    let mut factors = vec![one.clone(), one];
    factors[kept] = closure;
    terms.push(HomogeneousTerm::new(s.dim, s.support.clone(), factors, tol)?);
    let mut out = FormalSum::new(s.alpha, s.dim, s.support.clone(), terms, tol)?;
    out.certify(Some(&s.terms), tol)?;
    Ok(Some(out))
}

/// `(1 - F^{1/a})^a`, the alpha complement of a single effect.
fn complement_in_alpha(f: &Effect, alpha: &AlphaParam, tol: &Tolerances) -> Result<Effect> {
    let root = f.root(alpha, tol);
    let rest = CMatrix::identity(f.dim()).sub(&root);
    Effect::new(pow_psd(&rest, alpha.ratio(), tol)?, tol)
}

/// Class operator of a term's square roots: the factors' square roots
/// threaded through the evolution, identity slots included. Built directly
/// on the term data so it stays an independent route from the history-based
/// class operator.
pub(crate) fn term_class_operator(a: &HomogeneousTerm, ctx: &EvolutionContext) -> Result<CMatrix> {
    if a.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: ctx.dim(),
        });
    }
    let tol = ctx.tol();
    let times = a.support().times();
    if times.is_empty() {
        return Ok(CMatrix::identity(a.dim()));
    }
    let t0 = ctx.fiducial_time();
    let mut acc = ctx.unitary(times[0], t0);
    for (k, f) in a.factors().iter().enumerate() {
        acc = f.sqrt(tol).matmul(&acc);
        if k + 1 < times.len() {
            acc = ctx.unitary(times[k + 1], times[k]).matmul(&acc);
        }
    }
    Ok(ctx.unitary(t0, times[times.len() - 1]).matmul(&acc))
}

/// Decoherence weight of two terms on a common support:
/// `tr(C'(sqrt a) rho C'(sqrt b)^dagger)`.
pub fn d_hat(
    rho: &DensityState,
    a: &HomogeneousTerm,
    b: &HomogeneousTerm,
    ctx: &EvolutionContext,
) -> Result<Complex64> {
    if a.support() != b.support() {
        return Err(Error::SupportMismatch {
            detail: format!(
                "terms live on supports {:?} and {:?}",
                a.support().times(),
                b.support().times()
            ),
        });
    }
    if rho.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: ctx.dim(),
        });
    }
    let ca = term_class_operator(a, ctx)?;
    let cb = term_class_operator(b, ctx)?;
    Ok(ca.matmul(rho.op()).matmul(&cb.adjoint()).trace())
}

/// Additive extension of `d_hat` over formal sums: the double sum of term
/// weights. Additivity in each argument is structural.
pub fn d_sum(
    rho: &DensityState,
    a: &FormalSum,
    b: &FormalSum,
    ctx: &EvolutionContext,
) -> Result<Complex64> {
    if a.alpha != b.alpha {
        return Err(Error::AlphaMismatch {
            left: a.alpha.to_string(),
            right: b.alpha.to_string(),
        });
    }
    if a.support != b.support {
        return Err(Error::SupportMismatch {
            detail: format!(
                "sums live on supports {:?} and {:?}",
                a.support.times(),
                b.support.times()
            ),
        });
    }
    let mut total = Complex64::new(0.0, 0.0);
    for ta in a.terms() {
        for tb in b.terms() {
            total += d_hat(rho, ta, tb, ctx)?;
        }
    }
    Ok(total)
}

/// One-effect extensions of a fixed base history at a fixed later time,
/// carrying their own dynamics and state.
#[derive(Clone, Debug)]
pub struct FullDPoset {
    base: HomogeneousHistory,
    t_star: f64,
    ctx: EvolutionContext,
    state: DensityState,
}

impl FullDPoset {
    pub fn new(
        base: HomogeneousHistory,
        t_star: f64,
        ctx: EvolutionContext,
        state: DensityState,
    ) -> Result<Self> {
        if !t_star.is_finite() {
            return Err(Error::Invalid(format!("extension time {t_star} is not finite")));
        }
        if let Some(t_final) = base.support().final_time() {
            if t_star <= t_final {
                return Err(Error::TimeNotAfterFinal { t_star, t_final });
            }
        }
        if base.dim() != ctx.dim() || state.dim() != ctx.dim() {
            return Err(Error::DimensionMismatch {
                left: base.dim(),
                right: ctx.dim(),
            });
        }
        Ok(FullDPoset {
            base,
            t_star,
            ctx,
            state,
        })
    }

    pub fn base(&self) -> &HomogeneousHistory {
        &self.base
    }

    pub fn t_star(&self) -> f64 {
        self.t_star
    }

    pub fn ctx(&self) -> &EvolutionContext {
        &self.ctx
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }

    /// Term of the extension `u_E` over the support of the base plus the
    /// extension time (identity slots kept).
    pub fn extension_term(&self, e: &Effect) -> Result<HomogeneousTerm> {
        if e.dim() != self.ctx.dim() {
            return Err(Error::DimensionMismatch {
                left: e.dim(),
                right: self.ctx.dim(),
            });
        }
        let support = self
            .base
            .support()
            .union(&Support::new(vec![self.t_star])?);
        let mut factors = Vec::with_capacity(support.len());
        for &t in support.times() {
            if t == self.t_star {
                factors.push(e.clone());
            } else {
                factors.push(
                    self.base
                        .effect_at(t)
                        .cloned()
                        .expect("support times come from the base"),
                );
            }
        }
        HomogeneousTerm::new(self.ctx.dim(), support, factors, self.ctx.tol())
    }

    /// Weight between two one-effect extensions.
    pub fn extension_weight(&self, e: &Effect, f: &Effect) -> Result<Complex64> {
        let te = self.extension_term(e)?;
        let tf = self.extension_term(f)?;
        d_hat(&self.state, &te, &tf, &self.ctx)
    }

    /// The base history's branch state transported to the extension time:
    /// `U(t*, t0) C(u0) rho C(u0)^dagger U(t*, t0)^dagger`, unnormalized
    /// (its trace is the base weight). Probabilities of extensions are plain
    /// traces against it.
    pub fn reduced_state(&self) -> Result<CMatrix> {
        let c0 = crate::histories::class_operator(&self.base, &self.ctx)?;
        let u = self.ctx.unitary(self.t_star, self.ctx.fiducial_time());
        let branch = c0
            .matmul(self.state.op())
            .matmul(&c0.adjoint());
        Ok(u.matmul(&branch).matmul(&u.adjoint()))
    }
}

/// Probability of the one-effect extension: the diagonal weight of its term.
pub fn full_dposet_prob(fd: &FullDPoset, e: &Effect) -> Result<f64> {
    let w = fd.extension_weight(e, e)?;
    Ok(w.re.clamp(0.0, 1.0))
}

/// Blocks of repeated insertions: each of the `m` blocks carries `k`
/// strictly increasing times, block spans are pairwise disjoint, and no base
/// time falls inside a block span (so the Heisenberg conjugations telescope
/// across each block).
#[derive(Clone, Debug)]
pub struct OrderKFamily {
    base: HomogeneousHistory,
    k: u32,
    blocks: Vec<Vec<f64>>,
    ctx: EvolutionContext,
    state: DensityState,
}

impl OrderKFamily {
    pub fn new(
        base: HomogeneousHistory,
        k: u32,
        blocks: Vec<Vec<f64>>,
        ctx: EvolutionContext,
        state: DensityState,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Invalid("order k must be positive".into()));
        }
        if base.dim() != ctx.dim() || state.dim() != ctx.dim() {
            return Err(Error::DimensionMismatch {
                left: base.dim(),
                right: ctx.dim(),
            });
        }
        for block in &blocks {
            if block.len() != k as usize {
                return Err(Error::SlotMismatch {
                    expected: k as usize,
                    got: block.len(),
                });
            }
            for &t in block {
                if !t.is_finite() {
                    return Err(Error::Invalid(format!("block time {t} is not finite")));
                }
            }
            for w in block.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Invalid(format!(
                        "block times must strictly increase, got {} then {}",
                        w[0], w[1]
                    )));
                }
            }
        }
        // Spacing: closed block spans keep out base times and other blocks.
        for (r, block) in blocks.iter().enumerate() {
            let (lo, hi) = (block[0], block[k as usize - 1]);
            for &t in base.support().times() {
                if t >= lo && t <= hi {
                    return Err(Error::Invalid(format!(
                        "base time {t} falls inside block {r} span [{lo}, {hi}]"
                    )));
                }
            }
            for (r2, other) in blocks.iter().enumerate() {
                if r2 == r {
                    continue;
                }
                for &t in other {
                    if t >= lo && t <= hi {
                        return Err(Error::Invalid(format!(
                            "block {r2} time {t} falls inside block {r} span [{lo}, {hi}]"
                        )));
                    }
                }
            }
        }
        Ok(OrderKFamily {
            base,
            k,
            blocks,
            ctx,
            state,
        })
    }

    /// Blocks generated on a regular grid: block `r` (1-based) is centered
    /// at one unit intervals past the base's final time, with its `k` times
    /// spread across `[center - half_width, center + half_width]`. A
    /// half-width below one half keeps spans disjoint and clear of the base.
    pub fn auto_grid(
        base: HomogeneousHistory,
        k: u32,
        m: usize,
        half_width: f64,
        ctx: EvolutionContext,
        state: DensityState,
    ) -> Result<Self> {
        if !(half_width > 0.0 && half_width < 0.5) {
            return Err(Error::Invalid(format!(
                "half width must lie in (0, 1/2), got {half_width}"
            )));
        }
        let t_f = base.support().final_time().unwrap_or(0.0);
        let mut blocks = Vec::with_capacity(m);
        for r in 1..=m {
            let center = t_f + r as f64;
            let block = if k == 1 {
                vec![center]
            } else {
                (0..k)
                    .map(|l| {
                        center - half_width
                            + 2.0 * half_width * l as f64 / (k - 1) as f64
                    })
                    .collect()
            };
            blocks.push(block);
        }
        OrderKFamily::new(base, k, blocks, ctx, state)
    }

    pub fn base(&self) -> &HomogeneousHistory {
        &self.base
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn ctx(&self) -> &EvolutionContext {
        &self.ctx
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }

    /// The alpha parameter `2/k` under which block effects sum additively.
    pub fn block_alpha(&self) -> Result<AlphaParam> {
        AlphaParam::new(2, i64::from(self.k))
    }

    /// Initial time of the extended histories: the earliest base or block
    /// time. Inserted effects are conjugated to this frame.
    fn initial_time(&self) -> f64 {
        let mut t_i = f64::INFINITY;
        if let Some(t) = self.base.support().initial_time() {
            t_i = t_i.min(t);
        }
        for b in &self.blocks {
            t_i = t_i.min(b[0]);
        }
        t_i
    }

    /// Term over the base plus all block times; block `r` carries the
    /// Heisenberg transport of `effects[r]` at each of its times.
    pub fn build_term(&self, effects: &[Effect]) -> Result<HomogeneousTerm> {
        if effects.len() != self.blocks.len() {
            return Err(Error::SlotMismatch {
                expected: self.blocks.len(),
                got: effects.len(),
            });
        }
        for e in effects {
            if e.dim() != self.ctx.dim() {
                return Err(Error::DimensionMismatch {
                    left: e.dim(),
                    right: self.ctx.dim(),
                });
            }
        }
        let tol = self.ctx.tol();
        let t_i = self.initial_time();
        let mut entries: Vec<(f64, Effect)> = self
            .base
            .entries()
            .map(|(t, e)| (t, e.clone()))
            .collect();
        for (r, block) in self.blocks.iter().enumerate() {
            for &t in block {
                let frame = self.ctx.unitary(t, t_i);
                let moved = frame
                    .matmul(effects[r].op())
                    .matmul(&frame.adjoint());
                entries.push((t, Effect::new(moved, tol)?));
            }
        }
        entries.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));
        let support = Support::new(entries.iter().map(|(t, _)| *t).collect())?;
        let factors = entries.into_iter().map(|(_, e)| e).collect();
        HomogeneousTerm::new(self.ctx.dim(), support, factors, tol)
    }
}

/// The extended history with block effects inserted (identity entries
/// stripped as usual for histories).
pub fn orderk_build(fam: &OrderKFamily, effects: &[Effect]) -> Result<HomogeneousHistory> {
    let term = fam.build_term(effects)?;
    term.to_history(fam.ctx().tol())
}

/// Residual of block-level additivity: replacing block `r`'s effect by the
/// `2/k` partial sum of two effects must add the weights against a fixed
/// probe. `rest` supplies the other blocks' effects in order; `probe` is the
/// full effect list of the probe history.
pub fn orderk_additivity_residual(
    fam: &OrderKFamily,
    r: usize,
    e: &Effect,
    d: &Effect,
    rest: &[Effect],
    probe: &[Effect],
    tol_alpha: &Tolerances,
) -> Result<f64> {
    let m = fam.blocks().len();
    if r >= m {
        return Err(Error::Invalid(format!(
            "block index {r} out of range for {m} blocks"
        )));
    }
    if rest.len() != m.saturating_sub(1) {
        return Err(Error::SlotMismatch {
            expected: m - 1,
            got: rest.len(),
        });
    }
    let alpha = fam.block_alpha()?;
    let combined = oplus_alpha(e, d, &alpha, tol_alpha)?;

    let with_block = |block_effect: &Effect| -> Vec<Effect> {
        let mut all = Vec::with_capacity(m);
        let mut rest_iter = rest.iter();
        for slot in 0..m {
            if slot == r {
                all.push(block_effect.clone());
            } else {
                all.push(rest_iter.next().expect("rest length checked").clone());
            }
        }
        all
    };

    let term_probe = fam.build_term(probe)?;
    let w_combined = d_hat(
        fam.state(),
        &fam.build_term(&with_block(&combined))?,
        &term_probe,
        fam.ctx(),
    )?;
    let w_e = d_hat(
        fam.state(),
        &fam.build_term(&with_block(e))?,
        &term_probe,
        fam.ctx(),
    )?;
    let w_d = d_hat(
        fam.state(),
        &fam.build_term(&with_block(d))?,
        &term_probe,
        fam.ctx(),
    )?;
    Ok((w_combined - w_e - w_d).norm())
}

/// Agreement of the two square-root well-definedness predicates for
/// single-term sums at alpha = 2: forming the square-root terms and summing
/// them plainly, versus summing the original terms with square-root weights.
/// Returns true when the predicates agree.
pub fn sqrt_duality_check(a: &FormalSum, b: &FormalSum, tol: &Tolerances) -> Result<bool> {
    for s in [a, b] {
        if *s.alpha() != AlphaParam::two() {
            return Err(Error::AlphaMismatch {
                left: s.alpha().to_string(),
                right: AlphaParam::two().to_string(),
            });
        }
        if s.terms().len() != 1 {
            return Err(Error::Invalid(
                "duality check applies to single-term sums".into(),
            ));
        }
    }
    if a.support() != b.support() {
        return Err(Error::SupportMismatch {
            detail: "duality operands live on different supports".into(),
        });
    }
    let ta = &a.terms()[0];
    let tb = &b.terms()[0];
    let one = CMatrix::identity(a.tensor_dim());

    // Route one: materialize the square-root terms and add them as plain
    // operators (alpha = 1 roots are the operators themselves).
    let sqrt_a = pow_psd(ta.op(), crate::Rational::new(1, 2), tol)?;
    let sqrt_b = pow_psd(tb.op(), crate::Rational::new(1, 2), tol)?;
    let plain_defined = op_leq(&sqrt_a.add(&sqrt_b), &one, tol)?;

    // Route two: alpha = 2 admissibility of the original pair.
    let alpha = AlphaParam::two();
    let weighted = ta.root_op(&alpha, tol).add(&tb.root_op(&alpha, tol));
    let weighted_defined = op_leq(&weighted, &one, tol)?;

    Ok(plain_defined == weighted_defined)
}
