//! Homogeneous effect histories, their supports, and class operators.
//!
//! A homogeneous history assigns one effect to each time of a finite support;
//! off-support times implicitly carry the identity. The class operator
//! alternates square roots of the assigned effects with unitary evolution
//! segments, anchored at a fiducial time, with the earliest time applied
//! first (rightmost factor).

use crate::effects::Effect;
use crate::numlin::{hermitian_eig, op_leq, CMatrix, HermitianSpectrum};
use crate::{Complex64, Error, Result, Tolerances};

/// Finite, strictly increasing list of times. Empty support denotes the unit
/// history. Times are finite doubles compared exactly: callers must use
/// identical literals for identical times.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    times: Vec<f64>,
}

impl Support {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        for &t in &times {
            if !t.is_finite() {
                return Err(Error::Invalid(format!("support time {t} is not finite")));
            }
        }
        for w in times.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Invalid(format!(
                    "support times must be strictly increasing, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Support { times })
    }

    pub fn empty() -> Self {
        Support { times: Vec::new() }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_time(&self) -> Option<f64> {
        self.times.first().copied()
    }

    pub fn final_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.times.iter().any(|&s| s == t)
    }

    /// Sorted union with exact-equality dedup.
    pub fn union(&self, other: &Support) -> Support {
        let mut merged = Vec::with_capacity(self.times.len() + other.times.len());
        let (mut i, mut j) = (0, 0);
        while i < self.times.len() && j < other.times.len() {
            let (a, b) = (self.times[i], other.times[j]);
            if a < b {
                merged.push(a);
                i += 1;
            } else if b < a {
                merged.push(b);
                j += 1;
            } else {
                merged.push(a);
                i += 1;
                j += 1;
            }
        }
        merged.extend_from_slice(&self.times[i..]);
        merged.extend_from_slice(&other.times[j..]);
        Support { times: merged }
    }

    pub fn is_subset_of(&self, other: &Support) -> bool {
        self.times.iter().all(|&t| other.contains(t))
    }
}

/// Map from support times to non-identity effects of a common dimension.
/// Identity entries are stripped at construction so equal histories have
/// equal supports.
#[derive(Clone, Debug)]
pub struct HomogeneousHistory {
    dim: usize,
    support: Support,
    effects: Vec<Effect>,
}

impl HomogeneousHistory {
    pub fn new(dim: usize, entries: Vec<(f64, Effect)>, tol: &Tolerances) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid("history dimension must be positive".into()));
        }
        let mut kept: Vec<(f64, Effect)> = Vec::with_capacity(entries.len());
        for (t, e) in entries {
            if !t.is_finite() {
                return Err(Error::Invalid(format!("history time {t} is not finite")));
            }
            if e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: e.dim(),
                });
            }
            if e.is_identity(tol) {
                continue;
            }
            kept.push((t, e));
        }
        kept.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("times are finite"));
        for w in kept.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Invalid(format!(
                    "duplicate history time {}",
                    w[0].0
                )));
            }
        }
        let (times, effects): (Vec<f64>, Vec<Effect>) = kept.into_iter().unzip();
        Ok(HomogeneousHistory {
            dim,
            support: Support::new(times)?,
            effects,
        })
    }

    /// The unit history: empty support, identity everywhere.
    pub fn unit(dim: usize) -> Self {
        HomogeneousHistory {
            dim,
            support: Support::empty(),
            effects: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn support(&self) -> &Support {
        &self.support
    }

    pub fn effect_at(&self, t: f64) -> Option<&Effect> {
        self.support
            .times()
            .iter()
            .position(|&s| s == t)
            .map(|i| &self.effects[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (f64, &Effect)> {
        self.support.times.iter().copied().zip(self.effects.iter())
    }

    pub fn is_unit(&self) -> bool {
        self.support.is_empty()
    }

    pub fn is_projector_history(&self, tol: &Tolerances) -> bool {
        self.effects.iter().all(|e| e.is_projector(tol))
    }

    /// First support time whose entry is not a projector, if any.
    fn first_non_projector_time(&self, tol: &Tolerances) -> Option<f64> {
        self.entries()
            .find(|(_, e)| !e.is_projector(tol))
            .map(|(t, _)| t)
    }
}

/// Fixed Hamiltonian, fiducial time, and tolerances; provides evolution
/// operators from a cached spectral decomposition.
#[derive(Clone, Debug)]
pub struct EvolutionContext {
    dim: usize,
    hamiltonian: CMatrix,
    fiducial_time: f64,
    tol: Tolerances,
    spectrum: HermitianSpectrum,
}

impl EvolutionContext {
    pub fn new(hamiltonian: CMatrix, fiducial_time: f64, tol: Tolerances) -> Result<Self> {
        if !fiducial_time.is_finite() {
            return Err(Error::Invalid(format!(
                "fiducial time {fiducial_time} is not finite"
            )));
        }
        let dim = hamiltonian.dim();
        if dim > tol.dim_cap {
            return Err(Error::DimensionCap {
                dim,
                cap: tol.dim_cap,
            });
        }
        let residual = hamiltonian.hermiticity_residual();
        if residual > tol.lin {
            return Err(Error::NotHermitian { residual });
        }
        let spectrum = hermitian_eig(&hamiltonian, &tol)?;
        Ok(EvolutionContext {
            dim,
            hamiltonian,
            fiducial_time,
            tol,
            spectrum,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn fiducial_time(&self) -> f64 {
        self.fiducial_time
    }

    pub fn tol(&self) -> &Tolerances {
        &self.tol
    }

    /// Evolution operator `U(t_to, t_from) = exp(-i (t_to - t_from) H)`,
    /// taking states at `t_from` to states at `t_to`.
    pub fn unitary(&self, t_to: f64, t_from: f64) -> CMatrix {
        let dt = t_to - t_from;
        self.spectrum
            .map_complex(|lambda| (Complex64::new(0.0, -dt * lambda)).exp())
    }

    /// Same context anchored at a different fiducial time.
    pub fn with_fiducial_time(&self, t0: f64) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::Invalid(format!("fiducial time {t0} is not finite")));
        }
        let mut ctx = self.clone();
        ctx.fiducial_time = t0;
        Ok(ctx)
    }
}

/// True iff some entry on the support is the zero matrix.
pub fn is_zero_history(u: &HomogeneousHistory, tol: &Tolerances) -> bool {
    u.effects.iter().any(|e| e.is_zero(tol))
}

/// Pointwise order with identity padding: `(u1)_t <= (u2)_t` for every time
/// of the union support.
pub fn coarser_leq(
    u1: &HomogeneousHistory,
    u2: &HomogeneousHistory,
    tol: &Tolerances,
) -> Result<bool> {
    if u1.dim() != u2.dim() {
        return Err(Error::DimensionMismatch {
            left: u1.dim(),
            right: u2.dim(),
        });
    }
    let one = CMatrix::identity(u1.dim());
    for &t in u1.support.union(&u2.support).times() {
        let a = u1.effect_at(t).map_or(&one, |e| e.op());
        let b = u2.effect_at(t).map_or(&one, |e| e.op());
        if !op_leq(a, b, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// True iff some time has `(h1)_t (h2)_t = 0`, with identity padding. Both
/// histories must be projector histories.
pub fn disjoint_pointwise(
    h1: &HomogeneousHistory,
    h2: &HomogeneousHistory,
    tol: &Tolerances,
) -> Result<bool> {
    if h1.dim() != h2.dim() {
        return Err(Error::DimensionMismatch {
            left: h1.dim(),
            right: h2.dim(),
        });
    }
    for h in [h1, h2] {
        if let Some(time) = h.first_non_projector_time(tol) {
            return Err(Error::NotProjectorHistory { time });
        }
    }
    let one = CMatrix::identity(h1.dim());
    for &t in h1.support.union(&h2.support).times() {
        let a = h1.effect_at(t).map_or(&one, |e| e.op());
        let b = h2.effect_at(t).map_or(&one, |e| e.op());
        if a.matmul(b).max_abs() <= tol.lin {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Class operator anchored at the context's fiducial time:
/// `U(t0,tn) sqrt(u_n) U(tn,t_{n-1}) ... sqrt(u_1) U(t1,t0)`,
/// identity for the unit history.
pub fn class_operator(u: &HomogeneousHistory, ctx: &EvolutionContext) -> Result<CMatrix> {
    if u.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: ctx.dim(),
        });
    }
    let tol = ctx.tol();
    if u.is_unit() {
        return Ok(CMatrix::identity(u.dim()));
    }
    let times = u.support.times();
    let t0 = ctx.fiducial_time();
    let mut acc = ctx.unitary(times[0], t0);
    for (k, (_, e)) in u.entries().enumerate() {
        acc = e.sqrt(tol).matmul(&acc);
        if k + 1 < times.len() {
            acc = ctx.unitary(times[k + 1], times[k]).matmul(&acc);
        }
    }
    acc = ctx.unitary(t0, times[times.len() - 1]).matmul(&acc);
    let norm = acc.operator_norm();
    if norm > 1.0 + tol.func {
        return Err(Error::Internal(format!(
            "class operator norm {norm} exceeds 1"
        )));
    }
    Ok(acc)
}

/// Class operator in the equivalent Heisenberg form: square roots conjugated
/// to the initial support time and multiplied latest-first, then the whole
/// product conjugated back to the fiducial time. Numerically distinct route
/// from `class_operator`; used for cross-checks.
pub fn class_operator_heisenberg(
    u: &HomogeneousHistory,
    ctx: &EvolutionContext,
) -> Result<CMatrix> {
    if u.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: u.dim(),
            right: ctx.dim(),
        });
    }
    let tol = ctx.tol();
    if u.is_unit() {
        return Ok(CMatrix::identity(u.dim()));
    }
    let t_i = u.support.initial_time().expect("nonempty support");
    let mut acc = CMatrix::identity(u.dim());
    for (t, e) in u.entries() {
        let frame = ctx.unitary(t, t_i);
        let heisenberg = frame.adjoint().matmul(&e.sqrt(tol)).matmul(&frame);
        // Latest time leftmost: prepend each factor as times increase.
        acc = heisenberg.matmul(&acc);
    }
    let t0 = ctx.fiducial_time();
    Ok(ctx
        .unitary(t0, t_i)
        .matmul(&acc)
        .matmul(&ctx.unitary(t_i, t0)))
}

/// Effect associated with the history: `C^dagger C` for its class operator.
pub fn associated_effect(u: &HomogeneousHistory, ctx: &EvolutionContext) -> Result<Effect> {
    let c = class_operator(u, ctx)?;
    Effect::new(c.adjoint().matmul(&c), ctx.tol())
}

/// Extends the history by one effect at a time strictly after its final
/// support time (any finite time for the unit history).
pub fn extend_at(
    u0: &HomogeneousHistory,
    t_star: f64,
    e: Effect,
    tol: &Tolerances,
) -> Result<HomogeneousHistory> {
    if let Some(t_final) = u0.support.final_time() {
        if t_star <= t_final {
            return Err(Error::TimeNotAfterFinal {
                t_star,
                t_final,
            });
        }
    }
    let mut entries: Vec<(f64, Effect)> = u0.entries().map(|(t, e)| (t, e.clone())).collect();
    entries.push((t_star, e));
    HomogeneousHistory::new(u0.dim(), entries, tol)
}
