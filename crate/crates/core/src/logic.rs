//! Boolean history algebras: atomic lattices of history propositions with
//! operator-valued valuations, conditional probabilities, and the
//! implication and equivalence relations induced by the decoherence
//! functional.
//!
//! An algebra is built from a finite atom set, either a disjoint complete
//! projector family or an exactly certified effect decomposition at a fixed
//! alpha. Elements are atom subsets; join, meet, and negation are the set
//! operations, with negation taken relative to the algebra's own unit
//! (which need not be the global identity). The decoherence data of the
//! atoms is precomputed once, so element weights are plain gram sums.

use std::collections::BTreeSet;

use crate::decoherence::{ConsistencyMode, ConsistencyReport};
use crate::effect_sums::{
    full_dposet_prob, term_class_operator, FormalSum, FullDPoset, HomogeneousTerm,
};
use crate::effects::{AlphaParam, DensityState, Effect};
use crate::histories::{class_operator, EvolutionContext, Support};
use crate::numlin::{hermitian_eig, CMatrix};
use crate::proj_lattice::{embed, AtomFamily};
use crate::{Complex64, Error, Result, Tolerances};

/// Atom set of an algebra: a disjoint complete projector family, or an
/// effect decomposition whose alpha-roots sum exactly to the identity.
#[derive(Clone, Debug)]
pub enum AlgebraAtoms {
    Projectors(AtomFamily),
    Effects {
        alpha: AlphaParam,
        terms: Vec<HomogeneousTerm>,
    },
}

/// Subset of an algebra's atoms. Produced by [`BooleanHistoryAlgebra`]
/// accessors and the lattice operations; carries indices only.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Element {
    atoms: BTreeSet<usize>,
}

impl Element {
    pub fn atom_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.atoms.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: usize) -> bool {
        self.atoms.contains(&atom)
    }

    pub fn is_subset_of(&self, other: &Element) -> bool {
        self.atoms.is_subset(&other.atoms)
    }
}

/// Atomic Boolean algebra of history propositions over one atom set, with
/// the atoms' decoherence gram matrix precomputed in a fixed state.
#[derive(Clone, Debug)]
pub struct BooleanHistoryAlgebra {
    atoms: AlgebraAtoms,
    labels: Vec<String>,
    class_ops: Vec<CMatrix>,
    gram: Vec<Complex64>,
    ctx: EvolutionContext,
    state: DensityState,
}

/// Builds an algebra, verifying the atom invariants: projector atoms must
/// form a disjoint complete family (checked at family construction), effect
/// atoms must be summable to an exact part of the unit decomposition.
pub fn build_algebra(
    atoms: AlgebraAtoms,
    ctx: EvolutionContext,
    rho: DensityState,
) -> Result<BooleanHistoryAlgebra> {
    if rho.dim() != ctx.dim() {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: ctx.dim(),
        });
    }
    let tol = *ctx.tol();
    let (labels, class_ops) = match &atoms {
        AlgebraAtoms::Projectors(family) => {
            let mut ops = Vec::with_capacity(family.atoms().len());
            for atom in family.atoms() {
                if atom.dim() != ctx.dim() {
                    return Err(Error::DimensionMismatch {
                        left: atom.dim(),
                        right: ctx.dim(),
                    });
                }
                ops.push(class_operator(atom, &ctx)?);
            }
            (family.labels().to_vec(), ops)
        }
        AlgebraAtoms::Effects { alpha, terms } => {
            let Some(first) = terms.first() else {
                return Err(Error::Invalid("an algebra needs at least one atom".into()));
            };
            let dim = first.dim();
            let support = first.support().clone();
            let mut sum = FormalSum::new(*alpha, dim, support, terms.clone(), &tol)?;
            let cert = sum.certify(None, &tol)?;
            if !cert.is_exact() {
                let residual = sum
                    .root_sum(&tol)
                    .max_abs_diff(&CMatrix::identity(sum.tensor_dim()));
                return Err(Error::NotComplete { residual });
            }
            let mut ops = Vec::with_capacity(terms.len());
            for term in terms {
                if term.dim() != ctx.dim() {
                    return Err(Error::DimensionMismatch {
                        left: term.dim(),
                        right: ctx.dim(),
                    });
                }
                ops.push(term_class_operator(term, &ctx)?);
            }
            let labels = (0..terms.len()).map(|i| format!("a{i}")).collect();
            (labels, ops)
        }
    };
    let gram = gram_from_class_ops(&class_ops, &rho, &tol)?;
    Ok(BooleanHistoryAlgebra {
        atoms,
        labels,
        class_ops,
        gram,
        ctx,
        state: rho,
    })
}

/// Gram fill with the diagonal sanity contract: diagonal weights are real
/// and non-negative up to tolerance (tiny negatives clamped, larger ones
/// reported as internal faults).
fn gram_from_class_ops(
    class_ops: &[CMatrix],
    rho: &DensityState,
    tol: &Tolerances,
) -> Result<Vec<Complex64>> {
    let n = class_ops.len();
    let mut gram = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..=i {
            let w = class_ops[i]
                .matmul(rho.op())
                .matmul(&class_ops[j].adjoint())
                .trace();
            gram[i * n + j] = w;
            gram[j * n + i] = w.conj();
        }
        let d = gram[i * n + i];
        if d.im.abs() > tol.func || d.re < -tol.func {
            return Err(Error::Internal(format!(
                "diagonal weight {d} of atom {i} violates positivity"
            )));
        }
        gram[i * n + i] = Complex64::new(d.re.max(0.0), 0.0);
    }
    Ok(gram)
}

impl BooleanHistoryAlgebra {
    pub fn atom_count(&self) -> usize {
        self.labels.len()
    }

    /// Number of elements of the full Boolean lattice, `2^atoms`.
    pub fn element_count(&self) -> usize {
        1usize << self.atom_count()
    }

    pub fn atoms(&self) -> &AlgebraAtoms {
        &self.atoms
    }

    pub fn atom_label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn ctx(&self) -> &EvolutionContext {
        &self.ctx
    }

    pub fn state(&self) -> &DensityState {
        &self.state
    }

    pub fn alpha(&self) -> Option<AlphaParam> {
        match &self.atoms {
            AlgebraAtoms::Projectors(_) => None,
            AlgebraAtoms::Effects { alpha, .. } => Some(*alpha),
        }
    }

    pub fn support(&self) -> &Support {
        match &self.atoms {
            AlgebraAtoms::Projectors(family) => family.support(),
            AlgebraAtoms::Effects { terms, .. } => terms[0].support(),
        }
    }

    pub fn gram(&self, i: usize, j: usize) -> Complex64 {
        let n = self.atom_count();
        self.gram[i * n + j]
    }

    /// Element from atom indices (duplicates collapse).
    pub fn element(&self, indices: &[usize]) -> Result<Element> {
        let n = self.atom_count();
        let mut atoms = BTreeSet::new();
        for &i in indices {
            if i >= n {
                return Err(Error::NotInCommonAlgebra {
                    detail: format!("atom index {i} exceeds the atom count {n}"),
                });
            }
            atoms.insert(i);
        }
        Ok(Element { atoms })
    }

    pub fn unit_element(&self) -> Element {
        Element {
            atoms: (0..self.atom_count()).collect(),
        }
    }

    pub fn zero_element(&self) -> Element {
        Element {
            atoms: BTreeSet::new(),
        }
    }

    pub fn join(&self, a: &Element, b: &Element) -> Element {
        Element {
            atoms: a.atoms.union(&b.atoms).copied().collect(),
        }
    }

    pub fn meet(&self, a: &Element, b: &Element) -> Element {
        Element {
            atoms: a.atoms.intersection(&b.atoms).copied().collect(),
        }
    }

    /// Complement relative to this algebra's own unit (the full atom set),
    /// which need not be the global identity.
    pub fn neg(&self, a: &Element) -> Element {
        Element {
            atoms: (0..self.atom_count())
                .filter(|i| !a.atoms.contains(i))
                .collect(),
        }
    }

    fn check_element(&self, e: &Element) -> Result<()> {
        let n = self.atom_count();
        if let Some(&max) = e.atoms.iter().next_back() {
            if max >= n {
                return Err(Error::NotInCommonAlgebra {
                    detail: format!("atom index {max} exceeds the atom count {n}"),
                });
            }
        }
        Ok(())
    }

    /// Decoherence value of an element pair: the double gram sum over the
    /// two atom subsets.
    pub fn d_value(&self, a: &Element, b: &Element) -> Result<Complex64> {
        self.check_element(a)?;
        self.check_element(b)?;
        let n = self.atom_count();
        let mut total = Complex64::new(0.0, 0.0);
        for &i in &a.atoms {
            for &j in &b.atoms {
                total += self.gram[i * n + j];
            }
        }
        Ok(total)
    }

    /// Diagonal weight of an element (real part of its self-value).
    pub fn weight(&self, e: &Element) -> Result<f64> {
        Ok(self.d_value(e, e)?.re)
    }

    /// Sum of the element's atom class operators.
    pub fn element_class_operator(&self, e: &Element) -> Result<CMatrix> {
        self.check_element(e)?;
        let mut acc = CMatrix::zeros(self.ctx.dim());
        for &i in &e.atoms {
            acc = acc.add(&self.class_ops[i]);
        }
        Ok(acc)
    }

    /// Operator value of an element, additive over atoms: the embedded
    /// projector sum, or the alpha-sum value of the selected terms.
    pub fn valuation(&self, e: &Element) -> Result<CMatrix> {
        self.check_element(e)?;
        let tol = self.ctx.tol();
        match &self.atoms {
            AlgebraAtoms::Projectors(family) => {
                let support = family.support();
                let tensor_dim = self.ctx.dim().pow(support.len() as u32);
                let mut acc = CMatrix::zeros(tensor_dim);
                for &i in &e.atoms {
                    acc = acc.add(embed(&family.atoms()[i], support, tol)?.op());
                }
                Ok(acc)
            }
            AlgebraAtoms::Effects { alpha, terms } => {
                let selected: Vec<HomogeneousTerm> =
                    e.atoms.iter().map(|&i| terms[i].clone()).collect();
                let dim = terms[0].dim();
                let support = terms[0].support().clone();
                let sum = FormalSum::new(*alpha, dim, support, selected, tol)?;
                sum.value(tol)
            }
        }
    }

    /// Weak-consistency report over all atom pairs of the algebra.
    pub fn weak_consistency(&self, tolerance: f64) -> ConsistencyReport {
        let n = self.atom_count();
        let mut violations = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let r = self.gram[i * n + j].re.abs();
                if r > tolerance {
                    violations.push((i, j, r));
                }
            }
        }
        let passed = violations.is_empty();
        ConsistencyReport {
            mode: ConsistencyMode::Weak,
            tolerance,
            violations,
            passed,
        }
    }
}

/// Outcome of an implication test: the defining weight equalities with
/// their residuals. The join leg is absent for the one-effect-extension
/// variant, which tests only the meet equality.
#[derive(Clone, Debug)]
pub struct ImplicationResult {
    pub holds: bool,
    pub p_meet: f64,
    pub p_left: f64,
    pub p_join: Option<f64>,
    pub p_right: Option<f64>,
    pub meet_residual: f64,
    pub join_residual: Option<f64>,
}

/// Conditional probability `p(h and k) / p(h)` on a weakly consistent
/// algebra with a non-null condition.
pub fn conditional_prob(
    alg: &BooleanHistoryAlgebra,
    h: &Element,
    k: &Element,
    consistency_tol: f64,
) -> Result<f64> {
    let report = alg.weak_consistency(consistency_tol);
    if !report.passed {
        return Err(Error::NotConsistent {
            mode: report.mode.to_string(),
            tolerance: consistency_tol,
            violations: report.violations.len(),
            worst: report.worst_residual(),
        });
    }
    let w_h = alg.weight(h)?;
    if w_h <= alg.ctx().tol().func {
        return Err(Error::ZeroCondition { weight: w_h });
    }
    let w_meet = alg.weight(&alg.meet(h, k))?;
    Ok((w_meet / w_h).max(0.0))
}

/// Implication between two elements of one algebra: the meet must carry the
/// full weight of the left element and the join the full weight of the
/// right one, both references nonzero. Both equalities are evaluated on the
/// raw decoherence values at the given tolerance.
pub fn implies(
    alg: &BooleanHistoryAlgebra,
    u1: &Element,
    u2: &Element,
    tolerance: f64,
) -> Result<ImplicationResult> {
    let meet = alg.meet(u1, u2);
    let join = alg.join(u1, u2);
    let d_meet = alg.d_value(&meet, &meet)?;
    let d_left = alg.d_value(u1, u1)?;
    let d_join = alg.d_value(&join, &join)?;
    let d_right = alg.d_value(u2, u2)?;
    let meet_residual = (d_meet - d_left).norm();
    let join_residual = (d_join - d_right).norm();
    let holds = meet_residual <= tolerance
        && join_residual <= tolerance
        && d_left.re > tolerance
        && d_right.re > tolerance;
    Ok(ImplicationResult {
        holds,
        p_meet: d_meet.re,
        p_left: d_left.re,
        p_join: Some(d_join.re),
        p_right: Some(d_right.re),
        meet_residual,
        join_residual: Some(join_residual),
    })
}

/// Mutual implication.
pub fn equivalent(
    alg: &BooleanHistoryAlgebra,
    u1: &Element,
    u2: &Element,
    tolerance: f64,
) -> Result<bool> {
    Ok(implies(alg, u1, u2, tolerance)?.holds && implies(alg, u2, u1, tolerance)?.holds)
}

/// Greatest lower bound of two commuting effects inside the commutative
/// algebra they generate: the pointwise minimum of the eigenvalue pairs in
/// a joint eigenbasis. Refuses non-commuting pairs, where no canonical meet
/// is available.
pub fn commuting_meet(e1: &Effect, e2: &Effect, tol: &Tolerances) -> Result<Effect> {
    if e1.dim() != e2.dim() {
        return Err(Error::DimensionMismatch {
            left: e1.dim(),
            right: e2.dim(),
        });
    }
    let commutator = e1
        .op()
        .matmul(e2.op())
        .sub(&e2.op().matmul(e1.op()));
    let residual = commutator.max_abs();
    if residual > tol.func {
        return Err(Error::MeetUndefined { residual });
    }
    let n = e1.dim();
    let spec1 = hermitian_eig(e1.op(), tol)?;
    let v = &spec1.eigenvectors;
    let e2_rot = v.adjoint().matmul(e2.op()).matmul(v);

    // Joint diagonalization: within each cluster of equal first eigenvalues
    // the second operator is block diagonal; diagonalize each block.
    let mut rot = CMatrix::zeros(n);
    let mut meet_eigs = vec![0.0_f64; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && spec1.eigenvalues[end] - spec1.eigenvalues[end - 1] <= tol.rank {
            end += 1;
        }
        let m = end - start;
        let mut block = CMatrix::zeros(m);
        for i in 0..m {
            for j in 0..m {
                block.set(i, j, e2_rot[(start + i, start + j)]);
            }
        }
        let spec2 = hermitian_eig(&block, tol)?;
        let lambda = spec1.eigenvalues[start..end].iter().sum::<f64>() / m as f64;
        for k in 0..m {
            meet_eigs[start + k] = lambda.min(spec2.eigenvalues[k]);
            for i in 0..m {
                rot.set(start + i, start + k, spec2.eigenvectors[(i, k)]);
            }
        }
        start = end;
    }
    let basis = v.matmul(&rot);
    let mut diag = CMatrix::zeros(n);
    for (k, &x) in meet_eigs.iter().enumerate() {
        diag.set(k, k, Complex64::new(x, 0.0));
    }
    Effect::new(basis.matmul(&diag).matmul(&basis.adjoint()), tol)
}

/// Implication between two one-effect extensions of a full D-poset's base:
/// holds when the extension by the commuting meet carries the full weight
/// of the left extension, that weight nonzero. Only the meet equality
/// exists here; the join legs are absent.
pub fn implies_full(
    fd: &FullDPoset,
    e1: &Effect,
    e2: &Effect,
    tolerance: f64,
) -> Result<ImplicationResult> {
    let meet = commuting_meet(e1, e2, fd.ctx().tol())?;
    let p_meet = full_dposet_prob(fd, &meet)?;
    let p_left = full_dposet_prob(fd, e1)?;
    let p_right = full_dposet_prob(fd, e2)?;
    let meet_residual = (p_meet - p_left).abs();
    let holds = meet_residual <= tolerance && p_left > tolerance;
    Ok(ImplicationResult {
        holds,
        p_meet,
        p_left,
        p_join: None,
        p_right: Some(p_right),
        meet_residual,
        join_residual: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::Povm;
    use crate::histories::HomogeneousHistory;
    use crate::proj_lattice::family_from_pvms;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn free_ctx(dim: usize) -> EvolutionContext {
        EvolutionContext::new(CMatrix::zeros(dim), 0.0, tol()).unwrap()
    }

    fn basis_pvm(dim: usize) -> Povm {
        let outcomes = (0..dim)
            .map(|i| {
                let mut v = vec![c(0., 0.); dim];
                v[i] = c(1., 0.);
                (format!("e{i}"), Effect::rank_one_projector(&v).unwrap())
            })
            .collect();
        Povm::new(outcomes, &tol()).unwrap()
    }

    fn plusminus_pvm() -> Povm {
        let plus = Effect::rank_one_projector(&[c(1., 0.), c(1., 0.)]).unwrap();
        let minus = Effect::rank_one_projector(&[c(1., 0.), c(-1., 0.)]).unwrap();
        Povm::new(vec![("p".into(), plus), ("m".into(), minus)], &tol()).unwrap()
    }

    fn ket0() -> DensityState {
        DensityState::pure(&[c(1., 0.), c(0., 0.)]).unwrap()
    }

    /// Two-time algebra over the plus/minus basis at both times, H = 0.
    fn plusminus_algebra() -> BooleanHistoryAlgebra {
        let family = family_from_pvms(
            &[(1.0, plusminus_pvm()), (2.0, plusminus_pvm())],
            2,
            &tol(),
        )
        .unwrap();
        build_algebra(AlgebraAtoms::Projectors(family), free_ctx(2), ket0()).unwrap()
    }

    #[test]
    fn single_time_pvm_gives_four_elements() {
        let family = family_from_pvms(&[(1.0, basis_pvm(2))], 2, &tol()).unwrap();
        let alg = build_algebra(
            AlgebraAtoms::Projectors(family),
            free_ctx(2),
            DensityState::maximally_mixed(2),
        )
        .unwrap();
        assert_eq!(alg.atom_count(), 2);
        assert_eq!(alg.element_count(), 4);
        let unit = alg.unit_element();
        let zero = alg.zero_element();
        assert_eq!(alg.neg(&unit), zero);
        let a0 = alg.element(&[0]).unwrap();
        assert_eq!(alg.join(&a0, &alg.neg(&a0)), unit);
        assert_eq!(alg.meet(&a0, &alg.neg(&a0)), zero);
        // Valuation of the unit is the identity on the tensor space.
        let v = alg.valuation(&unit).unwrap();
        assert!(v.max_abs_diff(&CMatrix::identity(2)) < 1e-10);
        assert!(alg.valuation(&zero).unwrap().max_abs() < 1e-12);
        assert!((alg.weight(&unit).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_time_algebra_counts_and_unit_valuation() {
        let alg = plusminus_algebra();
        assert_eq!(alg.atom_count(), 4);
        assert_eq!(alg.element_count(), 16);
        let v = alg.valuation(&alg.unit_element()).unwrap();
        assert!(v.max_abs_diff(&CMatrix::identity(4)) < 1e-8);
    }

    #[test]
    fn duplicate_atoms_fail_family_construction() {
        let p = HomogeneousHistory::new(
            2,
            vec![(1.0, Effect::rank_one_projector(&[c(1., 0.), c(0., 0.)]).unwrap())],
            &tol(),
        )
        .unwrap();
        let support = Support::new(vec![1.0]).unwrap();
        let result = AtomFamily::new(
            support,
            vec![p.clone(), p],
            vec!["x".into(), "y".into()],
            &tol(),
        );
        assert!(matches!(result, Err(Error::NotDisjoint { .. })));
    }

    #[test]
    fn effect_algebra_needs_exact_completeness() {
        let s = Support::new(vec![1.0]).unwrap();
        let e = Effect::new(CMatrix::from_real_diag(&[0.09, 0.64]), &tol()).unwrap();
        let lone = HomogeneousTerm::new(2, s.clone(), vec![e.clone()], &tol()).unwrap();
        let result = build_algebra(
            AlgebraAtoms::Effects {
                alpha: AlphaParam::two(),
                terms: vec![lone.clone()],
            },
            free_ctx(2),
            DensityState::maximally_mixed(2),
        );
        assert!(matches!(result, Err(Error::NotComplete { .. })));

        // sqrt(E) + sqrt(D) = 1 makes {E, D} exactly complete at alpha 2.
        let d = Effect::new(CMatrix::from_real_diag(&[0.49, 0.04]), &tol()).unwrap();
        let other = HomogeneousTerm::new(2, s, vec![d], &tol()).unwrap();
        let alg = build_algebra(
            AlgebraAtoms::Effects {
                alpha: AlphaParam::two(),
                terms: vec![lone, other],
            },
            free_ctx(2),
            DensityState::maximally_mixed(2),
        )
        .unwrap();
        assert_eq!(alg.atom_count(), 2);
        // Valuation of a single atom recovers its tensor operator.
        let v = alg.valuation(&alg.element(&[0]).unwrap()).unwrap();
        assert!(v.max_abs_diff(&CMatrix::from_real_diag(&[0.09, 0.64])) < 1e-9);
    }

    #[test]
    fn conditional_probability_cases() {
        let alg = plusminus_algebra();
        // Atom order from the family product: pp, pm, mp, mm.
        let h = alg.element(&[0, 1]).unwrap();
        let unit = alg.unit_element();
        assert!((conditional_prob(&alg, &h, &unit, 1e-8).unwrap() - 1.0).abs() < 1e-12);
        assert!((conditional_prob(&alg, &h, &h, 1e-8).unwrap() - 1.0).abs() < 1e-12);

        // Repetition of the same projector is certain: given plus at the
        // first time, plus again at the second has probability one.
        let k = alg.element(&[0]).unwrap();
        assert!((conditional_prob(&alg, &h, &k, 1e-8).unwrap() - 1.0).abs() < 1e-10);

        // An atom whose class operator kills the state is a null condition.
        let null = alg.element(&[1]).unwrap();
        assert!(alg.weight(&null).unwrap() < 1e-12);
        assert!(matches!(
            conditional_prob(&alg, &null, &unit, 1e-8),
            Err(Error::ZeroCondition { .. })
        ));
    }

    #[test]
    fn inconsistent_algebra_blocks_conditional_probability() {
        // Plus/minus at the first time, computational basis at the second:
        // interfering branches in the state |0><0|.
        let family = family_from_pvms(
            &[(1.0, plusminus_pvm()), (2.0, basis_pvm(2))],
            2,
            &tol(),
        )
        .unwrap();
        let alg =
            build_algebra(AlgebraAtoms::Projectors(family), free_ctx(2), ket0()).unwrap();
        let h = alg.element(&[0]).unwrap();
        assert!(matches!(
            conditional_prob(&alg, &h, &alg.unit_element(), 1e-8),
            Err(Error::NotConsistent { .. })
        ));
    }

    #[test]
    fn implication_on_elements() {
        let alg = plusminus_algebra();
        let pp = alg.element(&[0]).unwrap();
        let pm = alg.element(&[1]).unwrap();
        let mm = alg.element(&[3]).unwrap();

        // Reflexive on elements of nonzero weight.
        assert!(implies(&alg, &pp, &pp, 1e-8).unwrap().holds);

        // Subset with equal weight: the extra atom is null in this state.
        let padded = alg.join(&pp, &pm);
        let r = implies(&alg, &pp, &padded, 1e-8).unwrap();
        assert!(r.holds);
        assert!((r.p_left - 0.5).abs() < 1e-10);

        // Null left element fails the nonzero-reference requirement.
        assert!(!implies(&alg, &pm, &padded, 1e-8).unwrap().holds);

        // Disjoint elements of positive weight fail the meet equality.
        assert!(!implies(&alg, &pp, &mm, 1e-8).unwrap().holds);

        assert!(equivalent(&alg, &pp, &padded, 1e-8).unwrap());
        assert!(!equivalent(&alg, &pp, &mm, 1e-8).unwrap());
    }

    #[test]
    fn commuting_meet_matches_blockwise_minimum() {
        // Degenerate first spectrum forces the clustered path. On the
        // two-dimensional cluster the second operator has eigenvalues
        // {0.2, 0.4}, both below 0.5, so the meet restricts to it there;
        // on the third axis the first operator's 0.2 wins.
        let mut e2m = CMatrix::zeros(3);
        e2m.set(0, 0, c(0.3, 0.));
        e2m.set(0, 1, c(0.1, 0.));
        e2m.set(1, 0, c(0.1, 0.));
        e2m.set(1, 1, c(0.3, 0.));
        e2m.set(2, 2, c(0.7, 0.));
        let e1 = Effect::new(CMatrix::from_real_diag(&[0.5, 0.5, 0.2]), &tol()).unwrap();
        let e2 = Effect::new(e2m.clone(), &tol()).unwrap();
        let meet = commuting_meet(&e1, &e2, &tol()).unwrap();
        let mut expect = e2m;
        expect.set(2, 2, c(0.2, 0.));
        assert!(meet.op().max_abs_diff(&expect) < 1e-9);

        // Non-commuting pair is refused.
        let plus = Effect::rank_one_projector(&[c(1., 0.), c(1., 0.)]).unwrap();
        let zero_proj = Effect::rank_one_projector(&[c(1., 0.), c(0., 0.)]).unwrap();
        assert!(matches!(
            commuting_meet(&plus, &zero_proj, &tol()),
            Err(Error::MeetUndefined { .. })
        ));
    }

    #[test]
    fn implication_on_full_dposet_extensions() {
        let fd = FullDPoset::new(
            HomogeneousHistory::unit(2),
            1.0,
            free_ctx(2),
            ket0(),
        )
        .unwrap();
        let e1 = Effect::new(CMatrix::from_real_diag(&[0.4, 0.3]), &tol()).unwrap();

        // Reflexive with positive weight.
        assert!(implies_full(&fd, &e1, &e1, 1e-8).unwrap().holds);

        // Below a commuting dominator whose excess the state cannot see.
        let e2 = Effect::new(CMatrix::from_real_diag(&[0.4, 0.9]), &tol()).unwrap();
        let r = implies_full(&fd, &e1, &e2, 1e-8).unwrap();
        assert!(r.holds);
        assert!((r.p_meet - 0.4).abs() < 1e-10);
        assert!((r.p_left - 0.4).abs() < 1e-10);
        assert!((r.p_right.unwrap() - 0.4).abs() < 1e-10);
        assert!(r.p_join.is_none());

        // Reverse direction fails: the meet keeps only 0.4 of 0.4+0 = p(E2).
        // Here p(E2) = 0.4 as well, so reverse actually holds; use a state
        // that separates them instead.
        let rho = DensityState::maximally_mixed(2);
        let fd2 = FullDPoset::new(HomogeneousHistory::unit(2), 1.0, free_ctx(2), rho)
            .unwrap();
        assert!(!implies_full(&fd2, &e2, &e1, 1e-8).unwrap().holds);

        let plus = Effect::rank_one_projector(&[c(1., 0.), c(1., 0.)]).unwrap();
        let zero_proj = Effect::rank_one_projector(&[c(1., 0.), c(0., 0.)]).unwrap();
        assert!(matches!(
            implies_full(&fd, &plus, &zero_proj, 1e-8),
            Err(Error::MeetUndefined { .. })
        ));
    }

    #[test]
    fn valuation_is_modular() {
        let alg = plusminus_algebra();
        let a = alg.element(&[0, 1]).unwrap();
        let b = alg.element(&[1, 2]).unwrap();
        let lhs = alg
            .valuation(&alg.join(&a, &b))
            .unwrap()
            .add(&alg.valuation(&alg.meet(&a, &b)).unwrap());
        let rhs = alg.valuation(&a).unwrap().add(&alg.valuation(&b).unwrap());
        assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }

    #[test]
    fn valuation_of_atom_is_algebra_independent() {
        // The same term sits in two different completions; its valuation is
        // its tensor operator in both.
        let s = Support::new(vec![1.0]).unwrap();
        let shared = HomogeneousTerm::new(
            2,
            s.clone(),
            vec![Effect::new(CMatrix::from_real_diag(&[0.16, 0.25]), &tol()).unwrap()],
            &tol(),
        )
        .unwrap();
        // Roots 0.4, 0.5 leave 0.6, 0.5: close with one term or with two.
        let whole = HomogeneousTerm::new(
            2,
            s.clone(),
            vec![Effect::new(CMatrix::from_real_diag(&[0.36, 0.25]), &tol()).unwrap()],
            &tol(),
        )
        .unwrap();
        let half1 = HomogeneousTerm::new(
            2,
            s.clone(),
            vec![Effect::new(CMatrix::from_real_diag(&[0.01, 0.04]), &tol()).unwrap()],
            &tol(),
        )
        .unwrap();
        let half2 = HomogeneousTerm::new(
            2,
            s,
            vec![Effect::new(CMatrix::from_real_diag(&[0.25, 0.09]), &tol()).unwrap()],
            &tol(),
        )
        .unwrap();
        let rho = DensityState::maximally_mixed(2);
        let alg1 = build_algebra(
            AlgebraAtoms::Effects {
                alpha: AlphaParam::two(),
                terms: vec![shared.clone(), whole],
            },
            free_ctx(2),
            rho.clone(),
        )
        .unwrap();
        let alg2 = build_algebra(
            AlgebraAtoms::Effects {
                alpha: AlphaParam::two(),
                terms: vec![shared.clone(), half1, half2],
            },
            free_ctx(2),
            rho,
        )
        .unwrap();
        let v1 = alg1.valuation(&alg1.element(&[0]).unwrap()).unwrap();
        let v2 = alg2.valuation(&alg2.element(&[0]).unwrap()).unwrap();
        assert!(v1.max_abs_diff(shared.op()) < 1e-9);
        assert!(v2.max_abs_diff(shared.op()) < 1e-9);
    }
}
