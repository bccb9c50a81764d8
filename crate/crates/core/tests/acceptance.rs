//! Acceptance gate. One test per numbered criterion; each prints a single
//! PASS line with its headline numbers, so the suite output reads as a
//! checklist. Seeds are pinned; scale stays at desk size (dim <= 4, up to
//! three time points).

use std::time::Instant;

use histq_core::decoherence::{
    consistency_check, d_matrix, d_weight, probability_measure, sum_rule_check,
    ConsistencyMode,
};
use histq_core::effect_sums::{
    d_hat, d_sum, full_dposet_prob, orderk_additivity_residual, sqrt_duality_check,
    FormalSum, FullDPoset, HomogeneousTerm, OrderKFamily,
};
use histq_core::effects::{
    dposet_axioms, gleason_prob, ominus_alpha, oplus_alpha, AlphaParam, DensityState,
    Effect, Povm,
};
use histq_core::histories::{
    associated_effect, EvolutionContext, HomogeneousHistory, Support,
};
use histq_core::logic::{build_algebra, AlgebraAtoms, BooleanHistoryAlgebra};
use histq_core::numlin::{evolve, pow_psd, CMatrix};
use histq_core::proj_lattice::{class_operator_additive, family_from_pvms};
use histq_core::{Complex64, Tolerances};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_matrix(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, |_, _| {
        c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    })
    .unwrap()
}

fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    let a = random_matrix(rng, dim);
    a.add(&a.adjoint()).scale(c(0.5, 0.0))
}

fn random_psd(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> CMatrix {
    let a = random_matrix(rng, dim);
    let g = a.adjoint().matmul(&a);
    let norm = g.operator_norm();
    if norm <= 0.0 {
        return g;
    }
    g.scale(c(scale / norm, 0.0))
}

fn random_effect(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Effect {
    Effect::new(random_psd(rng, dim, scale), &tol()).unwrap()
}

fn random_density(rng: &mut ChaCha8Rng, dim: usize) -> DensityState {
    let g = random_psd(rng, dim, 1.0);
    let tr = g.trace().re;
    DensityState::new(g.scale(c(1.0 / tr, 0.0)), &tol()).unwrap()
}

fn random_ctx(rng: &mut ChaCha8Rng, dim: usize) -> EvolutionContext {
    let h = random_hermitian(rng, dim).scale(c(rng.gen_range(0.2..2.0), 0.0));
    EvolutionContext::new(h, 0.0, tol()).unwrap()
}

fn random_history(rng: &mut ChaCha8Rng, dim: usize, max_times: usize) -> HomogeneousHistory {
    let n = 1 + rng.gen_range(0..max_times);
    let entries = (0..n)
        .map(|k| {
            let scale = rng.gen_range(0.3..1.0);
            (
                0.3 + k as f64 + rng.gen_range(0.0..0.5),
                random_effect(rng, dim, scale),
            )
        })
        .collect();
    HomogeneousHistory::new(dim, entries, &tol()).unwrap()
}

/// Random orthonormal basis as unitary columns.
fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> CMatrix {
    evolve(&random_hermitian(rng, dim), 0.0, 1.0, &tol()).unwrap()
}

fn basis_projectors(u: &CMatrix) -> Vec<Effect> {
    let dim = u.dim();
    (0..dim)
        .map(|k| {
            let col: Vec<Complex64> = (0..dim).map(|i| u[(i, k)]).collect();
            Effect::rank_one_projector(&col).unwrap()
        })
        .collect()
}

fn pvm_from_unitary(u: &CMatrix) -> Povm {
    let outcomes = basis_projectors(u)
        .into_iter()
        .enumerate()
        .map(|(k, p)| (format!("b{k}"), p))
        .collect();
    Povm::new(outcomes, &tol()).unwrap()
}

/// Two-time projector family that decoheres outright: the state is diagonal
/// in the first-time basis transported back to the fiducial time, so every
/// off-diagonal weight vanishes identically.
fn medium_decoherent_instance(
    rng: &mut ChaCha8Rng,
    dim: usize,
) -> (BooleanHistoryAlgebra, Vec<HomogeneousHistory>) {
    let ctx = random_ctx(rng, dim);
    let (t1, t2) = (0.7, 1.6);
    let u1 = random_unitary(rng, dim);
    let u2 = random_unitary(rng, dim);
    let family =
        family_from_pvms(&[(t1, pvm_from_unitary(&u1)), (t2, pvm_from_unitary(&u2))], dim, &tol())
            .unwrap();
    let mut weights: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let mut d = CMatrix::zeros(dim);
    for (k, p) in basis_projectors(&u1).iter().enumerate() {
        d = d.add(&p.op().scale(c(weights[k], 0.0)));
    }
    let back = ctx.unitary(0.0, t1);
    let rho =
        DensityState::new(back.matmul(&d).matmul(&back.adjoint()), &tol()).unwrap();
    let atoms = family.atoms().to_vec();
    let alg = build_algebra(AlgebraAtoms::Projectors(family), ctx, rho).unwrap();
    (alg, atoms)
}

#[test]
fn criterion_01_functional_laws() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_herm = 0.0_f64;
    for trial in 0..200 {
        let dim = 2 + trial % 3;
        let ctx = random_ctx(&mut rng, dim);
        let rho = random_density(&mut rng, dim);
        let u = random_history(&mut rng, dim, 3);
        let v = random_history(&mut rng, dim, 3);
        let duv = d_weight(&rho, &u, &v, &ctx).unwrap();
        let dvu = d_weight(&rho, &v, &u, &ctx).unwrap();
        let herm = (duv - dvu.conj()).norm();
        worst_herm = worst_herm.max(herm);
        assert!(herm < 1e-9, "instance {trial}: hermiticity {herm}");
        let unit = HomogeneousHistory::unit(dim);
        let d11 = d_weight(&rho, &unit, &unit, &ctx).unwrap();
        assert!((d11 - c(1., 0.)).norm() < 1e-10, "instance {trial}: unit");
        let zero =
            HomogeneousHistory::new(dim, vec![(0.9, Effect::zero(dim))], &tol()).unwrap();
        assert!(
            d_weight(&rho, &zero, &u, &ctx).unwrap().norm() < 1e-12,
            "instance {trial}: zero"
        );
        assert!(
            d_weight(&rho, &u, &u, &ctx).unwrap().re >= -1e-10,
            "instance {trial}: diagonal"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!(
        "criterion 1: PASS (200 instances, worst hermiticity {worst_herm:.2e}, {:.2}s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_02_gleason_bridge() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst = 0.0_f64;
    for trial in 0..200 {
        let dim = 2 + trial % 3;
        let ctx = random_ctx(&mut rng, dim);
        let rho = random_density(&mut rng, dim);
        let u = random_history(&mut rng, dim, 3);
        let diag = d_weight(&rho, &u, &u, &ctx).unwrap().re;
        let f = associated_effect(&u, &ctx).unwrap();
        let p = gleason_prob(&rho, &f, &tol()).unwrap();
        let gap = (diag - p).abs();
        worst = worst.max(gap);
        assert!(gap < 1e-10, "instance {trial}: gap {gap}");
    }
    println!("criterion 2: PASS (200 instances, worst gap {worst:.2e})");
}

#[test]
fn criterion_03_measure_on_decoherent_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst_mod = 0.0_f64;
    for fam_ix in 0..50 {
        let (alg, atoms) = medium_decoherent_instance(&mut rng, 2);
        // Built to decohere: every off-diagonal weight is zero outright.
        let mut members = atoms.clone();
        members.push(HomogeneousHistory::unit(2));
        let dm = d_matrix(alg.state(), &members, alg.ctx()).unwrap();
        let report = consistency_check(&dm, ConsistencyMode::Medium, 1e-9, true).unwrap();
        assert!(report.passed, "family {fam_ix}: not medium consistent");
        let probs = probability_measure(&dm, members.len() - 1, 1e-8).unwrap();
        let atom_sum: f64 = probs[..atoms.len()].iter().sum();
        assert!(
            (atom_sum - 1.0).abs() < 1e-9,
            "family {fam_ix}: measure sums to {atom_sum}"
        );
        for (i, p) in probs.iter().enumerate() {
            assert!((0.0..=1.0).contains(p), "family {fam_ix} member {i}: {p}");
        }
        // Modularity over every pair of lattice elements.
        let n = alg.atom_count();
        let subsets: Vec<Vec<usize>> = (0..(1usize << n))
            .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).collect())
            .collect();
        let weights: Vec<f64> = subsets
            .iter()
            .map(|s| alg.weight(&alg.element(s).unwrap()).unwrap())
            .collect();
        for (ia, sa) in subsets.iter().enumerate() {
            for (ib, sb) in subsets.iter().enumerate() {
                let join: Vec<usize> = (0..n)
                    .filter(|i| sa.contains(i) || sb.contains(i))
                    .collect();
                let meet: Vec<usize> = (0..n)
                    .filter(|i| sa.contains(i) && sb.contains(i))
                    .collect();
                let p_join = alg.weight(&alg.element(&join).unwrap()).unwrap();
                let p_meet = alg.weight(&alg.element(&meet).unwrap()).unwrap();
                let defect = (p_join + p_meet - weights[ia] - weights[ib]).abs();
                worst_mod = worst_mod.max(defect);
                assert!(defect < 1e-9, "family {fam_ix}: modularity {defect}");
            }
        }
    }
    println!("criterion 3: PASS (50 families, worst modularity defect {worst_mod:.2e})");
}

#[test]
fn criterion_04_sum_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let mut worst = 0.0_f64;
    for fam_ix in 0..50 {
        let (alg, _) = medium_decoherent_instance(&mut rng, 2);
        let rho = alg.state().clone();
        let n = alg.atom_count();
        for i in 0..n {
            for j in 0..n {
                let h = alg.element(&[i]).unwrap();
                let k = alg.element(&[j]).unwrap();
                let r = sum_rule_check(&rho, &h, &k, &alg).unwrap();
                worst = worst.max(r);
                assert!(r < 1e-9, "family {fam_ix} atoms ({i},{j}): residual {r}");
            }
        }
        for _ in 0..20 {
            let pick = |rng: &mut ChaCha8Rng| -> Vec<usize> {
                (0..n).filter(|_| rng.gen_bool(0.5)).collect()
            };
            let h = alg.element(&pick(&mut rng)).unwrap();
            let k = alg.element(&pick(&mut rng)).unwrap();
            let r = sum_rule_check(&rho, &h, &k, &alg).unwrap();
            worst = worst.max(r);
            assert!(r < 1e-9, "family {fam_ix}: element residual {r}");
        }
    }

    // Interfering families: two bases rotated against each other, branches
    // reconverging on a common final outcome. The defect must equal the
    // expansion value, twice the real cross weight.
    let mut max_interference = 0.0_f64;
    for fam_ix in 0..20 {
        let dim = 2;
        let ctx = EvolutionContext::new(CMatrix::zeros(dim), 0.0, tol()).unwrap();
        let angle: f64 = rng.gen_range(0.4..1.1);
        let (cs, sn) = (angle.cos(), angle.sin());
        let mut u1 = CMatrix::zeros(dim);
        u1.set(0, 0, c(cs, 0.));
        u1.set(1, 0, c(sn, 0.));
        u1.set(0, 1, c(-sn, 0.));
        u1.set(1, 1, c(cs, 0.));
        let u2 = CMatrix::identity(dim);
        let family = family_from_pvms(
            &[(1.0, pvm_from_unitary(&u1)), (2.0, pvm_from_unitary(&u2))],
            dim,
            &tol(),
        )
        .unwrap();
        let rho = DensityState::pure(&[c(1., 0.), c(0., 0.)]).unwrap();
        let alg = build_algebra(AlgebraAtoms::Projectors(family), ctx, rho.clone()).unwrap();
        // Branches through both first-time outcomes into final outcome 0.
        let h = alg.element(&[0]).unwrap();
        let k = alg.element(&[2]).unwrap();
        let residual = sum_rule_check(&rho, &h, &k, &alg).unwrap();
        let expansion = 2.0 * alg.gram(0, 2).re.abs();
        assert!(
            (residual - expansion).abs() < 1e-9,
            "family {fam_ix}: residual {residual} vs expansion {expansion}"
        );
        assert!(residual > 1e-3, "family {fam_ix}: no interference");
        max_interference = max_interference.max(residual);
    }
    println!(
        "criterion 4: PASS (50 preconsistent worst {worst:.2e}, 20 interfering up to {max_interference:.3})"
    );
}

#[test]
fn criterion_05_dposet_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let alphas = [
        AlphaParam::new(1, 2).unwrap(),
        AlphaParam::one(),
        AlphaParam::two(),
        AlphaParam::new(3, 1).unwrap(),
    ];
    let mut worst = 0.0_f64;
    for alpha in alphas {
        for trial in 0..500 {
            let dim = 2 + trial % 3;
            let lift = |r: &CMatrix| {
                Effect::new(pow_psd(r, alpha.ratio(), &tol()).unwrap(), &tol()).unwrap()
            };
            // Mostly chains (all operations defined), some loose triples
            // (vacuous branches must also behave). Chain spectra are floored
            // away from zero: fractional roots lose digits near a vanishing
            // eigenvalue, which is a property of the exponent map, not of the
            // operations under test.
            let (a, b, cc) = if trial % 10 < 7 {
                let step = |rng: &mut ChaCha8Rng| {
                    random_psd(rng, dim, 0.25)
                        .add(&CMatrix::identity(dim).scale(c(0.03, 0.0)))
                };
                let ra = step(&mut rng);
                let rb = ra.add(&step(&mut rng));
                let rc = rb.add(&step(&mut rng));
                (lift(&ra), lift(&rb), lift(&rc))
            } else {
                (
                    random_effect(&mut rng, dim, 0.9),
                    random_effect(&mut rng, dim, 0.9),
                    random_effect(&mut rng, dim, 0.9),
                )
            };
            let report = dposet_axioms(&a, &b, &cc, &alpha, &tol()).unwrap();
            assert!(report.all_pass(), "alpha {alpha} trial {trial}: {report:?}");
            let w = report.worst_residual();
            worst = worst.max(w);
            assert!(w < 1e-9, "alpha {alpha} trial {trial}: worst {w}");

            // Round trip through the difference wherever a <= b.
            if let Ok(diff) = ominus_alpha(&b, &a, &alpha, &tol()) {
                let back = ominus_alpha(&b, &diff, &alpha, &tol()).unwrap();
                let gap = back.op().max_abs_diff(a.op());
                worst = worst.max(gap);
                assert!(gap < 1e-9, "alpha {alpha} trial {trial}: round trip {gap}");
            }
        }
    }
    println!("criterion 5: PASS (500 triples x 4 alphas, worst residual {worst:.2e})");
}

#[test]
fn criterion_06_projection_collapse() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let alphas = [
        AlphaParam::new(1, 2).unwrap(),
        AlphaParam::one(),
        AlphaParam::two(),
        AlphaParam::new(3, 1).unwrap(),
    ];
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        let dim = 2 + trial % 3;
        let u = random_unitary(&mut rng, dim);
        let projectors = basis_projectors(&u);
        // Disjoint column groups span orthogonal subspaces.
        let split = 1 + rng.gen_range(0..dim.max(2) - 1);
        let mut p1 = CMatrix::zeros(dim);
        for p in &projectors[..split] {
            p1 = p1.add(p.op());
        }
        let mut p2 = CMatrix::zeros(dim);
        for p in &projectors[split..] {
            if rng.gen_bool(0.7) {
                p2 = p2.add(p.op());
            }
        }
        let e1 = Effect::new(p1.clone(), &tol()).unwrap();
        let e2 = Effect::new(p2.clone(), &tol()).unwrap();
        let plain = p1.add(&p2);
        for alpha in alphas {
            let summed = oplus_alpha(&e1, &e2, &alpha, &tol()).unwrap();
            let gap = summed.op().max_abs_diff(&plain);
            worst = worst.max(gap);
            assert!(gap < 1e-10, "trial {trial} alpha {alpha}: gap {gap}");
        }
    }
    println!("criterion 6: PASS (100 orthogonal pairs x 4 alphas, worst gap {worst:.2e})");
}

#[test]
fn criterion_07_full_dposet() {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst_add = 0.0_f64;
    let mut worst_gleason = 0.0_f64;
    for trial in 0..200 {
        let dim = 2 + trial % 3;
        let ctx = random_ctx(&mut rng, dim);
        let rho = random_density(&mut rng, dim);
        let base = random_history(&mut rng, dim, 2);
        let t_star = base.support().final_time().unwrap() + rng.gen_range(0.2..1.0);
        let fd = FullDPoset::new(base, t_star, ctx, rho).unwrap();
        let e1 = random_effect(&mut rng, dim, 0.45);
        let e2 = random_effect(&mut rng, dim, 0.45);
        let summed = Effect::new(e1.op().add(e2.op()), &tol()).unwrap();
        let add_gap = (full_dposet_prob(&fd, &summed).unwrap()
            - full_dposet_prob(&fd, &e1).unwrap()
            - full_dposet_prob(&fd, &e2).unwrap())
        .abs();
        worst_add = worst_add.max(add_gap);
        assert!(add_gap < 1e-9, "trial {trial}: additivity {add_gap}");

        let red = fd.reduced_state().unwrap();
        let via_trace = red.matmul(e1.op()).trace().re;
        let gleason_gap = (full_dposet_prob(&fd, &e1).unwrap() - via_trace).abs();
        worst_gleason = worst_gleason.max(gleason_gap);
        assert!(gleason_gap < 1e-10, "trial {trial}: reduced state {gleason_gap}");

        // Orthogonal projector extensions never interfere.
        let basis = random_unitary(&mut rng, dim);
        let projs = basis_projectors(&basis);
        let w = fd.extension_weight(&projs[0], &projs[1]).unwrap();
        assert!(w.norm() < 1e-10, "trial {trial}: orthogonal weight {w}");
    }

    // A non-orthogonal pair interferes visibly.
    let ctx = EvolutionContext::new(CMatrix::zeros(2), 0.0, tol()).unwrap();
    let rho = DensityState::pure(&[c(1., 0.), c(0., 0.)]).unwrap();
    let fd = FullDPoset::new(HomogeneousHistory::unit(2), 1.0, ctx, rho).unwrap();
    let witness = fd
        .extension_weight(
            &Effect::identity(2),
            &Effect::rank_one_projector(&[c(1., 0.), c(0., 0.)]).unwrap(),
        )
        .unwrap();
    assert!(witness.re.abs() > 0.1, "witness weight {witness}");
    println!(
        "criterion 7: PASS (200 pairs, additivity {worst_add:.2e}, reduced-state {worst_gleason:.2e}, witness {:.2})",
        witness.re
    );
}

#[test]
fn criterion_08_orderk_additivity_and_duality() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        // Sizes chosen so the formal slot count times the local dimension
        // stays inside the small-tensor envelope.
        let k = [1u32, 2, 4][trial % 3];
        let m = if k == 4 { 1 } else { 1 + trial % 2 };
        let dim = if m == 2 || k == 4 { 2 } else { 2 + trial % 2 };
        let ctx = random_ctx(&mut rng, dim);
        let rho = random_density(&mut rng, dim);
        let base = HomogeneousHistory::new(
            dim,
            vec![(0.0, random_effect(&mut rng, dim, 0.9))],
            &tol(),
        )
        .unwrap();
        let fam = OrderKFamily::auto_grid(base, k, m, 0.3, ctx, rho).unwrap();
        let scale = match k {
            1 => 0.2,
            2 => 0.45,
            _ => 0.65,
        };
        let e = random_effect(&mut rng, dim, scale);
        let d = random_effect(&mut rng, dim, scale);
        let rest: Vec<Effect> = (1..m).map(|_| random_effect(&mut rng, dim, 0.8)).collect();
        let probe: Vec<Effect> = (0..m).map(|_| random_effect(&mut rng, dim, 0.8)).collect();
        let r = orderk_additivity_residual(&fam, 0, &e, &d, &rest, &probe, &tol()).unwrap();
        worst = worst.max(r);
        assert!(r < 1e-9, "trial {trial} k={k}: residual {r}");
    }

    let mut agreements = 0;
    for trial in 0..200 {
        let dim = 2 + trial % 3;
        let support = Support::new(vec![1.0]).unwrap();
        let scale = [0.2, 0.5, 0.9, 1.0][trial % 4];
        let single = |e: Effect| {
            FormalSum::single(
                AlphaParam::two(),
                HomogeneousTerm::new(dim, support.clone(), vec![e], &tol()).unwrap(),
                &tol(),
            )
            .unwrap()
        };
        let a = single(random_effect(&mut rng, dim, scale));
        let b = single(random_effect(&mut rng, dim, scale));
        assert!(
            sqrt_duality_check(&a, &b, &tol()).unwrap(),
            "trial {trial}: routes disagree"
        );
        agreements += 1;
    }
    println!(
        "criterion 8: PASS (100 instances worst residual {worst:.2e}, {agreements}/200 duality agreements)"
    );
}

#[test]
fn criterion_09_projector_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let mut worst_pair = 0.0_f64;
    for trial in 0..100 {
        let dim = 2 + trial % 3;
        let ctx = random_ctx(&mut rng, dim);
        let rho = random_density(&mut rng, dim);
        // Projector histories on a shared two-time support.
        let support = Support::new(vec![0.6, 1.7]).unwrap();
        let rand_proj_pair = |rng: &mut ChaCha8Rng| {
            let u = random_unitary(rng, dim);
            let ps = basis_projectors(&u);
            let ix = rng.gen_range(0..dim);
            ps[ix].clone()
        };
        let term_of = |f1: Effect, f2: Effect| {
            HomogeneousTerm::new(dim, support.clone(), vec![f1, f2], &tol()).unwrap()
        };
        let ta = term_of(
            rand_proj_pair(&mut rng),
            rand_proj_pair(&mut rng),
        );
        let tb = term_of(
            rand_proj_pair(&mut rng),
            rand_proj_pair(&mut rng),
        );
        let direct = d_hat(&rho, &ta, &tb, &ctx).unwrap();
        let via_histories = d_weight(
            &rho,
            &ta.to_history(&tol()).unwrap(),
            &tb.to_history(&tol()).unwrap(),
            &ctx,
        )
        .unwrap();
        let gap = (direct - via_histories).norm();
        worst_pair = worst_pair.max(gap);
        assert!(gap < 1e-10, "trial {trial}: route gap {gap}");

        // Multi-term sums against the batched gram.
        let u1 = random_unitary(&mut rng, dim);
        let u2 = random_unitary(&mut rng, dim);
        let (p1, p2) = (basis_projectors(&u1), basis_projectors(&u2));
        let sum_a = FormalSum::new(
            AlphaParam::two(),
            dim,
            support.clone(),
            (0..dim)
                .map(|i| term_of(p1[i].clone(), p2[0].clone()))
                .collect(),
            &tol(),
        )
        .unwrap();
        let sum_b = FormalSum::new(
            AlphaParam::two(),
            dim,
            support.clone(),
            (0..dim)
                .map(|i| term_of(p1[i].clone(), p2[1].clone()))
                .collect(),
            &tol(),
        )
        .unwrap();
        let lhs = d_sum(&rho, &sum_a, &sum_b, &ctx).unwrap();
        let members: Vec<HomogeneousHistory> = sum_a
            .terms()
            .iter()
            .chain(sum_b.terms())
            .map(|t| t.to_history(&tol()).unwrap())
            .collect();
        let dm = d_matrix(&rho, &members, &ctx).unwrap();
        let mut rhs = c(0., 0.);
        for i in 0..dim {
            for j in 0..dim {
                rhs += dm.gram(i, dim + j);
            }
        }
        let sum_gap = (lhs - rhs).norm();
        worst_pair = worst_pair.max(sum_gap);
        assert!(sum_gap < 1e-10, "trial {trial}: sum gap {sum_gap}");
    }

    // Additive class operators resolve the identity on full families.
    let mut worst_resolution = 0.0_f64;
    for trial in 0..50 {
        let dim = 2 + trial % 3;
        let ctx = random_ctx(&mut rng, dim);
        let family = family_from_pvms(
            &[
                (0.8, pvm_from_unitary(&random_unitary(&mut rng, dim))),
                (1.9, pvm_from_unitary(&random_unitary(&mut rng, dim))),
            ],
            dim,
            &tol(),
        )
        .unwrap();
        let all: Vec<usize> = (0..family.atoms().len()).collect();
        let total = class_operator_additive(&family, &all, &ctx).unwrap();
        let gap = total.max_abs_diff(&CMatrix::identity(dim));
        worst_resolution = worst_resolution.max(gap);
        assert!(gap < 1e-9, "trial {trial}: resolution gap {gap}");
    }
    println!(
        "criterion 9: PASS (routes agree to {worst_pair:.2e}, identity resolution to {worst_resolution:.2e})"
    );
}
