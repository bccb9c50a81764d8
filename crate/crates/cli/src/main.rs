//! Command-line front end. Reads one scenario document, runs one command
//! against it, and emits a schema-versioned JSON report on stdout (optionally
//! mirrored to a file). Exit codes: 0 success, 2 validation error, 3 refusal
//! on an interfering family, 4 numerical failure.

mod report;
mod scenario;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use histq_core::decoherence::{consistency_check, d_matrix, ConsistencyMode};
use histq_core::effect_sums::{
    full_dposet_prob, orderk_additivity_residual, FullDPoset, HomogeneousTerm, OrderKFamily,
};
use histq_core::effects::{dposet_axioms, AlphaParam, AxiomOutcome, Effect};
use histq_core::histories::{HomogeneousHistory, Support};
use histq_core::logic::{build_algebra, implies, AlgebraAtoms};
use histq_core::proj_lattice::AtomFamily;
use histq_core::{Error as CoreError, Tolerances};

use report::{
    AxiomRow, ConsistencyPayload, DPosetLawsPayload, DecoherencePayload, ExtensionRow,
    FullDPosetPayload, ImplicationRow, ImpliesPayload, MatrixValue, OrderkPayload, Payload,
    ProbsPayload, RefusalPayload, Report, ValidatePayload, ViolationRow,
};
use scenario::Scenario;

const DEFAULT_TOLERANCE: f64 = 1e-8;
const TOLERANCE_ENV: &str = "HISTQ_TOLERANCE";

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Command {
    /// Parse the scenario and validate every declared ingredient
    Validate,
    /// Pairwise weight matrix of a family
    Decoherence,
    /// Weak or medium consistency report for a family
    Consistency,
    /// Probability measure from a consistent family's diagonal
    Probs,
    /// Implication verdicts between family members
    Implies,
    /// One-effect extension probabilities for listed effects
    FullDposet,
    /// Additivity residual for block insertions of listed effects
    Orderk,
    /// Difference-poset axiom report on a triple of listed effects
    DposetLaws,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Decoherence => "decoherence",
            Command::Consistency => "consistency",
            Command::Probs => "probs",
            Command::Implies => "implies",
            Command::FullDposet => "full-dposet",
            Command::Orderk => "orderk",
            Command::DposetLaws => "dposet-laws",
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Weak,
    Medium,
}

#[derive(Parser)]
#[command(
    name = "histq",
    version,
    about = "Evaluates decoherence weights, consistency, probability measures, \
             and effect-algebra laws over scenario files"
)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Scenario document (JSON)
    #[arg(long)]
    scenario: PathBuf,
    /// Tolerance for consistency checks and verdicts; falls back to the
    /// scenario value, then the HISTQ_TOLERANCE variable, then 1e-8
    #[arg(long)]
    tolerance: Option<f64>,
    /// Sum-scaling parameter as p or p/q; overrides the scenario value
    #[arg(long)]
    alpha: Option<String>,
    /// Family the command operates on
    #[arg(long)]
    family: Option<String>,
    /// Consistency mode (default weak)
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Also write the report to this path
    #[arg(long)]
    json: Option<PathBuf>,
    /// probs only: emit raw diagonal weights even when the family interferes
    #[arg(long)]
    force: bool,
}

enum Failure {
    Validation(String),
    Numerical(String),
}

enum Outcome {
    Done(Payload),
    Refused(Payload),
}

type CmdResult = Result<Outcome, Failure>;

/// Input-shaped core errors are validation failures; the rest are numerical.
fn classify(e: CoreError) -> Failure {
    match &e {
        CoreError::NotDisjoint { .. }
        | CoreError::NotComplete { .. }
        | CoreError::TimeNotAfterFinal { .. }
        | CoreError::DimensionMismatch { .. }
        | CoreError::SlotMismatch { .. }
        | CoreError::SupportMismatch { .. }
        | CoreError::DimensionCap { .. }
        | CoreError::NotHermitian { .. }
        | CoreError::NotPsd { .. }
        | CoreError::NotEffect { .. }
        | CoreError::NotState { .. }
        | CoreError::NotProjectorHistory { .. }
        | CoreError::NotProjectiveMeasurement { .. }
        | CoreError::AlphaMismatch { .. }
        | CoreError::Invalid(_) => Failure::Validation(e.to_string()),
        _ => Failure::Numerical(e.to_string()),
    }
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let raw = match std::fs::read(&cli.scenario) {
        Ok(bytes) => bytes,
        Err(e) => {
            eprintln!("error: scenario {}: {e}", cli.scenario.display());
            return 2;
        }
    };
    let sc = match Scenario::load(raw) {
        Ok(sc) => sc,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let tolerance = match effective_tolerance(&cli, &sc) {
        Ok(t) => t,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let alpha = match cli.alpha.as_deref().map(scenario::parse_alpha).transpose() {
        Ok(flag_alpha) => flag_alpha.or(sc.alpha),
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };

    let result = dispatch(&cli, &sc, tolerance, alpha);
    let (payload, code) = match result {
        Ok(Outcome::Done(p)) => (p, 0),
        Ok(Outcome::Refused(p)) => (p, 3),
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            return 2;
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            return 4;
        }
    };

    let doc = Report {
        schema: report::SCHEMA,
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name().into(),
        inputs_digest: report::inputs_digest(&sc.raw, &canonical_params(&cli, tolerance, alpha)),
        tolerance,
        payload,
    };
    let text = report::render(&doc);
    print!("{text}");
    if let Some(path) = &cli.json {
        if let Err(e) = std::fs::write(path, &text) {
            eprintln!("error: writing {}: {e}", path.display());
            return 2;
        }
    }
    eprintln!("{}", summary(&doc));
    code
}

fn effective_tolerance(cli: &Cli, sc: &Scenario) -> Result<f64, String> {
    let from_env = match std::env::var(TOLERANCE_ENV) {
        Ok(text) => Some(
            text.trim()
                .parse::<f64>()
                .map_err(|_| format!("{TOLERANCE_ENV}: bad value {text:?}"))?,
        ),
        Err(_) => None,
    };
    let t = cli
        .tolerance
        .or(sc.consistency_tol)
        .or(from_env)
        .unwrap_or(DEFAULT_TOLERANCE);
    if !(t.is_finite() && t > 0.0) {
        return Err(format!("tolerance must be positive, got {t}"));
    }
    Ok(t)
}

fn canonical_params(cli: &Cli, tolerance: f64, alpha: Option<AlphaParam>) -> String {
    format!(
        "command={};family={};mode={};alpha={};tolerance={:?};force={}",
        cli.command.name(),
        cli.family.as_deref().unwrap_or(""),
        cli.mode.map_or("", |m| match m {
            Mode::Weak => "weak",
            Mode::Medium => "medium",
        }),
        alpha.map_or(String::new(), |a| a.to_string()),
        tolerance,
        cli.force,
    )
}

fn dispatch(cli: &Cli, sc: &Scenario, tolerance: f64, alpha: Option<AlphaParam>) -> CmdResult {
    match cli.command {
        Command::Validate => Ok(Outcome::Done(Payload::Validate(ValidatePayload {
            dim: sc.dim,
            effects: sc.effects.len(),
            histories: sc.histories.len(),
            families: sc.families.len(),
            verdict: "ok".into(),
        }))),
        Command::Decoherence => cmd_decoherence(cli, sc),
        Command::Consistency => cmd_consistency(cli, sc, tolerance),
        Command::Probs => cmd_probs(cli, sc, tolerance),
        Command::Implies => cmd_implies(cli, sc, tolerance, alpha),
        Command::FullDposet => cmd_full_dposet(cli, sc),
        Command::Orderk => cmd_orderk(cli, sc, tolerance),
        Command::DposetLaws => cmd_dposet_laws(cli, sc, tolerance, alpha),
    }
}

/// Picks the working family: the `--family` flag, or the scenario's only
/// family when the flag is absent and the choice is unambiguous.
fn pick_family<'a>(cli: &'a Cli, sc: &'a Scenario) -> Result<&'a str, Failure> {
    match cli.family.as_deref() {
        Some(name) => {
            sc.family(name).map_err(Failure::Validation)?;
            Ok(name)
        }
        None if sc.families.len() == 1 => {
            Ok(sc.families.keys().next().unwrap().as_str())
        }
        None => Err(Failure::Validation(
            "this command needs --family (the scenario declares none or several)".into(),
        )),
    }
}

/// Resolves the working family to its name, member names, and member
/// histories.
fn family_members(
    cli: &Cli,
    sc: &Scenario,
) -> Result<(String, Vec<String>, Vec<HomogeneousHistory>), Failure> {
    let name = pick_family(cli, sc)?;
    let fam = sc.family(name).map_err(Failure::Validation)?;
    if fam.members.is_empty() {
        return Err(Failure::Validation(format!(
            "family {name:?} has no members"
        )));
    }
    let histories = fam.members.iter().map(|m| sc.history(m).clone()).collect();
    Ok((name.into(), fam.members.clone(), histories))
}

fn violation_rows(violations: &[(usize, usize, f64)]) -> Vec<ViolationRow> {
    violations
        .iter()
        .map(|&(i, j, residual)| ViolationRow { i, j, residual })
        .collect()
}

fn cmd_decoherence(cli: &Cli, sc: &Scenario) -> CmdResult {
    let (family, members, histories) = family_members(cli, sc)?;
    let dm = d_matrix(&sc.state, &histories, &sc.ctx).map_err(classify)?;
    let n = dm.len();
    let grid = |f: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<f64>> {
        (0..n).map(|i| (0..n).map(|j| f(i, j)).collect()).collect()
    };
    Ok(Outcome::Done(Payload::Decoherence(DecoherencePayload {
        family,
        members,
        matrix: MatrixValue {
            re: grid(&|i, j| dm.gram(i, j).re),
            im: grid(&|i, j| dm.gram(i, j).im),
        },
    })))
}

fn cmd_consistency(cli: &Cli, sc: &Scenario, tolerance: f64) -> CmdResult {
    let (family, _, histories) = family_members(cli, sc)?;
    let mode = match cli.mode.unwrap_or(Mode::Weak) {
        Mode::Weak => ConsistencyMode::Weak,
        Mode::Medium => ConsistencyMode::Medium,
    };
    let dm = d_matrix(&sc.state, &histories, &sc.ctx).map_err(classify)?;
    let rep = consistency_check(&dm, mode, tolerance, false).map_err(classify)?;
    Ok(Outcome::Done(Payload::Consistency(ConsistencyPayload {
        family,
        mode: match mode {
            ConsistencyMode::Weak => "weak".into(),
            ConsistencyMode::Medium => "medium".into(),
        },
        passed: rep.passed,
        violations: violation_rows(&rep.violations),
        worst_residual: rep.worst_residual(),
    })))
}

fn cmd_probs(cli: &Cli, sc: &Scenario, tolerance: f64) -> CmdResult {
    let (family, mut names, mut histories) = family_members(cli, sc)?;
    let member_count = names.len();

    if cli.force {
        let dm = d_matrix(&sc.state, &histories, &sc.ctx).map_err(classify)?;
        let probabilities = (0..dm.len()).map(|i| dm.gram(i, i).re).collect();
        return Ok(Outcome::Done(Payload::Probs(ProbsPayload {
            family,
            members: names,
            unit: None,
            unit_weight: None,
            probabilities,
            label: Some("not a probability measure".into()),
        })));
    }

    let fam = sc.family(&family).map_err(Failure::Validation)?;
    let (unit_name, unit_index) = match &fam.unit {
        Some(unit) => match names.iter().position(|n| n == unit) {
            Some(ix) => (unit.clone(), ix),
            None => {
                names.push(unit.clone());
                histories.push(sc.history(unit).clone());
                (unit.clone(), names.len() - 1)
            }
        },
        None => {
            names.push("1".into());
            histories.push(HomogeneousHistory::unit(sc.dim));
            ("1".into(), names.len() - 1)
        }
    };

    let dm = d_matrix(&sc.state, &histories, &sc.ctx).map_err(classify)?;
    let tol = sc.ctx.tol();
    let all_projector = histories.iter().all(|h| h.is_projector_history(tol));
    let rep =
        consistency_check(&dm, ConsistencyMode::Weak, tolerance, all_projector).map_err(classify)?;
    if !rep.passed {
        return Ok(Outcome::Refused(Payload::Refusal(RefusalPayload {
            family,
            refusal: "family interferes at the working tolerance; probabilities refused".into(),
            mode: "weak".into(),
            violations: violation_rows(&rep.violations),
            worst_residual: rep.worst_residual(),
        })));
    }

    let probs =
        histq_core::decoherence::probability_measure(&dm, unit_index, tolerance).map_err(classify)?;
    Ok(Outcome::Done(Payload::Probs(ProbsPayload {
        family,
        members: names[..member_count].to_vec(),
        unit: Some(unit_name),
        unit_weight: Some(dm.gram(unit_index, unit_index).re),
        probabilities: probs[..member_count].to_vec(),
        label: None,
    })))
}

fn cmd_implies(
    cli: &Cli,
    sc: &Scenario,
    tolerance: f64,
    alpha: Option<AlphaParam>,
) -> CmdResult {
    let (family, names, histories) = family_members(cli, sc)?;
    let tol = Tolerances::default();
    let union = histories
        .iter()
        .fold(Support::new(Vec::new()).unwrap(), |acc, h| {
            acc.union(h.support())
        });
    // Pad every member onto the union support so they share one slot grid;
    // identity fill leaves the physics untouched.
    let padded: Vec<HomogeneousHistory> = histories
        .iter()
        .map(|h| {
            let entries = union
                .times()
                .iter()
                .map(|&t| {
                    (
                        t,
                        h.effect_at(t)
                            .cloned()
                            .unwrap_or_else(|| Effect::identity(sc.dim)),
                    )
                })
                .collect();
            HomogeneousHistory::new(sc.dim, entries, &tol)
        })
        .collect::<Result<_, _>>()
        .map_err(classify)?;

    let all_projector = padded.iter().all(|h| h.is_projector_history(&tol));
    let atoms = if all_projector {
        AlgebraAtoms::Projectors(
            AtomFamily::new(union, padded, names.clone(), &tol).map_err(classify)?,
        )
    } else {
        let alpha = alpha.ok_or_else(|| {
            Failure::Validation("effect families need --alpha or a scenario alpha".into())
        })?;
        let terms = padded
            .iter()
            .map(|h| {
                let factors = h.entries().map(|(_, e)| e.clone()).collect();
                HomogeneousTerm::new(sc.dim, union.clone(), factors, &tol)
            })
            .collect::<Result<_, _>>()
            .map_err(classify)?;
        AlgebraAtoms::Effects { alpha, terms }
    };

    let alg = build_algebra(atoms, sc.ctx.clone(), sc.state.clone()).map_err(classify)?;
    let consistency = alg.weak_consistency(tolerance);
    if !consistency.passed {
        return Ok(Outcome::Refused(Payload::Refusal(RefusalPayload {
            family,
            refusal: "family interferes at the working tolerance; implication refused".into(),
            mode: "weak".into(),
            violations: violation_rows(&consistency.violations),
            worst_residual: consistency.worst_residual(),
        })));
    }

    let mut pairs = Vec::new();
    for i in 0..alg.atom_count() {
        for j in 0..alg.atom_count() {
            if i == j {
                continue;
            }
            let left = alg.element(&[i]).map_err(classify)?;
            let right = alg.element(&[j]).map_err(classify)?;
            let verdict = implies(&alg, &left, &right, tolerance).map_err(classify)?;
            pairs.push(ImplicationRow {
                left: names[i].clone(),
                right: names[j].clone(),
                holds: verdict.holds,
                p_meet: verdict.p_meet,
                p_left: verdict.p_left,
                p_right: verdict.p_right,
                meet_residual: verdict.meet_residual,
                join_residual: verdict.join_residual,
            });
        }
    }
    Ok(Outcome::Done(Payload::Implies(ImpliesPayload {
        family,
        members: names,
        pairs,
    })))
}

fn cmd_full_dposet(cli: &Cli, sc: &Scenario) -> CmdResult {
    let name = pick_family(cli, sc)?;
    let fam = sc.family(name).map_err(Failure::Validation)?;
    let t_star = fam.t_star.ok_or_else(|| {
        Failure::Validation(format!("family {name:?} needs t_star for this command"))
    })?;
    if fam.effects.is_empty() {
        return Err(Failure::Validation(format!(
            "family {name:?} lists no effects to extend with"
        )));
    }
    let (base_name, base) = match &fam.base {
        Some(b) => (b.clone(), sc.history(b).clone()),
        None => ("1".into(), HomogeneousHistory::unit(sc.dim)),
    };
    let fd = FullDPoset::new(base, t_star, sc.ctx.clone(), sc.state.clone()).map_err(classify)?;
    let rows = fam
        .effects
        .iter()
        .map(|e| {
            full_dposet_prob(&fd, sc.effect(e)).map(|probability| ExtensionRow {
                effect: e.clone(),
                probability,
            })
        })
        .collect::<Result<_, _>>()
        .map_err(classify)?;
    Ok(Outcome::Done(Payload::FullDPoset(FullDPosetPayload {
        family: name.into(),
        base: base_name,
        t_star,
        rows,
    })))
}

fn cmd_orderk(cli: &Cli, sc: &Scenario, tolerance: f64) -> CmdResult {
    let name = pick_family(cli, sc)?;
    let fam = sc.family(name).map_err(Failure::Validation)?;
    if fam.effects.len() < 2 {
        return Err(Failure::Validation(format!(
            "family {name:?} needs two effects to sum"
        )));
    }
    let base = match &fam.base {
        Some(b) => sc.history(b).clone(),
        None => HomogeneousHistory::unit(sc.dim),
    };
    let k = fam.k.unwrap_or(1);
    let blocks = fam.blocks.unwrap_or(1);
    if blocks == 0 {
        return Err(Failure::Validation(format!(
            "family {name:?}: blocks must be positive"
        )));
    }
    let half_width = fam.half_width.unwrap_or(0.3);
    let grid = OrderKFamily::auto_grid(
        base,
        k,
        blocks,
        half_width,
        sc.ctx.clone(),
        sc.state.clone(),
    )
    .map_err(classify)?;
    let e = sc.effect(&fam.effects[0]).clone();
    let d = sc.effect(&fam.effects[1]).clone();
    let rest = vec![Effect::identity(sc.dim); blocks - 1];
    let probe = vec![Effect::identity(sc.dim); blocks];
    let residual = orderk_additivity_residual(&grid, 0, &e, &d, &rest, &probe, sc.ctx.tol())
        .map_err(classify)?;
    Ok(Outcome::Done(Payload::Orderk(OrderkPayload {
        family: name.into(),
        k,
        blocks,
        summands: fam.effects[..2].to_vec(),
        residual,
        additive: residual <= tolerance,
    })))
}

fn cmd_dposet_laws(
    cli: &Cli,
    sc: &Scenario,
    tolerance: f64,
    alpha: Option<AlphaParam>,
) -> CmdResult {
    let name = pick_family(cli, sc)?;
    let fam = sc.family(name).map_err(Failure::Validation)?;
    if fam.effects.len() < 3 {
        return Err(Failure::Validation(format!(
            "family {name:?} needs three effects for the axiom triple"
        )));
    }
    let alpha = alpha.ok_or_else(|| {
        Failure::Validation("this command needs --alpha or a scenario alpha".into())
    })?;
    let tol = Tolerances {
        func: tolerance,
        ..Tolerances::default()
    };
    let triple: Vec<String> = fam.effects[..3].to_vec();
    let rep = dposet_axioms(
        sc.effect(&triple[0]),
        sc.effect(&triple[1]),
        sc.effect(&triple[2]),
        &alpha,
        &tol,
    )
    .map_err(classify)?;
    let row = |axiom: &str, outcome: &AxiomOutcome| -> AxiomRow {
        let (text, residual) = match outcome {
            AxiomOutcome::Holds { residual } => ("holds", Some(*residual)),
            AxiomOutcome::Fails { residual } => ("fails", Some(*residual)),
            AxiomOutcome::Vacuous => ("vacuous", None),
        };
        AxiomRow {
            axiom: axiom.into(),
            outcome: text.into(),
            residual,
        }
    };
    Ok(Outcome::Done(Payload::DPosetLaws(DPosetLawsPayload {
        family: name.into(),
        alpha: alpha.to_string(),
        triple,
        axioms: vec![
            row("defined_iff_leq", &rep.defined_iff_leq),
            row("difference_below", &rep.difference_below),
            row("double_difference", &rep.double_difference),
            row("chain_reversal", &rep.chain_reversal),
            row("chain_difference", &rep.chain_difference),
        ],
        all_pass: rep.all_pass(),
        worst_residual: rep.worst_residual(),
    })))
}

fn summary(doc: &Report) -> String {
    match &doc.payload {
        Payload::Validate(p) => format!(
            "ok: dim {}, {} effects, {} histories, {} families",
            p.dim, p.effects, p.histories, p.families
        ),
        Payload::Decoherence(p) => {
            format!("decoherence: family {:?}, {} members", p.family, p.members.len())
        }
        Payload::Consistency(p) => {
            if p.passed {
                format!("{} consistency: passed (worst {:e})", p.mode, p.worst_residual)
            } else {
                format!(
                    "{} consistency: {} violations, worst {:e}",
                    p.mode,
                    p.violations.len(),
                    p.worst_residual
                )
            }
        }
        Payload::Probs(p) => match &p.label {
            Some(label) => format!("raw diagonal weights ({label}): {:?}", p.probabilities),
            None => format!("measure: {:?}", p.probabilities),
        },
        Payload::Refusal(p) => format!(
            "refused: {} ({} violations, worst {:e})",
            p.refusal,
            p.violations.len(),
            p.worst_residual
        ),
        Payload::Implies(p) => {
            let holding = p.pairs.iter().filter(|r| r.holds).count();
            format!("implies: {holding} of {} ordered pairs hold", p.pairs.len())
        }
        Payload::FullDPoset(p) => format!(
            "full-dposet: {} extensions of {:?} at t*={}",
            p.rows.len(),
            p.base,
            p.t_star
        ),
        Payload::Orderk(p) => format!(
            "orderk: k={}, blocks={}, residual {:e}",
            p.k, p.blocks, p.residual
        ),
        Payload::DPosetLaws(p) => {
            if p.all_pass {
                format!("dposet-laws: all axioms hold (worst {:e})", p.worst_residual)
            } else {
                "dposet-laws: axiom failure".into()
            }
        }
    }
}
