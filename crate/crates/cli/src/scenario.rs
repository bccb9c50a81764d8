//! Scenario file model: a single JSON document declaring the physical setup
//! (dimension, Hamiltonian, initial state) and named ingredients (effects,
//! histories, families) that commands refer to. Loading resolves every name
//! and validates every matrix for its declared role, so commands downstream
//! work with checked core types only.

use std::collections::BTreeMap;

use histq_core::effects::{AlphaParam, DensityState, Effect};
use histq_core::histories::{EvolutionContext, HomogeneousHistory};
use histq_core::numlin::CMatrix;
use histq_core::{Complex64, Tolerances};
use serde::Deserialize;

/// Dense complex matrix as two real grids. The imaginary grid may be left
/// out for real matrices.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixGrid {
    pub re: Vec<Vec<f64>>,
    #[serde(default)]
    pub im: Option<Vec<Vec<f64>>>,
}

/// Either a constructor string or an explicit matrix.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Text(String),
    Grid(MatrixGrid),
}

/// One step of a history: the effect applied at a time point.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub t: f64,
    pub effect: String,
}

/// Named group of scenario ingredients that a command operates on. Fields
/// beyond `members` configure the extension-style commands.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(default)]
    pub members: Vec<String>,
    /// History playing the unit when normalizing a measure.
    pub unit: Option<String>,
    /// Base history for extension commands; the trivial history if absent.
    pub base: Option<String>,
    /// Extension time for the one-effect extension table.
    pub t_star: Option<f64>,
    /// Effect names consumed by extension and axiom commands.
    #[serde(default)]
    pub effects: Vec<String>,
    /// Points per insertion block.
    pub k: Option<u32>,
    /// Number of insertion blocks.
    pub blocks: Option<usize>,
    /// Half-width of each insertion block on the automatic grid.
    pub half_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSpec {
    /// Default consistency tolerance for this scenario.
    pub consistency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub dim: usize,
    pub fiducial_time: f64,
    pub hamiltonian: MatrixGrid,
    pub initial_state: OperatorSpec,
    #[serde(default)]
    pub effects: BTreeMap<String, OperatorSpec>,
    #[serde(default)]
    pub histories: BTreeMap<String, Vec<HistoryEntry>>,
    #[serde(default)]
    pub families: BTreeMap<String, FamilySpec>,
    pub alpha: Option<String>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
}

/// Fully resolved scenario: every name checked, every matrix validated.
#[derive(Debug)]
pub struct Scenario {
    pub dim: usize,
    pub ctx: EvolutionContext,
    pub state: DensityState,
    pub effects: BTreeMap<String, Effect>,
    pub histories: BTreeMap<String, HomogeneousHistory>,
    pub families: BTreeMap<String, FamilySpec>,
    pub alpha: Option<AlphaParam>,
    pub consistency_tol: Option<f64>,
    /// Raw document bytes, hashed into the report's input digest.
    pub raw: Vec<u8>,
}

fn grid_to_matrix(grid: &MatrixGrid, dim: usize, role: &str) -> Result<CMatrix, String> {
    let check_shape = |g: &Vec<Vec<f64>>, part: &str| -> Result<(), String> {
        if g.len() != dim || g.iter().any(|row| row.len() != dim) {
            return Err(format!("{role}: {part} grid is not {dim} x {dim}"));
        }
        Ok(())
    };
    check_shape(&grid.re, "re")?;
    if let Some(im) = &grid.im {
        check_shape(im, "im")?;
    }
    CMatrix::from_fn(dim, |i, j| {
        let im = grid.im.as_ref().map_or(0.0, |g| g[i][j]);
        Complex64::new(grid.re[i][j], im)
    })
    .map_err(|e| format!("{role}: {e}"))
}

/// Parses one complex literal: `1`, `-0.5`, `0.3+0.7i`, `-2i`, `i`.
fn parse_complex(token: &str) -> Result<Complex64, String> {
    let s = token.trim();
    if s.is_empty() {
        return Err("empty coefficient".into());
    }
    let Some(body) = s.strip_suffix(['i', 'I']) else {
        return s
            .parse::<f64>()
            .map(|re| Complex64::new(re, 0.0))
            .map_err(|_| format!("bad coefficient {s:?}"));
    };
    // Split the imaginary tail off at the last sign that is not a leading
    // sign and not part of an exponent.
    let split = body
        .char_indices()
        .rev()
        .find(|(i, c)| {
            matches!(c, '+' | '-')
                && *i > 0
                && !matches!(body.as_bytes()[i - 1], b'e' | b'E')
        })
        .map(|(i, _)| i);
    let (re_part, im_part) = match split {
        Some(i) => (&body[..i], &body[i..]),
        None => ("", body),
    };
    let re = if re_part.is_empty() {
        0.0
    } else {
        re_part
            .parse::<f64>()
            .map_err(|_| format!("bad coefficient {s:?}"))?
    };
    let im = match im_part {
        "" | "+" => 1.0,
        "-" => -1.0,
        _ => im_part
            .parse::<f64>()
            .map_err(|_| format!("bad coefficient {s:?}"))?,
    };
    Ok(Complex64::new(re, im))
}

/// Column `index` of a named orthonormal basis. `computational` is the
/// standard basis in any dimension; `plusminus` the Hadamard pair in
/// dimension 2; `fourier` the discrete Fourier basis.
fn onb_column(label: &str, index: usize, dim: usize) -> Result<Vec<Complex64>, String> {
    if index >= dim {
        return Err(format!("basis index {index} out of range for dim {dim}"));
    }
    match label {
        "computational" => Ok((0..dim)
            .map(|i| Complex64::new(if i == index { 1.0 } else { 0.0 }, 0.0))
            .collect()),
        "plusminus" => {
            if dim != 2 {
                return Err(format!("basis {label:?} needs dim 2, scenario has {dim}"));
            }
            let r = 0.5_f64.sqrt();
            let sign = if index == 0 { 1.0 } else { -1.0 };
            Ok(vec![Complex64::new(r, 0.0), Complex64::new(sign * r, 0.0)])
        }
        "fourier" => {
            let norm = 1.0 / (dim as f64).sqrt();
            Ok((0..dim)
                .map(|j| {
                    let phase =
                        2.0 * std::f64::consts::PI * (j * index) as f64 / dim as f64;
                    Complex64::new(phase.cos() * norm, phase.sin() * norm)
                })
                .collect())
        }
        other => Err(format!("unknown basis label {other:?}")),
    }
}

fn resolve_effect(
    name: &str,
    spec: &OperatorSpec,
    dim: usize,
    tol: &Tolerances,
) -> Result<Effect, String> {
    match spec {
        OperatorSpec::Grid(grid) => {
            let m = grid_to_matrix(grid, dim, &format!("effect {name:?}"))?;
            Effect::new(m, tol).map_err(|e| format!("effect {name:?}: {e}"))
        }
        OperatorSpec::Text(text) => {
            if let Some(rest) = text.strip_prefix("projector:") {
                let (label, index_str) = rest
                    .rsplit_once(':')
                    .ok_or_else(|| format!("effect {name:?}: want projector:<basis>:<index>"))?;
                let index: usize = index_str
                    .parse()
                    .map_err(|_| format!("effect {name:?}: bad index {index_str:?}"))?;
                let col = onb_column(label, index, dim)
                    .map_err(|e| format!("effect {name:?}: {e}"))?;
                Effect::rank_one_projector(&col).map_err(|e| format!("effect {name:?}: {e}"))
            } else if let Some(c_str) = text.strip_prefix("scaled-identity:") {
                let c: f64 = c_str
                    .trim()
                    .parse()
                    .map_err(|_| format!("effect {name:?}: bad scale {c_str:?}"))?;
                Effect::scaled_identity(dim, c).map_err(|e| format!("effect {name:?}: {e}"))
            } else {
                Err(format!("effect {name:?}: unknown constructor {text:?}"))
            }
        }
    }
}

fn resolve_state(spec: &OperatorSpec, dim: usize, tol: &Tolerances) -> Result<DensityState, String> {
    match spec {
        OperatorSpec::Grid(grid) => {
            let m = grid_to_matrix(grid, dim, "initial_state")?;
            DensityState::new(m, tol).map_err(|e| format!("initial_state: {e}"))
        }
        OperatorSpec::Text(text) => {
            let Some(coeffs) = text.strip_prefix("pure:") else {
                return Err(format!("initial_state: unknown constructor {text:?}"));
            };
            let kets: Vec<Complex64> = coeffs
                .split(',')
                .map(parse_complex)
                .collect::<Result<_, _>>()
                .map_err(|e| format!("initial_state: {e}"))?;
            if kets.len() != dim {
                return Err(format!(
                    "initial_state: {} coefficients for dim {dim}",
                    kets.len()
                ));
            }
            let norm: f64 = kets.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm <= 0.0 {
                return Err("initial_state: zero vector".into());
            }
            let unit: Vec<Complex64> = kets.iter().map(|z| z / norm).collect();
            DensityState::pure(&unit).map_err(|e| format!("initial_state: {e}"))
        }
    }
}

pub fn parse_alpha(text: &str) -> Result<AlphaParam, String> {
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (text.trim(), "1"),
    };
    let n: i64 = num.parse().map_err(|_| format!("bad alpha {text:?}"))?;
    let d: i64 = den.parse().map_err(|_| format!("bad alpha {text:?}"))?;
    AlphaParam::new(n, d).map_err(|e| format!("bad alpha {text:?}: {e}"))
}

impl Scenario {
    pub fn load(raw: Vec<u8>) -> Result<Scenario, String> {
        let file: ScenarioFile =
            serde_json::from_slice(&raw).map_err(|e| format!("scenario parse: {e}"))?;
        if file.dim == 0 {
            return Err("dim must be positive".into());
        }
        if let Some(t) = file.tolerances.consistency {
            if !(t.is_finite() && t > 0.0) {
                return Err(format!("tolerances.consistency must be positive, got {t}"));
            }
        }
        let tol = Tolerances::default();
        let hamiltonian = grid_to_matrix(&file.hamiltonian, file.dim, "hamiltonian")?;
        let ctx = EvolutionContext::new(hamiltonian, file.fiducial_time, tol.clone())
            .map_err(|e| format!("hamiltonian: {e}"))?;
        let state = resolve_state(&file.initial_state, file.dim, &tol)?;

        let mut effects = BTreeMap::new();
        for (name, spec) in &file.effects {
            effects.insert(name.clone(), resolve_effect(name, spec, file.dim, &tol)?);
        }

        let mut histories = BTreeMap::new();
        for (name, entries) in &file.histories {
            let resolved: Vec<(f64, Effect)> = entries
                .iter()
                .map(|entry| {
                    effects
                        .get(&entry.effect)
                        .cloned()
                        .map(|e| (entry.t, e))
                        .ok_or_else(|| {
                            format!("history {name:?}: unknown effect {:?}", entry.effect)
                        })
                })
                .collect::<Result<_, _>>()?;
            let h = HomogeneousHistory::new(file.dim, resolved, &tol)
                .map_err(|e| format!("history {name:?}: {e}"))?;
            histories.insert(name.clone(), h);
        }

        for (name, fam) in &file.families {
            for member in &fam.members {
                if !histories.contains_key(member) {
                    return Err(format!("family {name:?}: unknown history {member:?}"));
                }
            }
            for reference in fam.unit.iter().chain(fam.base.iter()) {
                if !histories.contains_key(reference) {
                    return Err(format!("family {name:?}: unknown history {reference:?}"));
                }
            }
            for effect in &fam.effects {
                if !effects.contains_key(effect) {
                    return Err(format!("family {name:?}: unknown effect {effect:?}"));
                }
            }
        }

        let alpha = file
            .alpha
            .as_deref()
            .map(parse_alpha)
            .transpose()
            .map_err(|e| format!("alpha: {e}"))?;

        Ok(Scenario {
            dim: file.dim,
            ctx,
            state,
            effects,
            histories,
            families: file.families,
            alpha,
            consistency_tol: file.tolerances.consistency,
            raw,
        })
    }

    pub fn family(&self, name: &str) -> Result<&FamilySpec, String> {
        self.families
            .get(name)
            .ok_or_else(|| format!("unknown family {name:?}"))
    }

    pub fn history(&self, name: &str) -> &HomogeneousHistory {
        &self.histories[name]
    }

    pub fn effect(&self, name: &str) -> &Effect {
        &self.effects[name]
    }
}
