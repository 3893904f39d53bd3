//! JSON scenario files and the bundled fixtures.
//!
//! Matrices are nested row-major arrays. Banks, agents and edge endpoints are
//! numbered from 1 in files and from 0 in [`ScenarioSpec`]. Unknown keys are
//! rejected everywhere.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, Topology};
use crate::observability::{ObservabilityError, PlantModel};
use crate::scalar::{lit, to_f64, Real};
use crate::sim::{AgentEvent, AttackKind, EventKind, InitialSpec, InputSignal, NoiseSpec, ScenarioSpec, VariantSpec};

#[derive(Debug, Error)]
pub enum ScenarioError {
    /// Malformed JSON or a schema violation detected by the parser; the
    /// message carries line and column.
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error(transparent)]
    Observability(#[from] ObservabilityError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no bundled scenario named `{0}`")]
    UnknownBundled(String),
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub a: Rows,
    pub b: Rows,
    /// One output matrix per sensor bank.
    pub c: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologyFile {
    Ring {},
    Complete {},
    Path {},
    Adjacency { rows: Vec<Vec<u8>> },
    Edges { edges: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VariantFile {
    General {},
    Lyapunov { p: Rows },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackKindFile {
    ConstantBias { value: f64, start: f64 },
    Sinusoid { amplitude: f64, frequency: f64, start: f64 },
    Ramp { slope: f64, start: f64 },
    Table { points: Vec<(f64, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackFile {
    pub bank: usize,
    pub signal: AttackKindFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputFile {
    Zero {},
    Sinusoid { amplitude: f64, frequency: f64 },
    Table { points: Vec<(f64, Vec<f64>)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialFile {
    Explicit {
        x: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        z: Option<Vec<Vec<f64>>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xhat: Option<Vec<Vec<f64>>>,
    },
    RandomBox {
        half_width: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKindFile {
    Join,
    Leave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventFile {
    pub time: f64,
    pub agent: usize,
    pub kind: EventKindFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseFile {
    pub std_dev: f64,
    pub seed: u64,
}

fn default_kappa() -> f64 {
    0.5
}
fn default_gamma() -> f64 {
    2.0
}
fn default_pole() -> f64 {
    -1.0
}
fn default_horizon() -> f64 {
    50.0
}
fn default_dt() -> f64 {
    1e-3
}
fn default_decimation() -> usize {
    1
}
fn default_tail_fraction() -> f64 {
    0.2
}
fn default_variant() -> VariantFile {
    VariantFile::General {}
}
fn default_input() -> InputFile {
    InputFile::Zero {}
}

/// On-disk scenario. Everything except the plant, the topology and the
/// attack budget has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub plant: PlantFile,
    /// Shared basis, columns are the basis vectors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tolerance: Option<f64>,
    pub topology: TopologyFile,
    pub attack_budget: usize,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_variant")]
    pub variant: VariantFile,
    #[serde(default = "default_pole")]
    pub pole_target: f64,
    #[serde(default)]
    pub attacks: Vec<AttackFile>,
    #[serde(default = "default_input")]
    pub input: InputFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialFile>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub events: Vec<EventFile>,
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseFile>,
}

fn matrix<T: Real>(what: &str, rows: &Rows, cols_hint: Option<usize>) -> Result<DMatrix<T>, ScenarioError> {
    let cols = rows.first().map(Vec::len).or(cols_hint).unwrap_or(0);
    if let Some((k, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(ScenarioError::Schema(format!(
            "{what}: row {} has {} entries, expected {cols}",
            k + 1,
            r.len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| lit(rows[i][j])))
}

fn rows_of<T: Real>(m: &DMatrix<T>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| to_f64(m[(i, j)])).collect())
        .collect()
}

fn vector<T: Real>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| lit(x)))
}

fn vec_of<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|&x| to_f64(x)).collect()
}

fn one_based(what: &str, k: usize, count: usize) -> Result<usize, ScenarioError> {
    if k == 0 || k > count {
        return Err(ScenarioError::Schema(format!("{what} {k} out of range 1..={count}")));
    }
    Ok(k - 1)
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario files always serialize")
    }

    /// Parses and converts in one go.
    pub fn parse<T: Real>(text: &str) -> Result<ScenarioSpec<T>, ScenarioError> {
        Self::from_json(text)?.to_spec()
    }

    pub fn to_spec<T: Real>(&self) -> Result<ScenarioSpec<T>, ScenarioError> {
        let a = matrix::<T>("plant.a", &self.plant.a, None)?;
        let n = a.nrows();
        let b = matrix::<T>("plant.b", &self.plant.b, Some(0))?;
        let b = if self.plant.b.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            b
        };
        let c = self
            .plant
            .c
            .iter()
            .enumerate()
            .map(|(i, ci)| matrix::<T>(&format!("plant.c[{}]", i + 1), ci, Some(n)))
            .collect::<Result<Vec<_>, _>>()?;
        let plant = PlantModel::new(a, b, c)?;
        let banks = plant.bank_count();

        let topology = match &self.topology {
            TopologyFile::Ring {} => Topology::ring(banks),
            TopologyFile::Complete {} => Topology::complete(banks),
            TopologyFile::Path {} => Topology::path(banks),
            TopologyFile::Adjacency { rows } => Topology::from_adjacency(rows)?,
            TopologyFile::Edges { edges } => {
                let zero_based = edges
                    .iter()
                    .map(|&(i, j)| {
                        Ok((
                            one_based("edge endpoint", i, banks)?,
                            one_based("edge endpoint", j, banks)?,
                        ))
                    })
                    .collect::<Result<Vec<_>, ScenarioError>>()?;
                Topology::from_edges(banks, &zero_based)?
            }
        };

        let mut spec = ScenarioSpec::new(self.name.clone(), plant, topology, self.attack_budget);
        spec.basis = self
            .basis
            .as_ref()
            .map(|v| matrix::<T>("basis", v, Some(n)))
            .transpose()?;
        if let Some(tol) = self.rank_tolerance {
            spec.rank_tolerance = lit(tol);
        }
        spec.kappa = lit(self.kappa);
        spec.gamma = lit(self.gamma);
        spec.variant = match &self.variant {
            VariantFile::General {} => VariantSpec::General,
            VariantFile::Lyapunov { p } => VariantSpec::Lyapunov {
                p: matrix("variant.p", p, Some(n))?,
            },
        };
        spec.pole_target = lit(self.pole_target);

        for at in &self.attacks {
            let bank = one_based("attacked bank", at.bank, banks)?;
            if !spec.attacks.kinds[bank].is_none() {
                return Err(ScenarioError::Schema(format!("bank {} is attacked twice", at.bank)));
            }
            spec.attacks.kinds[bank] = match &at.signal {
                AttackKindFile::ConstantBias { value, start } => AttackKind::ConstantBias {
                    value: lit(*value),
                    start: lit(*start),
                },
                AttackKindFile::Sinusoid {
                    amplitude,
                    frequency,
                    start,
                } => AttackKind::Sinusoid {
                    amplitude: lit(*amplitude),
                    frequency: lit(*frequency),
                    start: lit(*start),
                },
                AttackKindFile::Ramp { slope, start } => AttackKind::Ramp {
                    slope: lit(*slope),
                    start: lit(*start),
                },
                AttackKindFile::Table { points } => {
                    AttackKind::Table(points.iter().map(|&(t, v)| (lit(t), lit(v))).collect())
                }
            };
        }

        spec.input = match &self.input {
            InputFile::Zero {} => InputSignal::Zero,
            InputFile::Sinusoid { amplitude, frequency } => InputSignal::Sinusoid {
                amplitude: lit(*amplitude),
                frequency: lit(*frequency),
            },
            InputFile::Table { points } => InputSignal::Table(
                points
                    .iter()
                    .map(|(t, u)| (lit(*t), u.iter().map(|&x| lit(x)).collect()))
                    .collect(),
            ),
        };
        if let Some(init) = &self.initial {
            spec.initial = match init {
                InitialFile::Explicit { x, z, xhat } => InitialSpec::Explicit {
                    x: vector(x),
                    z: z.as_ref().map(|z| z.iter().map(|v| vector(v)).collect()),
                    xhat: xhat.as_ref().map(|xh| xh.iter().map(|v| vector(v)).collect()),
                },
                InitialFile::RandomBox { half_width, seed } => InitialSpec::RandomBox {
                    half_width: lit(*half_width),
                    seed: *seed,
                },
            };
        }
        spec.horizon = lit(self.horizon);
        spec.dt = lit(self.dt);
        spec.events = self
            .events
            .iter()
            .map(|e| {
                Ok(AgentEvent {
                    time: lit(e.time),
                    agent: one_based("event agent", e.agent, banks)?,
                    kind: match e.kind {
                        EventKindFile::Join => EventKind::Join,
                        EventKindFile::Leave => EventKind::Leave,
                    },
                })
            })
            .collect::<Result<_, ScenarioError>>()?;
        spec.decimation = self.decimation;
        spec.tail_fraction = lit(self.tail_fraction);
        spec.tail_window = self.tail_window.map(|(a, b)| (lit(a), lit(b)));
        spec.noise = self.noise.as_ref().map(|ns| NoiseSpec {
            std_dev: lit(ns.std_dev),
            seed: ns.seed,
        });
        spec.validate().map_err(|e| ScenarioError::Schema(e.to_string()))?;
        Ok(spec)
    }

    /// File form of a spec. Topologies are written as explicit edge lists.
    pub fn from_spec<T: Real>(spec: &ScenarioSpec<T>) -> Self {
        let plant = &spec.plant;
        let attacks = spec
            .attacks
            .kinds
            .iter()
            .enumerate()
            .filter_map(|(i, kind)| {
                let kind = match kind {
                    AttackKind::None => return None,
                    AttackKind::ConstantBias { value, start } => AttackKindFile::ConstantBias {
                        value: to_f64(*value),
                        start: to_f64(*start),
                    },
                    AttackKind::Sinusoid {
                        amplitude,
                        frequency,
                        start,
                    } => AttackKindFile::Sinusoid {
                        amplitude: to_f64(*amplitude),
                        frequency: to_f64(*frequency),
                        start: to_f64(*start),
                    },
                    AttackKind::Ramp { slope, start } => AttackKindFile::Ramp {
                        slope: to_f64(*slope),
                        start: to_f64(*start),
                    },
                    AttackKind::Table(points) => AttackKindFile::Table {
                        points: points.iter().map(|&(t, v)| (to_f64(t), to_f64(v))).collect(),
                    },
                };
                Some(AttackFile {
                    bank: i + 1,
                    signal: kind,
                })
            })
            .collect();
        Self {
            name: spec.name.clone(),
            plant: PlantFile {
                a: rows_of(plant.a()),
                b: rows_of(plant.b()),
                c: plant.c_blocks().iter().map(rows_of).collect(),
            },
            basis: spec.basis.as_ref().map(rows_of),
            rank_tolerance: Some(to_f64(spec.rank_tolerance)),
            topology: TopologyFile::Edges {
                edges: spec.topology.edges().into_iter().map(|(i, j)| (i + 1, j + 1)).collect(),
            },
            attack_budget: spec.attacks.budget,
            kappa: to_f64(spec.kappa),
            gamma: to_f64(spec.gamma),
            variant: match &spec.variant {
                VariantSpec::General => VariantFile::General {},
                VariantSpec::Lyapunov { p } => VariantFile::Lyapunov { p: rows_of(p) },
            },
            pole_target: to_f64(spec.pole_target),
            attacks,
            input: match &spec.input {
                InputSignal::Zero => InputFile::Zero {},
                InputSignal::Sinusoid { amplitude, frequency } => InputFile::Sinusoid {
                    amplitude: to_f64(*amplitude),
                    frequency: to_f64(*frequency),
                },
                InputSignal::Table(points) => InputFile::Table {
                    points: points
                        .iter()
                        .map(|(t, u)| (to_f64(*t), u.iter().map(|&x| to_f64(x)).collect()))
                        .collect(),
                },
            },
            initial: Some(match &spec.initial {
                InitialSpec::Explicit { x, z, xhat } => InitialFile::Explicit {
                    x: vec_of(x),
                    z: z.as_ref().map(|z| z.iter().map(vec_of).collect()),
                    xhat: xhat.as_ref().map(|xh| xh.iter().map(vec_of).collect()),
                },
                InitialSpec::RandomBox { half_width, seed } => InitialFile::RandomBox {
                    half_width: to_f64(*half_width),
                    seed: *seed,
                },
            }),
            horizon: to_f64(spec.horizon),
            dt: to_f64(spec.dt),
            events: spec
                .events
                .iter()
                .map(|e| EventFile {
                    time: to_f64(e.time),
                    agent: e.agent + 1,
                    kind: match e.kind {
                        EventKind::Join => EventKindFile::Join,
                        EventKind::Leave => EventKindFile::Leave,
                    },
                })
                .collect(),
            decimation: spec.decimation,
            tail_fraction: to_f64(spec.tail_fraction),
            tail_window: spec.tail_window.map(|(a, b)| (to_f64(a), to_f64(b))),
            noise: spec.noise.as_ref().map(|ns| NoiseFile {
                std_dev: to_f64(ns.std_dev),
                seed: ns.seed,
            }),
        }
    }
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("threeinertia", include_str!("../scenarios/threeinertia.json")),
    (
        "threeinertia_attack_free",
        include_str!("../scenarios/threeinertia_attack_free.json"),
    ),
    ("jordan_chain", include_str!("../scenarios/jordan_chain.json")),
    (
        "jordan_chain_broken",
        include_str!("../scenarios/jordan_chain_broken.json"),
    ),
    ("rotation_pairs", include_str!("../scenarios/rotation_pairs.json")),
    (
        "rotation_pairs_broken",
        include_str!("../scenarios/rotation_pairs_broken.json"),
    ),
    ("scalar_median", include_str!("../scenarios/scalar_median.json")),
    ("scalar_lyapunov", include_str!("../scenarios/scalar_lyapunov.json")),
    ("joinleave", include_str!("../scenarios/joinleave.json")),
];

/// Text of a bundled scenario; a trailing `.json` is ignored.
pub fn bundled_text(name: &str) -> Result<&'static str, ScenarioError> {
    let key = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED
        .iter()
        .find(|(n, _)| *n == key)
        .map(|(_, text)| *text)
        .ok_or_else(|| ScenarioError::UnknownBundled(name.to_string()))
}

pub fn bundled<T: Real>(name: &str) -> Result<ScenarioSpec<T>, ScenarioError> {
    ScenarioFile::parse(bundled_text(name)?)
}
