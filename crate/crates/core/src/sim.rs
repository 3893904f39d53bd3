//! Scenario-driven co-simulation of the plant, the partial observers and the
//! resilient estimator network, with attack generators, join/leave events,
//! assumption audits and diagnostics in error coordinates.

use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::estimator::{
    disagreement_bound, steady_state_bound, EstimatorConfig, EstimatorError, EstimatorNetwork, LyapunovData,
};
use crate::graph::{algebraic_connectivity, orthonormal_complement, GraphError, Topology};
use crate::integrate::{step_count, Rk4};
use crate::observability::{
    check_shared_basis, construct_shared_basis, redundancy_violation, ObservabilityError, ObserverBank,
    PartialObserver, PlantModel, SharedBasis,
};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// States whose magnitude exceeds this are reported as a blowup.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("assumption audit failed (rerun with the override to simulate anyway)\n{0}")]
    AuditFailure(Box<AuditReport>),
    #[error("numerical blowup at t = {time} (last stable time {last_stable_time})")]
    NumericalBlowup { time: f64, last_stable_time: f64 },
    #[error(transparent)]
    Observability(#[from] ObservabilityError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Scalar attack waveform, added to every channel of the attacked bank.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackKind<T: Real> {
    None,
    ConstantBias {
        value: T,
        start: T,
    },
    /// `amplitude sin(frequency (t - start))` from `start` on.
    Sinusoid {
        amplitude: T,
        frequency: T,
        start: T,
    },
    /// `slope (t - start)` from `start` on; unbounded by design.
    Ramp {
        slope: T,
        start: T,
    },
    /// Piecewise-linear through `(t, value)` points, held at the end values.
    Table(Vec<(T, T)>),
}

fn interpolate<T: Real>(points: &[(T, T)], t: T) -> T {
    match points {
        [] => T::zero(),
        [(_, v)] => *v,
        _ => {
            if t <= points[0].0 {
                return points[0].1;
            }
            for w in points.windows(2) {
                let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                if t <= t1 {
                    if t1 == t0 {
                        return v1;
                    }
                    return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                }
            }
            points[points.len() - 1].1
        }
    }
}

impl<T: Real> AttackKind<T> {
    pub fn value(&self, t: T) -> T {
        match self {
            AttackKind::None => T::zero(),
            AttackKind::ConstantBias { value, start } => {
                if t >= *start {
                    *value
                } else {
                    T::zero()
                }
            }
            AttackKind::Sinusoid {
                amplitude,
                frequency,
                start,
            } => {
                if t >= *start {
                    *amplitude * (*frequency * (t - *start)).sin()
                } else {
                    T::zero()
                }
            }
            AttackKind::Ramp { slope, start } => {
                if t >= *start {
                    *slope * (t - *start)
                } else {
                    T::zero()
                }
            }
            AttackKind::Table(points) => interpolate(points, t),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AttackKind::None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackProfile<T: Real> {
    pub kinds: Vec<AttackKind<T>>,
    /// Number of banks the estimator is designed to tolerate.
    pub budget: usize,
}

impl<T: Real> AttackProfile<T> {
    pub fn none(banks: usize, budget: usize) -> Self {
        Self {
            kinds: vec![AttackKind::None; banks],
            budget,
        }
    }

    pub fn with(mut self, bank: usize, kind: AttackKind<T>) -> Self {
        self.kinds[bank] = kind;
        self
    }

    pub fn attacked_banks(&self) -> Vec<usize> {
        (0..self.kinds.len()).filter(|&i| !self.kinds[i].is_none()).collect()
    }

    /// More banks are attacked than the budget allows.
    pub fn violates_budget(&self) -> bool {
        self.attacked_banks().len() > self.budget
    }

    pub fn attack_signal(&self, bank: usize, t: T, channels: usize) -> DVector<T> {
        DVector::from_element(channels, self.kinds[bank].value(t))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputSignal<T: Real> {
    Zero,
    /// `amplitude sin(frequency t)` on every input channel.
    Sinusoid {
        amplitude: T,
        frequency: T,
    },
    /// Piecewise-linear per channel through `(t, u)` points.
    Table(Vec<(T, Vec<T>)>),
}

impl<T: Real> InputSignal<T> {
    pub fn value_into(&self, t: T, out: &mut [T]) {
        match self {
            InputSignal::Zero => out.fill(T::zero()),
            InputSignal::Sinusoid { amplitude, frequency } => out.fill(*amplitude * (*frequency * t).sin()),
            InputSignal::Table(points) => {
                for (c, o) in out.iter_mut().enumerate() {
                    let column: Vec<(T, T)> = points.iter().map(|(tk, u)| (*tk, u[c])).collect();
                    *o = interpolate(&column, t);
                }
            }
        }
    }

    pub fn value(&self, t: T, channels: usize) -> DVector<T> {
        let mut out = DVector::zeros(channels);
        self.value_into(t, out.as_mut_slice());
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec<T: Real> {
    /// Missing partial and resilient estimates start at zero.
    Explicit {
        x: DVector<T>,
        z: Option<Vec<DVector<T>>>,
        xhat: Option<Vec<DVector<T>>>,
    },
    /// Every entry of `x`, `z_i`, `xhat_i` uniform in `[-half_width, half_width]`.
    RandomBox { half_width: T, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Join,
    Leave,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Join => "join",
            EventKind::Leave => "leave",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentEvent<T: Real> {
    pub time: T,
    pub agent: usize,
    pub kind: EventKind,
}

/// Gaussian measurement noise, resampled once per integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<T: Real> {
    pub std_dev: T,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VariantSpec<T: Real> {
    General,
    Lyapunov { p: DMatrix<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec<T: Real> {
    pub name: String,
    pub plant: PlantModel<T>,
    /// Explicit shared basis (columns); constructed automatically when absent.
    pub basis: Option<DMatrix<T>>,
    pub rank_tolerance: T,
    pub topology: Topology,
    pub kappa: T,
    pub gamma: T,
    pub variant: VariantSpec<T>,
    pub pole_target: T,
    pub attacks: AttackProfile<T>,
    pub input: InputSignal<T>,
    pub initial: InitialSpec<T>,
    pub horizon: T,
    pub dt: T,
    pub events: Vec<AgentEvent<T>>,
    /// Log every `decimation`-th step.
    pub decimation: usize,
    /// Tail window as a fraction of the horizon, unless `tail_window` is set.
    pub tail_fraction: T,
    pub tail_window: Option<(T, T)>,
    pub noise: Option<NoiseSpec<T>>,
}

impl<T: Real> ScenarioSpec<T> {
    /// Defaults: attack-free, zero input, zero initial state, general variant
    /// with `kappa = 0.5`, `gamma = 2`, pole target `-1`, horizon 50, `dt = 1e-3`.
    pub fn new(name: impl Into<String>, plant: PlantModel<T>, topology: Topology, budget: usize) -> Self {
        let banks = plant.bank_count();
        let n = plant.state_dim();
        let defaults = EstimatorConfig::<T>::default();
        Self {
            name: name.into(),
            basis: None,
            rank_tolerance: crate::scalar::default_rank_tolerance(),
            topology,
            kappa: defaults.kappa(),
            gamma: defaults.gamma(),
            variant: VariantSpec::General,
            pole_target: -T::one(),
            attacks: AttackProfile::none(banks, budget),
            input: InputSignal::Zero,
            initial: InitialSpec::Explicit {
                x: DVector::zeros(n),
                z: None,
                xhat: None,
            },
            horizon: lit(50.0),
            dt: lit(1e-3),
            events: Vec::new(),
            decimation: 1,
            tail_fraction: lit(0.2),
            tail_window: None,
            noise: None,
            plant,
        }
    }

    pub fn agent_count(&self) -> usize {
        self.plant.bank_count()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let banks = self.agent_count();
        let n = self.plant.state_dim();
        let bad = |msg: String| Err(SimError::InvalidScenario(msg));
        if !(self.dt > T::zero()) || !(self.horizon > T::zero()) {
            return bad(format!(
                "dt and horizon must be positive (dt = {}, horizon = {})",
                self.dt, self.horizon
            ));
        }
        if self.topology.node_count() != banks {
            return bad(format!(
                "topology has {} nodes but the plant has {banks} sensor banks",
                self.topology.node_count()
            ));
        }
        if self.attacks.kinds.len() != banks {
            return bad(format!("{} attack entries for {banks} banks", self.attacks.kinds.len()));
        }
        if self.decimation == 0 {
            return bad("decimation must be at least 1".into());
        }
        if !(self.tail_fraction > T::zero() && self.tail_fraction <= T::one()) {
            return bad(format!("tail fraction must lie in (0, 1], got {}", self.tail_fraction));
        }
        if let Some((a, b)) = self.tail_window {
            if !(a < b) {
                return bad(format!("tail window [{a}, {b}] is empty"));
            }
        }
        for w in self.events.windows(2) {
            if !(w[0].time < w[1].time) {
                return bad("event times must be strictly increasing".into());
            }
        }
        for e in &self.events {
            if e.agent >= banks {
                return bad(format!("event refers to agent {} of {banks}", e.agent + 1));
            }
            if e.time < T::zero() || e.time > self.horizon {
                return bad(format!("event time {} outside [0, horizon]", e.time));
            }
        }
        if let VariantSpec::Lyapunov { p } = &self.variant {
            if p.shape() != (n, n) {
                return bad(format!("certificate P must be {n}x{n}"));
            }
        }
        match &self.initial {
            InitialSpec::Explicit { x, z, xhat } => {
                if x.len() != n {
                    return bad(format!("initial state has {} entries, expected {n}", x.len()));
                }
                if let Some(z) = z {
                    if z.len() != banks {
                        return bad(format!("{} initial partial estimates for {banks} agents", z.len()));
                    }
                }
                if let Some(xh) = xhat {
                    if xh.len() != banks || xh.iter().any(|v| v.len() != n) {
                        return bad(format!(
                            "initial resilient estimates must be {banks} vectors of length {n}"
                        ));
                    }
                }
            }
            InitialSpec::RandomBox { half_width, .. } => {
                if !(*half_width >= T::zero()) {
                    return bad("random box half width must be nonnegative".into());
                }
            }
        }
        if let Some(noise) = &self.noise {
            if !(noise.std_dev >= T::zero()) {
                return bad("noise standard deviation must be nonnegative".into());
            }
        }
        if let InputSignal::Table(points) = &self.input {
            if points.iter().any(|(_, u)| u.len() != self.plant.input_dim()) {
                return bad(format!("input table rows must have {} entries", self.plant.input_dim()));
            }
        }
        Ok(())
    }

    /// Shared basis from the explicit matrix or the automatic construction.
    pub fn shared_basis(&self) -> Result<SharedBasis<T>, ObservabilityError> {
        match &self.basis {
            Some(v) => check_shared_basis(&self.plant, v, self.rank_tolerance),
            None => construct_shared_basis(&self.plant, self.rank_tolerance),
        }
    }

    /// Active flags after every event, starting with all agents active.
    pub fn activity_segments(&self) -> Vec<(T, Vec<bool>)> {
        let mut active = vec![true; self.agent_count()];
        let mut out = vec![(T::zero(), active.clone())];
        for e in &self.events {
            active[e.agent] = e.kind == EventKind::Join;
            out.push((e.time, active.clone()));
        }
        out
    }
}

/// Scenario with all derived design data.
#[derive(Debug, Clone)]
pub struct PreparedScenario<T: Real> {
    pub spec: ScenarioSpec<T>,
    pub basis: SharedBasis<T>,
    pub bank: ObserverBank<T>,
    pub config: EstimatorConfig<T>,
    pub network: EstimatorNetwork<T>,
}

impl<T: Real> PreparedScenario<T> {
    pub fn new(spec: &ScenarioSpec<T>) -> Result<Self, SimError> {
        spec.validate()?;
        let basis = spec.shared_basis()?;
        let bank = ObserverBank::design(&spec.plant, &basis, spec.pole_target, spec.rank_tolerance)?;
        if let InitialSpec::Explicit { z: Some(z), .. } = &spec.initial {
            for (i, zi) in z.iter().enumerate() {
                let o = bank.observer(i).observable_dim();
                if zi.len() != o {
                    return Err(SimError::InvalidScenario(format!(
                        "initial partial estimate of agent {} has {} entries, but the agent observes {o} directions",
                        i + 1,
                        zi.len()
                    )));
                }
            }
        }
        let config = match &spec.variant {
            VariantSpec::General => EstimatorConfig::general(spec.kappa, spec.gamma)?,
            VariantSpec::Lyapunov { p } => {
                let data = LyapunovData::new(&spec.plant, &basis, p.clone())?;
                EstimatorConfig::lyapunov(spec.kappa, spec.gamma, data)?
            }
        };
        let network = EstimatorNetwork::new(&spec.plant, &basis, &bank, &config);
        Ok(Self {
            spec: spec.clone(),
            basis,
            bank,
            config,
            network,
        })
    }

    pub fn bounds(&self) -> ScenarioBounds {
        let n = self.spec.plant.state_dim();
        let agents = self.spec.agent_count();
        let lambda2 = if agents >= 2 {
            algebraic_connectivity(&self.spec.topology.laplacian::<T>()).ok()
        } else {
            None
        };
        let connected = lambda2.is_some_and(|l| l > T::zero());
        let scaling = self.config.scaling_norm(&self.basis);
        let steady_state = match (scaling, lambda2) {
            (Some(s), Some(l)) if connected => steady_state_bound(agents, n, self.spec.gamma, l, s).ok().map(to_f64),
            _ => None,
        };
        let disagreement = match lambda2 {
            Some(l) if connected && scaling.is_some() => {
                disagreement_bound(agents, n, self.spec.gamma, l).ok().map(to_f64)
            }
            _ => None,
        };
        ScenarioBounds {
            lambda2: lambda2.map(to_f64),
            steady_state,
            disagreement,
            scaling_norm: scaling.map(to_f64),
        }
    }
}

/// Steady-state bounds that apply to a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBounds {
    pub lambda2: Option<f64>,
    /// Tail Euclidean error bound (Lyapunov variant on a connected graph).
    pub steady_state: Option<f64>,
    /// Tail bound on the disagreement norm `W`.
    pub disagreement: Option<f64>,
    pub scaling_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    SparseAttack,
    RedundantObservability,
    ConnectedGraph,
    SharedBasis,
}

impl Assumption {
    pub fn label(&self) -> &'static str {
        match self {
            Assumption::SparseAttack => "attack budget",
            Assumption::RedundantObservability => "redundant observability",
            Assumption::ConnectedGraph => "connected graph",
            Assumption::SharedBasis => "shared basis",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub assumption: Assumption,
    pub pass: bool,
    pub evidence: String,
}

/// Checks repeated for each interval between join/leave events.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentAudit {
    pub start: f64,
    pub active: Vec<bool>,
    pub connected: bool,
    pub lambda2: Option<f64>,
    pub redundancy: Result<Option<Vec<usize>>, String>,
    pub column_counts: Option<Vec<usize>>,
}

impl SegmentAudit {
    pub fn pass(&self) -> bool {
        self.connected && matches!(self.redundancy, Ok(None))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub budget: usize,
    pub entries: Vec<AuditEntry>,
    pub lambda2: Option<f64>,
    pub indicators: Option<Vec<Vec<bool>>>,
    /// Per-direction count of banks observing it.
    pub column_counts: Option<Vec<usize>>,
    pub segments: Vec<SegmentAudit>,
}

impl AuditReport {
    pub fn entry(&self, assumption: Assumption) -> &AuditEntry {
        self.entries
            .iter()
            .find(|e| e.assumption == assumption)
            .expect("every assumption is audited")
    }

    /// The direction-count consequence `count >= 2q + 1` for every direction.
    pub fn column_counts_pass(&self) -> Option<bool> {
        self.column_counts
            .as_ref()
            .map(|c| c.iter().all(|&k| k > 2 * self.budget))
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass) && self.segments.iter().all(SegmentAudit::pass)
    }
}

fn one_based(list: &[usize]) -> String {
    let items: Vec<String> = list.iter().map(|i| (i + 1).to_string()).collect();
    format!("{{{}}}", items.join(", "))
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "{}: {} ({})",
                e.assumption.label(),
                if e.pass { "PASS" } else { "FAIL" },
                e.evidence
            )?;
        }
        if let Some(rows) = &self.indicators {
            writeln!(f, "Indicator table (rows: banks, columns: basis directions):")?;
            for (i, row) in rows.iter().enumerate() {
                let cells: Vec<&str> = row.iter().map(|&s| if s { "1" } else { "0" }).collect();
                writeln!(f, "  bank {}: {}", i + 1, cells.join(" "))?;
            }
        }
        if let Some(counts) = &self.column_counts {
            writeln!(
                f,
                "Direction counts: {:?} (need >= {} each: {})",
                counts,
                2 * self.budget + 1,
                if self.column_counts_pass() == Some(true) {
                    "PASS"
                } else {
                    "FAIL"
                }
            )?;
        }
        if self.segments.len() > 1 {
            for s in &self.segments {
                let active: Vec<usize> = (0..s.active.len()).filter(|&i| s.active[i]).collect();
                let redundancy = match &s.redundancy {
                    Ok(None) => "redundant".to_string(),
                    Ok(Some(w)) => format!("not observable from banks {}", one_based(w)),
                    Err(e) => e.clone(),
                };
                writeln!(
                    f,
                    "From t = {}: active {} connected = {} lambda_2 = {} {}: {}",
                    s.start,
                    one_based(&active),
                    s.connected,
                    s.lambda2.map_or("n/a".to_string(), |l| format!("{l:.7}")),
                    redundancy,
                    if s.pass() { "PASS" } else { "FAIL" }
                )?;
            }
        }
        Ok(())
    }
}

fn sub_plant<T: Real>(plant: &PlantModel<T>, banks: &[usize]) -> Result<PlantModel<T>, ObservabilityError> {
    PlantModel::new(
        plant.a().clone(),
        plant.b().clone(),
        banks.iter().map(|&i| plant.c(i).clone()).collect(),
    )
}

fn lambda2_of(topology: &Topology) -> Option<f64> {
    if topology.node_count() < 2 {
        return None;
    }
    algebraic_connectivity(&topology.laplacian::<f64>()).ok()
}

/// Report-only check of the four standing assumptions, plus the direction
/// counts and a re-check of connectivity and redundancy after every event.
pub fn audit_assumptions<T: Real>(spec: &ScenarioSpec<T>) -> AuditReport {
    let q = spec.attacks.budget;
    let tol = spec.rank_tolerance;
    let attacked = spec.attacks.attacked_banks();
    let sparse = AuditEntry {
        assumption: Assumption::SparseAttack,
        pass: attacked.len() <= q,
        evidence: format!(
            "{} attacked bank(s) {} with budget q = {q}",
            attacked.len(),
            one_based(&attacked)
        ),
    };

    let redundancy = match redundancy_violation(&spec.plant, q, tol) {
        Ok(None) => AuditEntry {
            assumption: Assumption::RedundantObservability,
            pass: true,
            evidence: format!(
                "observable from every {} of {} banks",
                spec.agent_count().saturating_sub(2 * q),
                spec.agent_count()
            ),
        },
        Ok(Some(w)) => AuditEntry {
            assumption: Assumption::RedundantObservability,
            pass: false,
            evidence: format!("not observable from banks {} (q = {q})", one_based(&w)),
        },
        Err(e) => AuditEntry {
            assumption: Assumption::RedundantObservability,
            pass: false,
            evidence: e.to_string(),
        },
    };

    let lambda2 = lambda2_of(&spec.topology);
    let connected = spec.topology.is_connected();
    let graph = AuditEntry {
        assumption: Assumption::ConnectedGraph,
        pass: connected,
        evidence: format!(
            "{} nodes, {} edges, {}, lambda_2 = {}",
            spec.topology.node_count(),
            spec.topology.edge_count(),
            if connected { "connected" } else { "disconnected" },
            lambda2.map_or("n/a".to_string(), |l| format!("{l:.7}"))
        ),
    };

    let basis = spec.shared_basis();
    let (basis_entry, indicators, column_counts) = match &basis {
        Ok(b) => (
            AuditEntry {
                assumption: Assumption::SharedBasis,
                pass: true,
                evidence: format!(
                    "{} basis spans every unobservable subspace",
                    if spec.basis.is_some() {
                        "supplied"
                    } else {
                        "constructed"
                    }
                ),
            },
            Some(b.indicators().to_vec()),
            Some(b.column_counts()),
        ),
        Err(e) => (
            AuditEntry {
                assumption: Assumption::SharedBasis,
                pass: false,
                evidence: e.to_string(),
            },
            None,
            None,
        ),
    };

    let mut segments = Vec::new();
    if !spec.events.is_empty() {
        for (start, active) in spec.activity_segments() {
            let keep: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
            let induced = spec.topology.induced(&keep);
            let redundancy = sub_plant(&spec.plant, &keep)
                .and_then(|p| redundancy_violation(&p, q, tol))
                .map(|w| w.map(|w| w.into_iter().map(|k| keep[k]).collect()))
                .map_err(|e| e.to_string());
            segments.push(SegmentAudit {
                start: to_f64(start),
                connected: induced.is_connected(),
                lambda2: lambda2_of(&induced),
                redundancy,
                column_counts: basis.as_ref().ok().map(|b| b.restricted_counts(&keep)),
                active,
            });
        }
    }

    AuditReport {
        budget: q,
        entries: vec![sparse, redundancy, graph, basis_entry],
        lambda2,
        indicators,
        column_counts,
        segments,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Simulate even when the audit fails.
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogHeader {
    pub name: String,
    pub state_dim: usize,
    pub agent_count: usize,
    pub observable_dims: Vec<usize>,
    pub seed: Option<u64>,
    pub noise_seed: Option<u64>,
    pub dt: f64,
    pub decimation: usize,
    pub assumption_violating: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T: Real> {
    pub t: T,
    pub x: DVector<T>,
    pub z: Vec<DVector<T>>,
    pub xhat: Vec<DVector<T>>,
    pub residual: Vec<T>,
    /// Per-agent error in analysis coordinates.
    pub xbar: Vec<DVector<T>>,
    pub xbar_avg: DVector<T>,
    /// Disagreement component, `(R^T kron I) col(xbar_i)`.
    pub xtilde: DVector<T>,
    pub w: T,
    pub v: T,
    pub active: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryLog<T: Real> {
    pub header: LogHeader,
    pub samples: Vec<Sample<T>>,
    /// Orthonormal complement of the ones vector used for the diagnostics.
    pub complement: DMatrix<T>,
    pub audit: AuditReport,
    pub bounds: ScenarioBounds,
}

impl<T: Real> TrajectoryLog<T> {
    pub fn times(&self) -> Vec<T> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn residual_series(&self, agent: usize) -> Vec<T> {
        self.samples.iter().map(|s| s.residual[agent]).collect()
    }

    pub fn csv_header(&self) -> Vec<String> {
        let h = &self.header;
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=h.state_dim).map(|k| format!("x_{k}")));
        for i in 1..=h.agent_count {
            cols.extend((1..=h.state_dim).map(|k| format!("xhat_{i}_{k}")));
            cols.extend((1..=h.observable_dims[i - 1]).map(|k| format!("z_{i}_{k}")));
            cols.push(format!("residual_{i}"));
        }
        cols.extend((1..=h.state_dim).map(|k| format!("xbar_avg_{k}")));
        cols.push("W".into());
        cols.push("V".into());
        cols
    }

    /// Header row, then one row per logged sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", self.csv_header().join(","))?;
        let mut row: Vec<String> = Vec::new();
        for s in &self.samples {
            row.clear();
            row.push(s.t.to_string());
            row.extend(s.x.iter().map(|v| v.to_string()));
            for i in 0..self.header.agent_count {
                row.extend(s.xhat[i].iter().map(|v| v.to_string()));
                row.extend(s.z[i].iter().map(|v| v.to_string()));
                row.push(s.residual[i].to_string());
            }
            row.extend(s.xbar_avg.iter().map(|v| v.to_string()));
            row.push(s.w.to_string());
            row.push(s.v.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Tail statistics over a time window of a log. Inactive agents are skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct TailMetrics<T: Real> {
    pub window: (T, T),
    pub samples: usize,
    /// `max_i sup_t ||xhat_i - x||_inf`.
    pub max_inf_error: T,
    /// `max_i sup_t ||xhat_i - x||_2`.
    pub max_euclid_error: T,
    pub per_agent_inf_error: Vec<T>,
    pub per_agent_euclid_error: Vec<T>,
    pub sup_w: T,
    pub sup_v: T,
    pub residual_sup: Vec<T>,
}

/// Metrics over the final `window_fraction` of the logged time span.
pub fn tail_metrics<T: Real>(log: &TrajectoryLog<T>, window_fraction: T) -> TailMetrics<T> {
    let (t0, t1) = match (log.samples.first(), log.samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => (T::zero(), T::zero()),
    };
    window_metrics(log, t1 - (t1 - t0) * window_fraction, t1)
}

/// Metrics over samples with `start <= t <= end`.
pub fn window_metrics<T: Real>(log: &TrajectoryLog<T>, start: T, end: T) -> TailMetrics<T> {
    let agents = log.header.agent_count;
    let mut m = TailMetrics {
        window: (start, end),
        samples: 0,
        max_inf_error: T::zero(),
        max_euclid_error: T::zero(),
        per_agent_inf_error: vec![T::zero(); agents],
        per_agent_euclid_error: vec![T::zero(); agents],
        sup_w: T::zero(),
        sup_v: T::zero(),
        residual_sup: vec![T::zero(); agents],
    };
    // Half-step slack so windows given as round numbers include their ends.
    let slack = lit::<T>(0.5 * log.header.dt);
    for s in log
        .samples
        .iter()
        .filter(|s| s.t >= start - slack && s.t <= end + slack)
    {
        m.samples += 1;
        for i in (0..agents).filter(|&i| s.active[i]) {
            let e = &s.xhat[i] - &s.x;
            let inf = e.amax();
            let euclid = e.norm();
            m.per_agent_inf_error[i] = m.per_agent_inf_error[i].max(inf);
            m.per_agent_euclid_error[i] = m.per_agent_euclid_error[i].max(euclid);
            m.residual_sup[i] = m.residual_sup[i].max(s.residual[i]);
        }
        m.sup_w = m.sup_w.max(s.w);
        m.sup_v = m.sup_v.max(s.v);
    }
    m.max_inf_error = m.per_agent_inf_error.iter().copied().fold(T::zero(), T::max);
    m.max_euclid_error = m.per_agent_euclid_error.iter().copied().fold(T::zero(), T::max);
    m
}

/// Tail metrics for the scenario's configured window.
pub fn scenario_tail_metrics<T: Real>(spec: &ScenarioSpec<T>, log: &TrajectoryLog<T>) -> TailMetrics<T> {
    match spec.tail_window {
        Some((a, b)) => window_metrics(log, a, b),
        None => tail_metrics(log, spec.tail_fraction),
    }
}

/// Estimate formed by agent `i` from its own data only: the partial estimate
/// on its observable directions, completed by the resilient estimate on the
/// rest.
pub fn local_reconstruction<T: Real>(observer: &PartialObserver<T>, z: &DVector<T>, xhat: &DVector<T>) -> DVector<T> {
    let d = &observer.decomposition;
    &d.v_obs * z + &d.v_unobs * (&d.w_unobs * xhat)
}

struct Layout {
    n: usize,
    z_offsets: Vec<usize>,
    obs_dims: Vec<usize>,
    xhat_offset: usize,
    len: usize,
}

impl Layout {
    fn new(n: usize, obs_dims: Vec<usize>) -> Self {
        let mut z_offsets = Vec::with_capacity(obs_dims.len());
        let mut at = n;
        for &o in &obs_dims {
            z_offsets.push(at);
            at += o;
        }
        let xhat_offset = at;
        let len = at + n * obs_dims.len();
        Self {
            n,
            z_offsets,
            obs_dims,
            xhat_offset,
            len,
        }
    }

    fn z(&self, i: usize) -> std::ops::Range<usize> {
        self.z_offsets[i]..self.z_offsets[i] + self.obs_dims[i]
    }

    fn xhat(&self, i: usize) -> std::ops::Range<usize> {
        self.xhat_offset + i * self.n..self.xhat_offset + (i + 1) * self.n
    }
}

struct Dynamics<'a, T: Real> {
    prepared: &'a PreparedScenario<T>,
    layout: &'a Layout,
    active: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
    noise: Vec<Vec<T>>,
    u: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> Dynamics<'_, T> {
    fn set_active(&mut self, active: Vec<bool>) {
        let restricted = self.prepared.spec.topology.restricted(&active);
        self.neighbors = (0..active.len()).map(|i| restricted.neighbors(i).to_vec()).collect();
        self.active = active;
    }

    fn eval(&mut self, t: T, state: &DVector<T>, out: &mut DVector<T>) {
        let spec = &self.prepared.spec;
        let plant = &spec.plant;
        let l = self.layout;
        let n = l.n;
        let s = state.as_slice();
        let o = out.as_mut_slice();
        spec.input.value_into(t, &mut self.u);
        let x = &s[..n];
        let (a, b) = (plant.a(), plant.b());
        for k in 0..n {
            let mut acc = T::zero();
            for c in 0..n {
                acc += a[(k, c)] * x[c];
            }
            for (c, &uc) in self.u.iter().enumerate() {
                acc += b[(k, c)] * uc;
            }
            o[k] = acc;
        }
        let xhats = &s[l.xhat_offset..];
        for i in 0..self.active.len() {
            if !self.active[i] {
                o[l.z(i)].fill(T::zero());
                o[l.xhat(i)].fill(T::zero());
                continue;
            }
            let c = plant.c(i);
            let attack = spec.attacks.kinds[i].value(t);
            self.y.clear();
            for r in 0..c.nrows() {
                let mut acc = T::zero();
                for col in 0..n {
                    acc += c[(r, col)] * x[col];
                }
                self.y.push(acc + attack + self.noise[i][r]);
            }
            let observer = self.prepared.bank.observer(i);
            crate::estimator::partial_observer_rhs_into(&s[l.z(i)], &self.u, &self.y, observer, &mut o[l.z(i)]);
            self.prepared.network.resilient_rhs_into(
                i,
                xhats,
                &self.neighbors[i],
                &s[l.z(i)],
                &self.u,
                &mut o[l.xhat(i)],
            );
        }
    }
}

fn initial_state<T: Real>(spec: &ScenarioSpec<T>, layout: &Layout) -> (DVector<T>, Option<u64>) {
    let mut y = DVector::zeros(layout.len);
    match &spec.initial {
        InitialSpec::Explicit { x, z, xhat } => {
            y.rows_mut(0, layout.n).copy_from(x);
            if let Some(z) = z {
                for (i, zi) in z.iter().enumerate() {
                    y.rows_mut(layout.z_offsets[i], zi.len()).copy_from(zi);
                }
            }
            if let Some(xh) = xhat {
                for (i, v) in xh.iter().enumerate() {
                    y.rows_mut(layout.xhat(i).start, layout.n).copy_from(v);
                }
            }
            (y, None)
        }
        InitialSpec::RandomBox { half_width, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let h = to_f64(*half_width);
            for v in y.iter_mut() {
                *v = lit(if h > 0.0 { rng.random_range(-h..=h) } else { 0.0 });
            }
            (y, Some(*seed))
        }
    }
}

fn diagnostics_sample<T: Real>(
    prepared: &PreparedScenario<T>,
    layout: &Layout,
    transform: &DMatrix<T>,
    complement: &DMatrix<T>,
    t: T,
    state: &DVector<T>,
    active: &[bool],
) -> Sample<T> {
    let n = layout.n;
    let agents = layout.obs_dims.len();
    let x = DVector::from_column_slice(&state.as_slice()[..n]);
    let z: Vec<DVector<T>> = (0..agents)
        .map(|i| DVector::from_column_slice(&state.as_slice()[layout.z(i)]))
        .collect();
    let xhat: Vec<DVector<T>> = (0..agents)
        .map(|i| DVector::from_column_slice(&state.as_slice()[layout.xhat(i)]))
        .collect();
    let residual = (0..agents)
        .map(|i| crate::estimator::attack_residual(&z[i], &xhat[i], prepared.bank.observer(i)))
        .collect();
    let xbar: Vec<DVector<T>> = xhat.iter().map(|xh| transform * (xh - &x)).collect();
    let mut xbar_avg = DVector::zeros(n);
    for xb in &xbar {
        xbar_avg += xb;
    }
    xbar_avg /= from_usize::<T>(agents);
    let mut xtilde = DVector::zeros(n * complement.ncols());
    for k in 0..complement.ncols() {
        let mut block = xtilde.rows_mut(k * n, n);
        for (i, xb) in xbar.iter().enumerate() {
            block += xb * complement[(i, k)];
        }
    }
    Sample {
        t,
        w: xtilde.norm(),
        v: xbar_avg.norm(),
        x,
        z,
        xhat,
        residual,
        xbar,
        xbar_avg,
        xtilde,
        active: active.to_vec(),
    }
}

/// Integrates the full coupled system with fixed-step RK4.
pub fn run_scenario<T: Real>(spec: &ScenarioSpec<T>, options: RunOptions) -> Result<TrajectoryLog<T>, SimError> {
    spec.validate()?;
    let audit = audit_assumptions(spec);
    if !audit.all_pass() && !options.force {
        return Err(SimError::AuditFailure(Box::new(audit)));
    }
    let prepared = PreparedScenario::new(spec)?;
    run_prepared(&prepared, audit)
}

/// Integrates an already prepared scenario, skipping the audit.
pub fn run_prepared<T: Real>(prepared: &PreparedScenario<T>, audit: AuditReport) -> Result<TrajectoryLog<T>, SimError> {
    let spec = &prepared.spec;
    let n = spec.plant.state_dim();
    let agents = spec.agent_count();
    let obs_dims: Vec<usize> = prepared.bank.observers().iter().map(|o| o.observable_dim()).collect();
    let layout = Layout::new(n, obs_dims.clone());
    let transform = prepared.config.error_transform(&prepared.basis);
    let complement = if agents >= 2 {
        orthonormal_complement::<T>(agents)?
    } else {
        DMatrix::zeros(agents, 0)
    };

    let (mut state, seed) = initial_state(spec, &layout);
    let mut dynamics = Dynamics {
        prepared,
        layout: &layout,
        active: Vec::new(),
        neighbors: Vec::new(),
        noise: (0..agents).map(|i| vec![T::zero(); spec.plant.output_dim(i)]).collect(),
        u: vec![T::zero(); spec.plant.input_dim()],
        y: Vec::new(),
    };
    dynamics.set_active(vec![true; agents]);
    let mut noise_source = spec.noise.as_ref().map(|ns| {
        (
            ChaCha8Rng::seed_from_u64(ns.seed),
            Normal::new(0.0, to_f64(ns.std_dev)).expect("validated standard deviation"),
        )
    });

    let steps = step_count(spec.horizon, spec.dt);
    let mut event_steps: Vec<(usize, &AgentEvent<T>)> =
        spec.events.iter().map(|e| (step_count(e.time, spec.dt), e)).collect();
    event_steps.reverse();

    let mut samples = Vec::with_capacity(steps / spec.decimation + 2);
    let mut rk = Rk4::new(layout.len);
    let threshold = lit::<T>(BLOWUP_THRESHOLD);
    let mut last_stable = T::zero();
    for k in 0..=steps {
        let t = from_usize::<T>(k) * spec.dt;
        while let Some(&(ks, e)) = event_steps.last() {
            if ks != k {
                break;
            }
            let mut active = dynamics.active.clone();
            active[e.agent] = e.kind == EventKind::Join;
            dynamics.set_active(active);
            event_steps.pop();
        }
        if k % spec.decimation == 0 || k == steps {
            samples.push(diagnostics_sample(
                prepared,
                &layout,
                &transform,
                &complement,
                t,
                &state,
                &dynamics.active,
            ));
        }
        if k == steps {
            break;
        }
        if let Some((rng, normal)) = noise_source.as_mut() {
            for channel in dynamics.noise.iter_mut().flatten() {
                *channel = lit(normal.sample(rng));
            }
        }
        rk.step(&mut |tt, y, out| dynamics.eval(tt, y, out), t, spec.dt, &mut state);
        if state.iter().any(|v| !(v.abs() <= threshold)) {
            return Err(SimError::NumericalBlowup {
                time: to_f64(t + spec.dt),
                last_stable_time: to_f64(last_stable),
            });
        }
        last_stable = t + spec.dt;
    }

    Ok(TrajectoryLog {
        header: LogHeader {
            name: spec.name.clone(),
            state_dim: n,
            agent_count: agents,
            observable_dims: obs_dims,
            seed,
            noise_seed: spec.noise.as_ref().map(|ns| ns.seed),
            dt: to_f64(spec.dt),
            decimation: spec.decimation,
            assumption_violating: !audit.all_pass() || spec.attacks.violates_budget(),
        },
        samples,
        complement,
        bounds: prepared.bounds(),
        audit,
    })
}
