//! Static distributed median solver: median sets of indicated values, the
//! centralized signum gradient flow and its networked counterpart with
//! Laplacian coupling.

use nalgebra::DVector;
use thiserror::Error;

use crate::graph::{algebraic_connectivity, GraphError, Topology};
use crate::integrate::{step_count, Rk4};
use crate::scalar::{from_usize, lit, sgn, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MedianError {
    #[error("no indicated values: at least one indicator must be set")]
    NoIndicatedValues,
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Closed interval `[lower, upper]` of medians; a singleton for an odd count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianSet<T: Real> {
    pub lower: T,
    pub upper: T,
}

impl<T: Real> MedianSet<T> {
    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, x: T) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn distance(&self, x: T) -> T {
        if x < self.lower {
            self.lower - x
        } else if x > self.upper {
            x - self.upper
        } else {
            T::zero()
        }
    }
}

pub fn median_set<T: Real>(values: &[T], indicators: &[bool]) -> Result<MedianSet<T>, MedianError> {
    if values.len() != indicators.len() {
        return Err(MedianError::Dimension(format!(
            "{} values but {} indicators",
            values.len(),
            indicators.len()
        )));
    }
    let mut picked: Vec<T> = values
        .iter()
        .zip(indicators)
        .filter_map(|(&z, &s)| s.then_some(z))
        .collect();
    if picked.is_empty() {
        return Err(MedianError::NoIndicatedValues);
    }
    picked.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let count = picked.len();
    Ok(if count % 2 == 1 {
        MedianSet {
            lower: picked[count / 2],
            upper: picked[count / 2],
        }
    } else {
        MedianSet {
            lower: picked[count / 2 - 1],
            upper: picked[count / 2],
        }
    })
}

/// How the discontinuous signum is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SignMode<T: Real> {
    /// `sgn` with `sgn(0) = 0`.
    #[default]
    Exact,
    /// `sat(s / eps)`, for chattering studies.
    Saturated(T),
}

impl<T: Real> SignMode<T> {
    #[inline]
    pub fn apply(&self, s: T) -> T {
        match *self {
            SignMode::Exact => sgn(s),
            SignMode::Saturated(eps) => (s / eps).max(-T::one()).min(T::one()),
        }
    }
}

/// `sum_i s_i sgn(z_i - xhat)`.
pub fn centralized_median_rhs<T: Real>(xhat: T, values: &[T], indicators: &[bool]) -> T {
    values
        .iter()
        .zip(indicators)
        .filter(|(_, &s)| s)
        .fold(T::zero(), |acc, (&z, _)| acc + sgn(z - xhat))
}

/// `s_i sgn(z_i - x_i) + gamma sum_{j in N_i} (x_j - x_i)` for every agent.
pub fn distributed_median_rhs<T: Real>(
    x: &DVector<T>,
    values: &[T],
    indicators: &[bool],
    gamma: T,
    topology: &Topology,
) -> DVector<T> {
    let mut out = DVector::zeros(x.len());
    distributed_median_rhs_into(x, values, indicators, gamma, topology, SignMode::Exact, &mut out);
    out
}

pub fn distributed_median_rhs_into<T: Real>(
    x: &DVector<T>,
    values: &[T],
    indicators: &[bool],
    gamma: T,
    topology: &Topology,
    sign: SignMode<T>,
    out: &mut DVector<T>,
) {
    for i in 0..x.len() {
        let s = if indicators[i] { T::one() } else { T::zero() };
        let local = s * sign.apply(values[i] - x[i]);
        let coupling = topology
            .neighbors(i)
            .iter()
            .fold(T::zero(), |acc, &j| acc + (x[j] - x[i]));
        out[i] = local + gamma * coupling;
    }
}

/// `2 sqrt(N) / (gamma lambda_2)`.
pub fn median_tracking_bound<T: Real>(agents: usize, gamma: T, lambda2: T) -> Result<T, MedianError> {
    if agents == 0 {
        return Err(MedianError::Domain("agent count must be positive".into()));
    }
    if !(gamma > T::zero()) || !(lambda2 > T::zero()) {
        return Err(MedianError::Domain(format!(
            "gamma and lambda_2 must be positive (gamma = {gamma}, lambda_2 = {lambda2})"
        )));
    }
    Ok(lit::<T>(2.0) * from_usize::<T>(agents).sqrt() / (gamma * lambda2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianProblem<T: Real> {
    pub values: Vec<T>,
    pub indicators: Vec<bool>,
    pub topology: Topology,
    pub gamma: T,
}

impl<T: Real> MedianProblem<T> {
    pub fn new(values: Vec<T>, indicators: Vec<bool>, topology: Topology, gamma: T) -> Result<Self, MedianError> {
        let n = topology.node_count();
        if values.len() != n || indicators.len() != n {
            return Err(MedianError::Dimension(format!(
                "{} values and {} indicators for {n} agents",
                values.len(),
                indicators.len()
            )));
        }
        if !indicators.iter().any(|&s| s) {
            return Err(MedianError::NoIndicatedValues);
        }
        if !(gamma > T::zero()) {
            return Err(MedianError::Domain(format!("gamma must be positive, got {gamma}")));
        }
        Ok(Self {
            values,
            indicators,
            topology,
            gamma,
        })
    }

    pub fn agent_count(&self) -> usize {
        self.values.len()
    }

    pub fn median_set(&self) -> MedianSet<T> {
        median_set(&self.values, &self.indicators).expect("validated on construction")
    }

    /// `lambda_2` of the topology; `None` for a single agent.
    pub fn lambda2(&self) -> Option<T> {
        if self.agent_count() < 2 {
            return None;
        }
        algebraic_connectivity(&self.topology.laplacian()).ok()
    }

    /// Steady-state tracking bound; `None` when it does not apply
    /// (single agent or disconnected graph).
    pub fn bound(&self) -> Option<T> {
        let l2 = self.lambda2()?;
        if !self.topology.is_connected() {
            return None;
        }
        median_tracking_bound(self.agent_count(), self.gamma, l2).ok()
    }

    /// Horizon long enough for the transient plus a 20% tail window.
    ///
    /// The transient is `10/(gamma lambda_2) + 10 N / gamma` for consensus plus
    /// `N D`, where `D` spans all values and initial states: away from the
    /// median set the average moves at speed at least `1/N`.
    pub fn default_horizon(&self, x0: &DVector<T>) -> T {
        let n = from_usize::<T>(self.agent_count());
        let all = self.values.iter().chain(x0.iter());
        let lo = all.clone().copied().fold(lit::<T>(f64::INFINITY), T::min);
        let hi = all.copied().fold(lit::<T>(f64::NEG_INFINITY), T::max);
        let spread = hi - lo;
        let consensus = match self.lambda2() {
            Some(l2) if l2 > T::zero() => lit::<T>(10.0) / (self.gamma * l2),
            _ => T::zero(),
        };
        let transient = consensus + lit::<T>(10.0) * n / self.gamma + n * spread;
        (transient / lit::<T>(0.8)).max(T::one())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianOptions<T: Real> {
    pub sign: SignMode<T>,
    /// Keep every `record_every`-th state (the tail statistic always uses
    /// every step).
    pub record_every: usize,
    /// Fraction of the horizon used as the tail window.
    pub tail_fraction: T,
}

impl<T: Real> Default for MedianOptions<T> {
    fn default() -> Self {
        Self {
            sign: SignMode::Exact,
            record_every: 1,
            tail_fraction: lit(0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRun<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<DVector<T>>,
    /// `max_i dist(x_i, M)` at each recorded sample.
    pub distances: Vec<T>,
    pub median: MedianSet<T>,
    pub tail_start: T,
    /// `max_i sup_t dist(x_i(t), M)` over the tail window, sampled every step.
    pub tail_distance: T,
    pub bound: Option<T>,
    pub lambda2: Option<T>,
}

fn max_distance<T: Real>(median: &MedianSet<T>, x: &DVector<T>) -> T {
    x.iter().fold(T::zero(), |acc, &xi| acc.max(median.distance(xi)))
}

pub fn run_median_solver<T: Real>(
    problem: &MedianProblem<T>,
    x0: &DVector<T>,
    horizon: T,
    dt: T,
) -> Result<MedianRun<T>, MedianError> {
    run_median_solver_with(problem, x0, horizon, dt, &MedianOptions::default())
}

pub fn run_median_solver_with<T: Real>(
    problem: &MedianProblem<T>,
    x0: &DVector<T>,
    horizon: T,
    dt: T,
    options: &MedianOptions<T>,
) -> Result<MedianRun<T>, MedianError> {
    let n = problem.agent_count();
    if x0.len() != n {
        return Err(MedianError::Dimension(format!(
            "initial state has {} entries for {n} agents",
            x0.len()
        )));
    }
    if !(dt > T::zero()) || !(horizon > T::zero()) {
        return Err(MedianError::Domain("horizon and dt must be positive".into()));
    }
    let median = median_set(&problem.values, &problem.indicators)?;
    let steps = step_count(horizon, dt);
    let tail_start = horizon * (T::one() - options.tail_fraction);
    let record_every = options.record_every.max(1);

    let mut rk = Rk4::new(n);
    let mut x = x0.clone();
    let mut times = vec![T::zero()];
    let mut states = vec![x.clone()];
    let mut distances = vec![max_distance(&median, &x)];
    let mut tail_distance = T::zero();
    let mut rhs = |_t: T, y: &DVector<T>, out: &mut DVector<T>| {
        distributed_median_rhs_into(
            y,
            &problem.values,
            &problem.indicators,
            problem.gamma,
            &problem.topology,
            options.sign,
            out,
        )
    };
    for k in 0..steps {
        let t = from_usize::<T>(k) * dt;
        rk.step(&mut rhs, t, dt, &mut x);
        let t_next = from_usize::<T>(k + 1) * dt;
        let d = max_distance(&median, &x);
        if t_next >= tail_start {
            tail_distance = tail_distance.max(d);
        }
        if (k + 1) % record_every == 0 || k + 1 == steps {
            times.push(t_next);
            states.push(x.clone());
            distances.push(d);
        }
    }
    Ok(MedianRun {
        times,
        states,
        distances,
        median,
        tail_start,
        tail_distance,
        bound: problem.bound(),
        lambda2: problem.lambda2(),
    })
}
