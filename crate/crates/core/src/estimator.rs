//! Observer network dynamics: partial observers, the resilient
//! median-consensus estimator in its general and Lyapunov-weighted forms,
//! steady-state bounds, plug-and-play gains and residual-based attack flags.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{spectral_norm, sqrt_pd, symmetrize};
use crate::observability::{ObserverBank, PartialObserver, PlantModel, SharedBasis};
use crate::scalar::{from_usize, lit, sgn, to_f64, Real};

/// Largest eigenvalue allowed for `PA + A^T P`.
pub const LYAPUNOV_TOLERANCE: f64 = 1e-9;
/// Eigenvalues of the projected certificate below this fraction of the
/// largest one are treated as zero.
pub const CERTIFICATE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("gain {name} must be positive, got {value}")]
    NonPositiveGain { name: &'static str, value: f64 },
    #[error("invalid Lyapunov certificate: PA + A^T P has eigenvalue {max_eigenvalue:e} > {LYAPUNOV_TOLERANCE:e}")]
    InvalidLyapunovCertificate { max_eigenvalue: f64 },
    #[error("certificate is not symmetric positive definite{0}")]
    NotPositiveDefinite(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
}

/// Data derived from a certificate `P > 0` with `PA + A^T P <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovData<T: Real> {
    pub p: DMatrix<T>,
    /// `V^T P V`.
    pub p_bar: DMatrix<T>,
    pub sqrt_p_bar: DMatrix<T>,
    pub inv_sqrt_p_bar: DMatrix<T>,
    /// `sqrt(P_bar) W`; row `l` is the weighted dual vector.
    pub w_bar: DMatrix<T>,
    /// `V sqrt(P_bar)^-1 W`.
    pub correction: DMatrix<T>,
}

impl<T: Real> LyapunovData<T> {
    pub fn new(plant: &PlantModel<T>, basis: &SharedBasis<T>, p: DMatrix<T>) -> Result<Self, EstimatorError> {
        let n = plant.state_dim();
        if p.shape() != (n, n) {
            return Err(EstimatorError::Dimension(format!(
                "certificate is {}x{}, state dimension is {n}",
                p.nrows(),
                p.ncols()
            )));
        }
        let asym = (&p - p.transpose()).amax();
        if asym > lit::<T>(1e-9) * p.amax().max(T::one()) {
            return Err(EstimatorError::NotPositiveDefinite(format!(
                " (asymmetry {:e})",
                to_f64(asym)
            )));
        }
        let p = symmetrize(&p);
        if sqrt_pd(&p, lit(CERTIFICATE_FLOOR)).is_none() {
            return Err(EstimatorError::NotPositiveDefinite(String::new()));
        }
        let lyap = symmetrize(&(&p * plant.a() + plant.a().transpose() * &p));
        let max_eigenvalue = lyap
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(lit::<T>(f64::NEG_INFINITY), T::max);
        if max_eigenvalue > lit(LYAPUNOV_TOLERANCE) {
            return Err(EstimatorError::InvalidLyapunovCertificate {
                max_eigenvalue: to_f64(max_eigenvalue),
            });
        }
        let p_bar = symmetrize(&(basis.v().transpose() * &p * basis.v()));
        let (sqrt_p_bar, inv_sqrt_p_bar) = sqrt_pd(&p_bar, lit(CERTIFICATE_FLOOR))
            .ok_or_else(|| EstimatorError::NotPositiveDefinite(" in basis coordinates".into()))?;
        let w_bar = &sqrt_p_bar * basis.w();
        let correction = basis.v() * &inv_sqrt_p_bar * basis.w();
        Ok(Self {
            p,
            p_bar,
            sqrt_p_bar,
            inv_sqrt_p_bar,
            w_bar,
            correction,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Variant<T: Real> {
    General,
    Lyapunov(Box<LyapunovData<T>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<T: Real> {
    kappa: T,
    gamma: T,
    variant: Variant<T>,
}

impl<T: Real> Default for EstimatorConfig<T> {
    fn default() -> Self {
        Self {
            kappa: lit(0.5),
            gamma: lit(2.0),
            variant: Variant::General,
        }
    }
}

fn check_gain<T: Real>(name: &'static str, value: T) -> Result<(), EstimatorError> {
    if value > T::zero() && value.is_finite() {
        Ok(())
    } else {
        Err(EstimatorError::NonPositiveGain {
            name,
            value: to_f64(value),
        })
    }
}

impl<T: Real> EstimatorConfig<T> {
    pub fn general(kappa: T, gamma: T) -> Result<Self, EstimatorError> {
        check_gain("kappa", kappa)?;
        check_gain("gamma", gamma)?;
        Ok(Self {
            kappa,
            gamma,
            variant: Variant::General,
        })
    }

    pub fn lyapunov(kappa: T, gamma: T, data: LyapunovData<T>) -> Result<Self, EstimatorError> {
        check_gain("kappa", kappa)?;
        check_gain("gamma", gamma)?;
        Ok(Self {
            kappa,
            gamma,
            variant: Variant::Lyapunov(Box::new(data)),
        })
    }

    pub fn kappa(&self) -> T {
        self.kappa
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn variant(&self) -> &Variant<T> {
        &self.variant
    }

    pub fn lyapunov_data(&self) -> Option<&LyapunovData<T>> {
        match &self.variant {
            Variant::General => None,
            Variant::Lyapunov(d) => Some(d),
        }
    }

    /// Map from `xhat_i - x` to the error coordinates used by the analysis:
    /// `W` or `sqrt(P_bar) W`.
    pub fn error_transform(&self, basis: &SharedBasis<T>) -> DMatrix<T> {
        match &self.variant {
            Variant::General => basis.w().clone(),
            Variant::Lyapunov(d) => d.w_bar.clone(),
        }
    }

    /// `||V sqrt(P_bar)^-1||` for the Lyapunov variant.
    pub fn scaling_norm(&self, basis: &SharedBasis<T>) -> Option<T> {
        self.lyapunov_data()
            .map(|d| spectral_norm(&(basis.v() * &d.inv_sqrt_p_bar)))
    }
}

/// `W_i (A V_i z_i + B u) + L_i (y_i - C_i V_i z_i)`.
pub fn partial_observer_rhs<T: Real>(
    z: &DVector<T>,
    u: &DVector<T>,
    y: &DVector<T>,
    observer: &PartialObserver<T>,
) -> DVector<T> {
    let mut out = DVector::zeros(observer.observable_dim());
    partial_observer_rhs_into(z.as_slice(), u.as_slice(), y.as_slice(), observer, out.as_mut_slice());
    out
}

pub fn partial_observer_rhs_into<T: Real>(z: &[T], u: &[T], y: &[T], observer: &PartialObserver<T>, out: &mut [T]) {
    let o = observer.observable_dim();
    let m = y.len();
    let mut innovation = vec![T::zero(); m];
    for (r, inn) in innovation.iter_mut().enumerate() {
        let mut acc = y[r];
        for c in 0..o {
            acc -= observer.cv[(r, c)] * z[c];
        }
        *inn = acc;
    }
    for k in 0..o {
        let mut acc = T::zero();
        for c in 0..o {
            acc += observer.wav[(k, c)] * z[c];
        }
        for c in 0..u.len() {
            acc += observer.wb[(k, c)] * u[c];
        }
        for (r, inn) in innovation.iter().enumerate() {
            acc += observer.gain[(k, r)] * *inn;
        }
        out[k] = acc;
    }
}

/// Per-agent matrices of the resilient estimator.
#[derive(Debug, Clone, PartialEq)]
struct AgentLaw<T: Real> {
    /// Rows multiplying `xhat_i` inside the signum (`W` or `sqrt(P_bar) W`).
    state_rows: DMatrix<T>,
    /// Same rows composed with `V_i`, multiplying `z_i`.
    partial_rows: DMatrix<T>,
    indicators: Vec<bool>,
}

/// The resilient estimator for every agent of a network, with all products
/// that do not depend on the state cached.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorNetwork<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    /// Maps the vector of indicated signs to the state correction: `V` in
    /// the general form, `V sqrt(P_bar)^-1 W V` in the Lyapunov form.
    correction: DMatrix<T>,
    laws: Vec<AgentLaw<T>>,
    kappa: T,
    coupling: T,
}

impl<T: Real> EstimatorNetwork<T> {
    pub fn new(
        plant: &PlantModel<T>,
        basis: &SharedBasis<T>,
        bank: &ObserverBank<T>,
        config: &EstimatorConfig<T>,
    ) -> Self {
        Self::for_observers(plant, basis, bank.observers(), config)
    }

    /// Network whose `k`-th agent runs `observers[k]`.
    pub fn for_observers(
        plant: &PlantModel<T>,
        basis: &SharedBasis<T>,
        observers: &[PartialObserver<T>],
        config: &EstimatorConfig<T>,
    ) -> Self {
        let rows = config.error_transform(basis);
        let correction = match &config.variant {
            Variant::General => basis.v().clone(),
            Variant::Lyapunov(d) => &d.correction * basis.v(),
        };
        let laws = observers
            .iter()
            .map(|obs| AgentLaw {
                partial_rows: &rows * &obs.decomposition.v_obs,
                state_rows: rows.clone(),
                indicators: basis.indicator_row(obs.bank).to_vec(),
            })
            .collect();
        Self {
            a: plant.a().clone(),
            b: plant.b().clone(),
            correction,
            laws,
            kappa: config.kappa,
            coupling: config.kappa * config.gamma,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn agent_count(&self) -> usize {
        self.laws.len()
    }

    /// Right-hand side of agent `i`'s resilient estimate. `xhats` stacks
    /// every agent's estimate (`n` entries each); `neighbors` lists the
    /// agents whose estimates are read.
    pub fn resilient_rhs_into(&self, i: usize, xhats: &[T], neighbors: &[usize], z: &[T], u: &[T], out: &mut [T]) {
        let n = self.state_dim();
        let law = &self.laws[i];
        let xi = &xhats[i * n..(i + 1) * n];
        let mut signs = [T::zero(); 16];
        let mut heap;
        let signs: &mut [T] = if n <= signs.len() {
            &mut signs[..n]
        } else {
            heap = vec![T::zero(); n];
            &mut heap
        };
        for (l, sign) in signs.iter_mut().enumerate() {
            if !law.indicators[l] {
                *sign = T::zero();
                continue;
            }
            let mut from_partial = T::zero();
            for (c, &zc) in z.iter().enumerate() {
                from_partial += law.partial_rows[(l, c)] * zc;
            }
            let mut from_state = T::zero();
            for (c, &xc) in xi.iter().enumerate() {
                from_state += law.state_rows[(l, c)] * xc;
            }
            *sign = sgn(from_partial - from_state);
        }
        for k in 0..n {
            let mut model = T::zero();
            for c in 0..n {
                model += self.a[(k, c)] * xi[c];
            }
            for (c, &uc) in u.iter().enumerate() {
                model += self.b[(k, c)] * uc;
            }
            let mut correction = T::zero();
            for (l, &s) in signs.iter().enumerate() {
                correction += self.correction[(k, l)] * s;
            }
            let mut coupling = T::zero();
            for &j in neighbors {
                coupling += xhats[j * n + k] - xi[k];
            }
            out[k] = model + self.kappa * correction + self.coupling * coupling;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn resilient_rhs_single<T: Real>(
    xhat_i: &DVector<T>,
    neighbors: &[DVector<T>],
    z_i: &DVector<T>,
    u: &DVector<T>,
    observer: &PartialObserver<T>,
    plant: &PlantModel<T>,
    basis: &SharedBasis<T>,
    config: &EstimatorConfig<T>,
) -> DVector<T> {
    let n = plant.state_dim();
    let network = EstimatorNetwork::for_observers(plant, basis, std::slice::from_ref(observer), config);
    let mut xhats = Vec::with_capacity(n * (neighbors.len() + 1));
    xhats.extend_from_slice(xhat_i.as_slice());
    for x in neighbors {
        xhats.extend_from_slice(x.as_slice());
    }
    let ids: Vec<usize> = (1..=neighbors.len()).collect();
    let mut out = DVector::zeros(n);
    network.resilient_rhs_into(0, &xhats, &ids, z_i.as_slice(), u.as_slice(), out.as_mut_slice());
    out
}

/// `A xhat_i + B u + kappa sum_l s_i^l sgn(w_l^T V_i z_i - w_l^T xhat_i) v_l
/// + kappa gamma sum_j (xhat_j - xhat_i)`.
#[allow(clippy::too_many_arguments)]
pub fn resilient_rhs_general<T: Real>(
    xhat_i: &DVector<T>,
    neighbors: &[DVector<T>],
    z_i: &DVector<T>,
    u: &DVector<T>,
    observer: &PartialObserver<T>,
    plant: &PlantModel<T>,
    basis: &SharedBasis<T>,
    config: &EstimatorConfig<T>,
) -> Result<DVector<T>, EstimatorError> {
    if config.lyapunov_data().is_some() {
        return Err(EstimatorError::Domain(
            "configuration selects the Lyapunov variant".into(),
        ));
    }
    Ok(resilient_rhs_single(
        xhat_i, neighbors, z_i, u, observer, plant, basis, config,
    ))
}

/// Lyapunov-weighted form: the signum rows are `sqrt(P_bar) W` and the
/// correction is premultiplied by `V sqrt(P_bar)^-1 W`.
#[allow(clippy::too_many_arguments)]
pub fn resilient_rhs_lyapunov<T: Real>(
    xhat_i: &DVector<T>,
    neighbors: &[DVector<T>],
    z_i: &DVector<T>,
    u: &DVector<T>,
    observer: &PartialObserver<T>,
    plant: &PlantModel<T>,
    basis: &SharedBasis<T>,
    config: &EstimatorConfig<T>,
) -> Result<DVector<T>, EstimatorError> {
    if config.lyapunov_data().is_none() {
        return Err(EstimatorError::Domain(
            "configuration selects the general variant".into(),
        ));
    }
    Ok(resilient_rhs_single(
        xhat_i, neighbors, z_i, u, observer, plant, basis, config,
    ))
}

fn check_positive<T: Real>(name: &str, value: T) -> Result<(), EstimatorError> {
    if value > T::zero() && value.is_finite() {
        Ok(())
    } else {
        Err(EstimatorError::Domain(format!("{name} must be positive, got {value}")))
    }
}

/// `(N n^2 + sqrt(n)) sqrt(N) / (gamma lambda_2) * ||V sqrt(P_bar)^-1||`.
pub fn steady_state_bound<T: Real>(
    agents: usize,
    state_dim: usize,
    gamma: T,
    lambda2: T,
    scaling_norm: T,
) -> Result<T, EstimatorError> {
    if agents == 0 || state_dim == 0 {
        return Err(EstimatorError::Domain(
            "agent count and state dimension must be positive".into(),
        ));
    }
    check_positive("gamma", gamma)?;
    check_positive("lambda_2", lambda2)?;
    let big_n = from_usize::<T>(agents);
    let n = from_usize::<T>(state_dim);
    Ok((big_n * n * n + n.sqrt()) * big_n.sqrt() / (gamma * lambda2) * scaling_norm)
}

/// Steady-state bound on the disagreement norm: `sqrt(N n) / (gamma lambda_2)`.
pub fn disagreement_bound<T: Real>(agents: usize, state_dim: usize, gamma: T, lambda2: T) -> Result<T, EstimatorError> {
    check_positive("gamma", gamma)?;
    check_positive("lambda_2", lambda2)?;
    Ok((from_usize::<T>(agents) * from_usize::<T>(state_dim)).sqrt() / (gamma * lambda2))
}

/// Gains `(kappa, gamma)` for networks of at most `max_agents` agents that
/// keep the steady-state bound below `target` on any connected graph.
/// `kappa * gamma == 1` holds exactly.
pub fn plug_and_play_params<T: Real>(
    max_agents: usize,
    state_dim: usize,
    target: T,
    scaling_norm: T,
) -> Result<(T, T), EstimatorError> {
    if max_agents < 2 {
        return Err(EstimatorError::Domain(format!(
            "maximum agent count must be at least 2, got {max_agents}"
        )));
    }
    if state_dim == 0 {
        return Err(EstimatorError::Domain("state dimension must be positive".into()));
    }
    check_positive("target bound", target)?;
    check_positive("scaling norm", scaling_norm)?;
    let nbar = from_usize::<T>(max_agents);
    let n = from_usize::<T>(state_dim);
    let lambda_floor = lit::<T>(4.0) / (nbar * nbar - nbar);
    let gamma = scaling_norm * nbar.sqrt() * (nbar * n * n + n.sqrt()) / (target * lambda_floor);
    // 1/gamma rounds, so search the neighbouring floats (upwards first, which
    // keeps the bound guarantee) for one whose reciprocal multiplies back to 1.
    let eps = T::default_epsilon();
    for k in 0..64 {
        for dir in [T::one(), -T::one()] {
            let g = gamma * (T::one() + dir * from_usize::<T>(k) * eps);
            if g * (T::one() / g) == T::one() {
                return Ok((T::one() / g, g));
            }
        }
    }
    Err(EstimatorError::Domain(format!(
        "no representable gain pair with unit product near {gamma}"
    )))
}

/// `||z_i - W_i xhat_i||`.
pub fn attack_residual<T: Real>(z: &DVector<T>, xhat: &DVector<T>, observer: &PartialObserver<T>) -> T {
    if observer.observable_dim() == 0 {
        return T::zero();
    }
    (z - &observer.decomposition.w_obs * xhat).norm()
}

/// True iff `residuals` stays above `threshold` over a run of consecutive
/// samples lasting at least `dwell` time units.
pub fn detect_attacked<T: Real>(times: &[T], residuals: &[T], threshold: T, dwell: T) -> Result<bool, EstimatorError> {
    check_positive("threshold", threshold)?;
    check_positive("dwell", dwell)?;
    if times.len() != residuals.len() {
        return Err(EstimatorError::Dimension(format!(
            "{} times but {} residuals",
            times.len(),
            residuals.len()
        )));
    }
    let mut run_start: Option<T> = None;
    for (&t, &r) in times.iter().zip(residuals) {
        if r > threshold {
            let start = *run_start.get_or_insert(t);
            if t - start >= dwell {
                return Ok(true);
            }
        } else {
            run_start = None;
        }
    }
    Ok(false)
}
