//! Static structure of the plant: unobservable subspaces of every sensor
//! bank, shared-basis construction and validation, redundancy audits, the
//! per-bank Kalman observability decomposition and partial-observer gains.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::linalg::{
    condition_number, hstack, max_real_eigenvalue, null_space, null_space_abs, range_basis, rank, select_columns,
    select_rows, spectral_norm, vstack,
};
use crate::scalar::{from_usize, lit, Real};

/// Subset counts above this are refused by the redundancy check.
pub const MAX_REDUNDANCY_SUBSETS: u128 = 1_000_000;

/// Largest admissible condition number for a user-supplied basis.
pub const MAX_BASIS_CONDITION: f64 = 1e12;

/// Agent indices in messages are 1-based to match the bank numbering used in
/// scenario files and reports.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("basis matrix is singular or too ill-conditioned (condition number {condition:e})")]
    SingularBasis { condition: f64 },
    #[error("unobservable subspace of bank {} is not spanned by a subset of the basis", .agent + 1)]
    BasisMismatch { agent: usize },
    #[error("no shared basis found: {0}; supply one explicitly in the scenario file")]
    NoSharedBasisFound(String),
    #[error("redundancy check needs 2q < N (q = {q}, N = {banks})")]
    RedundancyPrecondition { q: usize, banks: usize },
    #[error("redundancy check would enumerate {subsets} subsets (limit {MAX_REDUNDANCY_SUBSETS})")]
    CombinatorialLimit { subsets: u128 },
    #[error("decomposition of bank {} violates the block-zero structure (residual {residual:e})", .agent + 1)]
    StructureViolation { agent: usize, residual: f64 },
    #[error("observer pair is not observable (rank {rank} of {dim})")]
    UnobservablePair { rank: usize, dim: usize },
    #[error("pole target must be negative, got {0}")]
    InvalidPoleTarget(f64),
    #[error("gain design failed to reach a Hurwitz error matrix (max real part {max_real:e})")]
    PlacementFailed { max_real: f64 },
}

/// `x' = A x + B u`, `y_i = C_i x` for `N` sensor banks.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel<T: Real> {
    a: DMatrix<T>,
    b: DMatrix<T>,
    c_blocks: Vec<DMatrix<T>>,
}

impl<T: Real> PlantModel<T> {
    pub fn new(a: DMatrix<T>, b: DMatrix<T>, c_blocks: Vec<DMatrix<T>>) -> Result<Self, ObservabilityError> {
        let n = a.nrows();
        if !a.is_square() || n == 0 {
            return Err(ObservabilityError::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(ObservabilityError::Dimension(format!(
                "B has {} rows, expected {n}",
                b.nrows()
            )));
        }
        if c_blocks.is_empty() {
            return Err(ObservabilityError::Dimension(
                "at least one sensor bank is required".into(),
            ));
        }
        for (i, c) in c_blocks.iter().enumerate() {
            if c.ncols() != n {
                return Err(ObservabilityError::Dimension(format!(
                    "C_{} has {} columns, expected {n}",
                    i + 1,
                    c.ncols()
                )));
            }
        }
        Ok(Self { a, b, c_blocks })
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn c(&self, i: usize) -> &DMatrix<T> {
        &self.c_blocks[i]
    }

    pub fn c_blocks(&self) -> &[DMatrix<T>] {
        &self.c_blocks
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn bank_count(&self) -> usize {
        self.c_blocks.len()
    }

    pub fn output_dim(&self, i: usize) -> usize {
        self.c_blocks[i].nrows()
    }

    pub fn total_output_dim(&self) -> usize {
        self.c_blocks.iter().map(|c| c.nrows()).sum()
    }

    /// Output blocks of `banks` stacked vertically.
    pub fn stacked_output(&self, banks: &[usize]) -> DMatrix<T> {
        let blocks: Vec<&DMatrix<T>> = banks.iter().map(|&i| &self.c_blocks[i]).collect();
        vstack(&blocks, self.state_dim())
    }
}

/// `col(C, CA, ..., CA^{n-1})`.
pub fn observability_matrix<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let m = c.nrows();
    let mut out = DMatrix::zeros(m * n, n);
    let mut block = c.clone();
    for k in 0..n {
        out.rows_mut(k * m, m).copy_from(&block);
        block = &block * a;
    }
    out
}

/// Orthonormal basis of the unobservable subspace of `(c, a)`, i.e. the null
/// space of the observability matrix.
///
/// Computed as the largest `A`-invariant subspace inside `ker C` by repeated
/// deflation (`Z <- Z null((I - Z Z^T) A Z)`), which avoids the wildly scaled
/// powers `C A^k` of the stacked observability matrix.
pub fn unobservable_subspace<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let n = a.nrows();
    let mut z = null_space(c, tol);
    let a_scale = spectral_norm(a).max(T::one());
    while z.ncols() > 0 {
        let az = a * &z;
        let residual = &az - &z * (z.transpose() * &az);
        let keep = null_space_abs(&residual, tol * a_scale);
        if keep.ncols() == z.ncols() {
            break;
        }
        z = &z * keep;
    }
    debug_assert_eq!(z.nrows(), n);
    z
}

pub fn is_observable<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>, tol: T) -> bool {
    unobservable_subspace(a, c, tol).ncols() == 0
}

/// Basis `{v_l}` of the state space in which every unobservable subspace is
/// spanned by basis vectors, together with its dual rows and the indicator
/// table `s_i^l` (`true` when direction `l` is observable from bank `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBasis<T: Real> {
    v: DMatrix<T>,
    w: DMatrix<T>,
    indicators: Vec<Vec<bool>>,
}

impl<T: Real> SharedBasis<T> {
    /// Basis vectors as columns.
    pub fn v(&self) -> &DMatrix<T> {
        &self.v
    }

    /// Dual rows, `W V = I`.
    pub fn w(&self) -> &DMatrix<T> {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn bank_count(&self) -> usize {
        self.indicators.len()
    }

    pub fn indicator(&self, bank: usize, l: usize) -> bool {
        self.indicators[bank][l]
    }

    pub fn indicator_row(&self, bank: usize) -> &[bool] {
        &self.indicators[bank]
    }

    pub fn indicators(&self) -> &[Vec<bool>] {
        &self.indicators
    }

    pub fn observable_directions(&self, bank: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&l| self.indicators[bank][l]).collect()
    }

    pub fn unobservable_directions(&self, bank: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&l| !self.indicators[bank][l]).collect()
    }

    /// Number of banks observing each direction.
    pub fn column_counts(&self) -> Vec<usize> {
        (0..self.dim())
            .map(|l| self.indicators.iter().filter(|row| row[l]).count())
            .collect()
    }

    /// Same table restricted to a subset of banks (used after agents leave).
    pub fn restricted_counts(&self, banks: &[usize]) -> Vec<usize> {
        (0..self.dim())
            .map(|l| banks.iter().filter(|&&i| self.indicators[i][l]).count())
            .collect()
    }
}

/// Validates `v` as a shared basis and fills in the indicator table.
pub fn check_shared_basis<T: Real>(
    plant: &PlantModel<T>,
    v: &DMatrix<T>,
    tol: T,
) -> Result<SharedBasis<T>, ObservabilityError> {
    let n = plant.state_dim();
    if v.shape() != (n, n) {
        return Err(ObservabilityError::Dimension(format!(
            "basis must be {n}x{n}, got {}x{}",
            v.nrows(),
            v.ncols()
        )));
    }
    let condition = condition_number(v);
    if !(condition < lit(MAX_BASIS_CONDITION)) {
        return Err(ObservabilityError::SingularBasis {
            condition: crate::scalar::to_f64(condition),
        });
    }
    let w = v.clone().try_inverse().ok_or(ObservabilityError::SingularBasis {
        condition: f64::INFINITY,
    })?;

    let mut indicators = Vec::with_capacity(plant.bank_count());
    for i in 0..plant.bank_count() {
        let u = unobservable_subspace(plant.a(), plant.c(i), tol);
        let mut row = vec![true; n];
        for (l, s) in row.iter_mut().enumerate() {
            let col = v.column(l);
            let unit = DMatrix::from_column_slice(n, 1, (col / col.norm()).as_slice());
            // v_l is in U_i iff appending it does not raise the rank.
            if u.ncols() > 0 && rank(&hstack(&[&u, &unit]), tol) == u.ncols() {
                *s = false;
            }
        }
        let zero_set: Vec<usize> = (0..n).filter(|&l| !row[l]).collect();
        let spanned = rank(&select_columns(v, &zero_set), tol);
        if spanned != u.ncols() {
            return Err(ObservabilityError::BasisMismatch { agent: i });
        }
        indicators.push(row);
    }
    Ok(SharedBasis {
        v: v.clone(),
        w,
        indicators,
    })
}

/// Heuristic search for a shared basis.
///
/// Tries, in order: the identity (every bank observable), the real
/// eigenbasis when `A` has distinct eigenvalues, and a greedy merge of the
/// intersection lattice of the unobservable subspaces. Whatever is produced
/// is validated with [`check_shared_basis`]. A failure here does not prove
/// that no shared basis exists.
pub fn construct_shared_basis<T: Real>(plant: &PlantModel<T>, tol: T) -> Result<SharedBasis<T>, ObservabilityError> {
    let n = plant.state_dim();
    let subspaces: Vec<DMatrix<T>> = (0..plant.bank_count())
        .map(|i| unobservable_subspace(plant.a(), plant.c(i), tol))
        .collect();
    if subspaces.iter().all(|u| u.ncols() == 0) {
        return check_shared_basis(plant, &DMatrix::identity(n, n), tol);
    }
    if let Some(v) = real_eigenbasis(plant.a(), tol) {
        if let Ok(basis) = check_shared_basis(plant, &v, tol) {
            return Ok(basis);
        }
    }
    let v = lattice_merge(&subspaces, n, tol).map_err(ObservabilityError::NoSharedBasisFound)?;
    check_shared_basis(plant, &v, tol)
        .map_err(|e| ObservabilityError::NoSharedBasisFound(format!("merged lattice basis rejected ({e})")))
}

/// Real eigenbasis of `a` when all eigenvalues are distinct: one unit vector
/// per real eigenvalue and, per complex pair `alpha +- i beta`, two columns in
/// which `a` acts as `[[alpha, beta], [-beta, alpha]]`. Blocks are
/// sign-normalized and ordered by the index of their dominant entry.
fn real_eigenbasis<T: Real>(a: &DMatrix<T>, tol: T) -> Option<DMatrix<T>> {
    let n = a.nrows();
    let eigs = a.clone().complex_eigenvalues();
    let scale = spectral_norm(a).max(T::one());
    let sep = tol.sqrt() * scale;
    for (i, j) in (0..n).tuple_combinations() {
        let d = eigs[i] - eigs[j];
        if (d.re * d.re + d.im * d.im).sqrt() <= sep {
            return None;
        }
    }
    let mut blocks: Vec<DMatrix<T>> = Vec::new();
    let id = DMatrix::<T>::identity(n, n);
    for e in eigs.iter() {
        if e.im.abs() <= sep {
            let ns = null_space(&(a - &id * e.re), tol);
            if ns.ncols() != 1 {
                return None;
            }
            blocks.push(ns);
        } else if e.im > T::zero() {
            let shifted = a - &id * e.re;
            let m = &shifted * &shifted + &id * (e.im * e.im);
            let ns = null_space(&m, tol);
            if ns.ncols() != 2 {
                return None;
            }
            blocks.push(canonical_pair(a, &ns, e.re, e.im));
        }
    }
    let mut cols: Vec<DVector<T>> = Vec::with_capacity(n);
    let mut keyed: Vec<(usize, DMatrix<T>)> = blocks
        .into_iter()
        .map(|b| (dominant_index(&b.column(0).into_owned()), b))
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    for (_, b) in keyed {
        if b.ncols() == 1 {
            cols.push(normalize_sign(b.column(0).into_owned()));
        } else {
            cols.extend(b.column_iter().map(|c| c.into_owned()));
        }
    }
    if cols.len() != n {
        return None;
    }
    Some(DMatrix::from_columns(&cols))
}

/// Columns `(re, im)` of a complex eigenvector for `alpha + i beta` inside the
/// invariant plane spanned by the orthonormal columns of `plane`, with the
/// phase chosen so that `re` and `im` are orthogonal and `|re| >= |im|`.
fn canonical_pair<T: Real>(a: &DMatrix<T>, plane: &DMatrix<T>, alpha: T, beta: T) -> DMatrix<T> {
    let m = plane.transpose() * a * plane;
    let (m11, m12, m21, m22) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    // Eigenvector p + i q of the 2x2 restriction.
    let (p, q) = if m12.abs() >= m21.abs() {
        (
            DVector::from_vec(vec![m12, alpha - m11]),
            DVector::from_vec(vec![T::zero(), beta]),
        )
    } else {
        (
            DVector::from_vec(vec![alpha - m22, m21]),
            DVector::from_vec(vec![beta, T::zero()]),
        )
    };
    let two = lit::<T>(2.0);
    let phi = (-(two * p.dot(&q))).atan2(p.norm_squared() - q.norm_squared()) / two;
    let (sin, cos) = phi.sin_cos();
    let mut re = &p * cos - &q * sin;
    let mut im = &p * sin + &q * cos;
    if re.norm_squared() < im.norm_squared() {
        let turned = -im;
        im = re;
        re = turned;
    }
    let mut out = DMatrix::zeros(a.nrows(), 2);
    out.set_column(0, &(plane * re));
    out.set_column(1, &(plane * im));
    let scale = out.norm();
    out /= scale;
    let lead = out.column(0).iamax();
    if out[(lead, 0)] < T::zero() {
        out = -out;
    }
    out
}

fn dominant_index<T: Real>(v: &DVector<T>) -> usize {
    v.iamax()
}

fn normalize_sign<T: Real>(v: DVector<T>) -> DVector<T> {
    let v = &v / v.norm();
    if v[v.iamax()] < T::zero() {
        -v
    } else {
        v
    }
}

fn same_span<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, tol: T) -> bool {
    a.ncols() == b.ncols() && rank(&hstack(&[a, b]), tol) == a.ncols()
}

fn intersection<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let joined = hstack(&[a, &(-b)]);
    let ns = null_space(&joined, tol);
    if ns.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let coeffs = ns.rows(0, a.ncols()).into_owned();
    range_basis(&(a * coeffs), tol)
}

fn contains<T: Real>(subspace: &DMatrix<T>, v: &DVector<T>, tol: T) -> bool {
    let residual = v - subspace * (subspace.transpose() * v);
    residual.norm() <= tol.sqrt() * v.norm()
}

/// Greedy merge over the intersection-closed family of unobservable
/// subspaces, smallest dimension first; the remainder is filled with the
/// orthogonal complement of everything chosen.
fn lattice_merge<T: Real>(subspaces: &[DMatrix<T>], n: usize, tol: T) -> Result<DMatrix<T>, String> {
    const MAX_FAMILY: usize = 256;
    let mut family: Vec<DMatrix<T>> = Vec::new();
    for u in subspaces.iter().filter(|u| u.ncols() > 0) {
        if !family.iter().any(|f| same_span(f, u, tol)) {
            family.push(u.clone());
        }
    }
    let mut grew = true;
    while grew {
        grew = false;
        let len = family.len();
        for (i, j) in (0..len).tuple_combinations() {
            let cap = intersection(&family[i], &family[j], tol);
            if cap.ncols() > 0 && !family.iter().any(|f| same_span(f, &cap, tol)) {
                family.push(cap);
                grew = true;
            }
        }
        if family.len() > MAX_FAMILY {
            return Err("intersection lattice too large".into());
        }
    }
    family.sort_by_key(|f| f.ncols());

    let mut chosen: Vec<DVector<T>> = Vec::new();
    for s in &family {
        let inside: Vec<DVector<T>> = chosen.iter().filter(|v| contains(s, v, tol)).cloned().collect();
        let q = if inside.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            range_basis(&DMatrix::from_columns(&inside), tol)
        };
        if q.ncols() >= s.ncols() {
            continue;
        }
        let fresh = if q.ncols() == 0 {
            s.clone()
        } else {
            s * null_space(&(q.transpose() * s), tol)
        };
        chosen.extend(fresh.column_iter().map(|c| c.into_owned()));
        if chosen.len() > n {
            return Err(format!("unobservable subspaces need more than {n} basis directions"));
        }
    }
    if !chosen.is_empty() {
        let m = DMatrix::from_columns(&chosen);
        if rank(&m, tol) < chosen.len() {
            return Err("merged directions are linearly dependent".into());
        }
        let complement = null_space(&m.transpose(), tol);
        chosen.extend(complement.column_iter().map(|c| c.into_owned()));
    } else {
        chosen.extend(DMatrix::<T>::identity(n, n).column_iter().map(|c| c.into_owned()));
    }
    if chosen.len() != n {
        return Err("could not complete the merged directions to a basis".into());
    }
    Ok(DMatrix::from_columns(&chosen))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Returns a subset of `N - 2q` banks from which the plant is not observable,
/// or `None` when the plant is `2q`-redundantly observable.
pub fn redundancy_violation<T: Real>(
    plant: &PlantModel<T>,
    q: usize,
    tol: T,
) -> Result<Option<Vec<usize>>, ObservabilityError> {
    let banks = plant.bank_count();
    if 2 * q >= banks {
        return Err(ObservabilityError::RedundancyPrecondition { q, banks });
    }
    let subsets = binomial(banks, 2 * q);
    if subsets > MAX_REDUNDANCY_SUBSETS {
        return Err(ObservabilityError::CombinatorialLimit { subsets });
    }
    for subset in (0..banks).combinations(banks - 2 * q) {
        let c = plant.stacked_output(&subset);
        if !is_observable(plant.a(), &c, tol) {
            return Ok(Some(subset));
        }
    }
    Ok(None)
}

/// `true` iff `(C', A)` is observable for every choice of `N - 2q` banks.
pub fn check_redundant_observability<T: Real>(
    plant: &PlantModel<T>,
    q: usize,
    tol: T,
) -> Result<bool, ObservabilityError> {
    redundancy_violation(plant, q, tol).map(|w| w.is_none())
}

/// Every direction is observed by at least `2q + 1` banks.
pub fn verify_indicator_redundancy<T: Real>(basis: &SharedBasis<T>, q: usize) -> bool {
    basis.column_counts().into_iter().all(|c| c > 2 * q)
}

/// Observable / unobservable split of the shared basis for one bank.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanDecomposition<T: Real> {
    /// Basis columns observable from the bank (`n x o_i`).
    pub v_obs: DMatrix<T>,
    /// Matching dual rows (`o_i x n`).
    pub w_obs: DMatrix<T>,
    pub v_unobs: DMatrix<T>,
    pub w_unobs: DMatrix<T>,
    pub observable_dim: usize,
}

/// Tolerance for the block-zero checks of the decomposition.
pub fn structure_tolerance<T: Real>() -> T {
    let floor = T::default_epsilon() * lit(1e4);
    let base = lit::<T>(1e-9);
    if floor > base {
        floor
    } else {
        base
    }
}

pub fn kalman_decompose<T: Real>(
    plant: &PlantModel<T>,
    basis: &SharedBasis<T>,
    bank: usize,
) -> Result<KalmanDecomposition<T>, ObservabilityError> {
    let obs = basis.observable_directions(bank);
    let unobs = basis.unobservable_directions(bank);
    let dec = KalmanDecomposition {
        v_obs: select_columns(basis.v(), &obs),
        w_obs: select_rows(basis.w(), &obs),
        v_unobs: select_columns(basis.v(), &unobs),
        w_unobs: select_rows(basis.w(), &unobs),
        observable_dim: obs.len(),
    };
    if dec.v_unobs.ncols() > 0 && dec.w_obs.nrows() > 0 {
        let tol = structure_tolerance::<T>();
        let scale = spectral_norm(&dec.w_obs) * spectral_norm(plant.a()) * spectral_norm(&dec.v_unobs);
        let coupling = (&dec.w_obs * plant.a() * &dec.v_unobs).amax();
        if coupling > tol * scale.max(T::one()) {
            return Err(ObservabilityError::StructureViolation {
                agent: bank,
                residual: crate::scalar::to_f64(coupling),
            });
        }
        let c = plant.c(bank);
        let leak = (c * &dec.v_unobs).amax();
        let c_scale = spectral_norm(c) * spectral_norm(&dec.v_unobs);
        if leak > tol * c_scale.max(T::one()) {
            return Err(ObservabilityError::StructureViolation {
                agent: bank,
                residual: crate::scalar::to_f64(leak),
            });
        }
    }
    Ok(dec)
}

/// Closed-loop targets spread around `pole_target` within +-10%.
fn target_poles<T: Real>(pole_target: T, count: usize) -> Vec<T> {
    if count == 1 {
        return vec![pole_target];
    }
    let half = lit::<T>(0.5);
    (0..count)
        .map(|k| {
            let frac = from_usize::<T>(k) / from_usize::<T>(count - 1) - half;
            pole_target * (T::one() + lit::<T>(0.2) * frac)
        })
        .collect()
}

/// Ackermann's formula for a single-output observer on a time-scaled copy
/// of `(a, c)` so that the Krylov matrix stays well conditioned.
fn single_output_gain<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>, poles: &[T]) -> Option<DVector<T>> {
    let o = a.nrows();
    let scale = spectral_norm(a).max(T::one());
    let a_s = a / scale;
    let krylov = observability_matrix(&a_s, c);
    let inv = krylov.try_inverse()?;
    // phi(A_s) = prod (A_s - p_k / scale)
    let id = DMatrix::<T>::identity(o, o);
    let mut phi = id.clone();
    for &p in poles {
        phi *= &a_s - &id * (p / scale);
    }
    let mut e_last = DVector::zeros(o);
    e_last[o - 1] = T::one();
    let l = phi * inv * e_last;
    Some(l * scale)
}

/// Output gain `L` with `ao - L co` Hurwitz, eigenvalues placed near
/// `pole_target`.
///
/// Multi-output pairs are reduced to single-output ones through a set of
/// output combinations (with a deterministic pre-feedback when `ao` is not
/// cyclic); the smallest-norm candidate whose spectrum lands in the disc of
/// radius `|pole_target|/2` around the target wins.
pub fn design_observer_gain<T: Real>(
    ao: &DMatrix<T>,
    co: &DMatrix<T>,
    pole_target: T,
    tol: T,
) -> Result<DMatrix<T>, ObservabilityError> {
    if !(pole_target < T::zero()) {
        return Err(ObservabilityError::InvalidPoleTarget(crate::scalar::to_f64(
            pole_target,
        )));
    }
    let o = ao.nrows();
    let m = co.nrows();
    if co.ncols() != o || !ao.is_square() {
        return Err(ObservabilityError::Dimension(format!(
            "gain design needs square Ao and matching Co, got {}x{} and {}x{}",
            ao.nrows(),
            ao.ncols(),
            co.nrows(),
            co.ncols()
        )));
    }
    if o == 0 {
        return Ok(DMatrix::zeros(0, m));
    }
    let obs_rank = o - unobservable_subspace(ao, co, tol).ncols();
    if obs_rank < o {
        return Err(ObservabilityError::UnobservablePair { rank: obs_rank, dim: o });
    }
    let poles = target_poles(pole_target, o);
    let radius = pole_target.abs() * lit(0.5);

    let mut combos: Vec<DVector<T>> = (0..m)
        .map(|k| {
            let mut g = DVector::zeros(m);
            g[k] = T::one();
            g
        })
        .collect();
    if m > 1 {
        combos.push(DVector::from_element(m, T::one()));
        combos.push(DVector::from_fn(
            m,
            |k, _| if k % 2 == 0 { T::one() } else { -T::one() },
        ));
        combos.push(DVector::from_fn(m, |k, _| from_usize::<T>(k + 1)));
    }
    let mut prefeedbacks = vec![DMatrix::zeros(o, m)];
    if m > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let scale = spectral_norm(ao).max(T::one()) / spectral_norm(co).max(T::one());
        for _ in 0..4 {
            prefeedbacks.push(DMatrix::from_fn(o, m, |_, _| {
                lit::<T>(rng.random_range(-1.0..1.0)) * scale
            }));
        }
    }

    let mut best_in_disc: Option<(T, DMatrix<T>)> = None;
    let mut best_hurwitz: Option<(T, DMatrix<T>)> = None;
    let mut worst = lit::<T>(f64::NEG_INFINITY);
    for l0 in &prefeedbacks {
        let a0 = ao - l0 * co;
        for g in &combos {
            let row = g.transpose() * co;
            let c = DMatrix::from_row_slice(1, row.len(), row.as_slice());
            if rank(&observability_matrix(&a0, &c), tol) < o {
                continue;
            }
            let Some(l1) = single_output_gain(&a0, &c, &poles) else {
                continue;
            };
            let gain = l0 + l1 * g.transpose();
            let closed = ao - &gain * co;
            let eigs = closed.clone().complex_eigenvalues();
            let max_re = eigs.iter().map(|e| e.re).fold(lit(f64::NEG_INFINITY), T::max);
            worst = worst.max(max_re);
            let norm = gain.norm();
            if !(max_re < pole_target * lit(0.5)) {
                continue;
            }
            let in_disc = eigs.iter().all(|e| {
                let dr = e.re - pole_target;
                (dr * dr + e.im * e.im).sqrt() <= radius
            });
            let slot = if in_disc { &mut best_in_disc } else { &mut best_hurwitz };
            if slot.as_ref().is_none_or(|(n, _)| norm < *n) {
                *slot = Some((norm, gain));
            }
        }
        if best_in_disc.is_some() {
            break;
        }
    }
    best_in_disc
        .or(best_hurwitz)
        .map(|(_, g)| g)
        .ok_or(ObservabilityError::PlacementFailed {
            max_real: crate::scalar::to_f64(worst),
        })
}

/// One bank's partial observer: decomposition, gain and cached blocks
/// `W_i A V_i`, `C_i V_i`, `W_i B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialObserver<T: Real> {
    pub bank: usize,
    pub decomposition: KalmanDecomposition<T>,
    pub gain: DMatrix<T>,
    pub wav: DMatrix<T>,
    pub cv: DMatrix<T>,
    pub wb: DMatrix<T>,
    /// `W V_i`: row `l` extracts `w_l^T V_i z_i` from a partial estimate.
    pub w_vi: DMatrix<T>,
}

impl<T: Real> PartialObserver<T> {
    pub fn observable_dim(&self) -> usize {
        self.decomposition.observable_dim
    }

    /// `W_i A V_i - L_i C_i V_i`.
    pub fn error_matrix(&self) -> DMatrix<T> {
        &self.wav - &self.gain * &self.cv
    }
}

/// Partial observers for every bank.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverBank<T: Real> {
    observers: Vec<PartialObserver<T>>,
    pole_target: T,
    margin: T,
}

impl<T: Real> ObserverBank<T> {
    /// Default stability margin demanded of every error matrix.
    pub fn default_margin() -> T {
        lit(0.1)
    }

    pub fn design(
        plant: &PlantModel<T>,
        basis: &SharedBasis<T>,
        pole_target: T,
        tol: T,
    ) -> Result<Self, ObservabilityError> {
        let margin = Self::default_margin();
        let mut observers = Vec::with_capacity(plant.bank_count());
        for i in 0..plant.bank_count() {
            let dec = kalman_decompose(plant, basis, i)?;
            let wav = &dec.w_obs * plant.a() * &dec.v_obs;
            let cv = plant.c(i) * &dec.v_obs;
            let gain = design_observer_gain(&wav, &cv, pole_target, tol)?;
            let max_real = max_real_eigenvalue(&(&wav - &gain * &cv));
            if dec.observable_dim > 0 && max_real > -margin {
                return Err(ObservabilityError::PlacementFailed {
                    max_real: crate::scalar::to_f64(max_real),
                });
            }
            let wb = &dec.w_obs * plant.b();
            let w_vi = basis.w() * &dec.v_obs;
            observers.push(PartialObserver {
                bank: i,
                decomposition: dec,
                gain,
                wav,
                cv,
                wb,
                w_vi,
            });
        }
        Ok(Self {
            observers,
            pole_target,
            margin,
        })
    }

    pub fn observer(&self, bank: usize) -> &PartialObserver<T> {
        &self.observers[bank]
    }

    pub fn observers(&self) -> &[PartialObserver<T>] {
        &self.observers
    }

    pub fn len(&self) -> usize {
        self.observers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observers.is_empty()
    }

    pub fn pole_target(&self) -> T {
        self.pole_target
    }

    pub fn margin(&self) -> T {
        self.margin
    }
}
