//! Reference plants used by the bundled scenarios and the test suites.

use nalgebra::DMatrix;

use crate::observability::PlantModel;
use crate::scalar::{lit, Real};

fn m<T: Real>(rows: usize, cols: usize, data: &[f64]) -> DMatrix<T> {
    DMatrix::from_row_slice(rows, cols, data).map(lit)
}

fn row_blocks<T: Real>(c: &[&[f64]]) -> Vec<DMatrix<T>> {
    c.iter().map(|r| m(1, r.len(), r)).collect()
}

/// Inertia, damping and stiffness of the three-inertia benchmark.
pub const INERTIA: f64 = 0.01;
pub const DAMPING: f64 = 0.007;
pub const STIFFNESS: f64 = 1.37;

/// Three inertias coupled by two torsional springs, state
/// `(θ1, θ1', θ2, θ2', θ3, θ3')`, torque input on the first inertia and five
/// single-sensor banks measuring `θ1, θ2, θ3, θ1 - θ2, θ2 - θ3`.
pub fn three_inertia<T: Real>() -> PlantModel<T> {
    let (j, b, k) = (INERTIA, DAMPING, STIFFNESS);
    #[rustfmt::skip]
    let a = m(6, 6, &[
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        -k / j, -b / j, k / j, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0, 0.0, 0.0,
        k / j, 0.0, -(k + k) / j, -b / j, k / j, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, k / j, 0.0, -k / j, -b / j,
    ]);
    let b_mat = m(6, 1, &[0.0, 1.0 / j, 0.0, 0.0, 0.0, 0.0]);
    let c = row_blocks(&[
        &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        &[1.0, 0.0, -1.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0],
    ]);
    PlantModel::new(a, b_mat, c).expect("three-inertia dimensions")
}

/// Row selecting `θ1 + θ2 + θ3` from the three-inertia state.
pub fn theta_sum_row<T: Real>() -> DMatrix<T> {
    m(1, 6, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
}

/// `diag(λ, [[λ, 1], [0, λ]])`: one eigenvalue with two Jordan blocks.
pub fn jordan_chain_a<T: Real>(lambda: f64) -> DMatrix<T> {
    m(3, 3, &[lambda, 0.0, 0.0, 0.0, lambda, 1.0, 0.0, 0.0, lambda])
}

/// Three single-sensor banks on [`jordan_chain_a`] with `λ = 1`. With
/// `broken` the third bank reads `[1, 2, 0]` instead of `[2, 2, 0]`, after
/// which no shared basis exists.
pub fn jordan_chain<T: Real>(broken: bool) -> PlantModel<T> {
    let third: &[f64] = if broken { &[1.0, 2.0, 0.0] } else { &[2.0, 2.0, 0.0] };
    let c = row_blocks(&[&[1.0, 1.0, 0.0], &[1.0, -1.0, 0.0], third]);
    PlantModel::new(jordan_chain_a(1.0), DMatrix::zeros(3, 1), c).expect("jordan chain dimensions")
}

/// `{[1,1,0], [1,-1,0], e3}` as columns.
pub fn jordan_chain_basis<T: Real>() -> DMatrix<T> {
    m(3, 3, &[1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 1.0])
}

/// Two identical rotation blocks observed by six single-sensor banks. With
/// `broken` the first bank reads `[2, 0, 0, 1]`.
pub fn rotation_pair<T: Real>(broken: bool) -> PlantModel<T> {
    #[rustfmt::skip]
    let a = m(4, 4, &[
        0.0, 1.0, 0.0, 0.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, -1.0, 0.0,
    ]);
    let first: &[f64] = if broken {
        &[2.0, 0.0, 0.0, 1.0]
    } else {
        &[-1.0, 0.0, 0.0, 1.0]
    };
    let c = row_blocks(&[
        first,
        &[1.0, 1.0, 0.0, 0.0],
        &[0.0, 1.0, 1.0, 0.0],
        &[1.0, -1.0, 0.0, 0.0],
        &[-1.0, 1.0, 1.0, 1.0],
        &[1.0, 0.0, 0.0, 0.0],
    ]);
    PlantModel::new(a, DMatrix::zeros(4, 1), c).expect("rotation pair dimensions")
}

/// `[e3, e4, (0,1,-1,0), (1,0,0,1)]` as columns.
pub fn rotation_pair_basis<T: Real>() -> DMatrix<T> {
    #[rustfmt::skip]
    let v = m(4, 4, &[
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
        1.0, 0.0, -1.0, 0.0,
        0.0, 1.0, 0.0, 1.0,
    ]);
    v
}

/// `x' = 0`, `y_i = c_i x`.
pub fn scalar_plant<T: Real>(c: &[f64]) -> PlantModel<T> {
    let blocks = c.iter().map(|&ci| m(1, 1, &[ci])).collect();
    PlantModel::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), blocks).expect("scalar dimensions")
}

/// Harmonic oscillator `A = [[0, 1], [-1, 0]]` with five single-sensor banks,
/// each of which observes the full state on its own.
pub fn skew_plant<T: Real>() -> PlantModel<T> {
    let a = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let c = row_blocks(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[1.0, -1.0], &[2.0, 1.0]]);
    PlantModel::new(a, DMatrix::zeros(2, 1), c).expect("skew dimensions")
}
