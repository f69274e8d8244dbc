//! Reference-square bases and Gauss quadrature.
//!
//! The reference element is the unit square `[0,1]^2`. Three bases live
//! here: the four bilinear geometry functions, the nine biquadratic nodal
//! Lagrange functions for the displacement (nodes at `{0, 1/2, 1}^2`), and
//! the twelve vector monomials spanning `Q(1,2) x Q(2,1)` for the
//! rotations. The rotation span is exactly the span of the reference
//! gradients of the displacement basis, which is what makes the discrete
//! shear constraint exactly satisfiable.

use thiserror::Error;

use crate::mesh::Vec2;

pub const N_DISPLACEMENT_BASIS: usize = 9;
pub const N_ROTATION_BASIS: usize = 12;

/// Default tensor Gauss order for volume integrals. Mapped integrands are
/// rational in the reference coordinates, so no finite rule is exact; order
/// 4 keeps the quadrature error below the discretization error on all
/// supported meshes.
pub const DEFAULT_VOLUME_ORDER: usize = 4;
/// Default Gauss order for edge integrals.
pub const DEFAULT_EDGE_ORDER: usize = 4;

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("unsupported Gauss order {0}; supported orders are 2..=5")]
    UnsupportedOrder(usize),
}

/// Bilinear geometry basis at `p`, one value per corner of the square.
pub fn geometry_basis(p: Vec2) -> [f64; 4] {
    let (x, y) = (p.x, p.y);
    [
        (1.0 - x) * (1.0 - y),
        x * (1.0 - y),
        x * y,
        (1.0 - x) * y,
    ]
}

/// Reference gradients of the geometry basis.
pub fn geometry_gradients(p: Vec2) -> [Vec2; 4] {
    let (x, y) = (p.x, p.y);
    [
        Vec2::new(-(1.0 - y), -(1.0 - x)),
        Vec2::new(1.0 - y, -x),
        Vec2::new(y, x),
        Vec2::new(-y, 1.0 - x),
    ]
}

/// Quadratic Lagrange polynomial on the nodes `{0, 1/2, 1}`.
fn lag(i: usize, s: f64) -> f64 {
    match i {
        0 => 2.0 * s * s - 3.0 * s + 1.0,
        1 => 4.0 * s * (1.0 - s),
        _ => s * (2.0 * s - 1.0),
    }
}

fn dlag(i: usize, s: f64) -> f64 {
    match i {
        0 => 4.0 * s - 3.0,
        1 => 4.0 - 8.0 * s,
        _ => 4.0 * s - 1.0,
    }
}

/// Positions of the nine displacement nodes; node `a = 3 j + i` sits at
/// `(i/2, j/2)`.
pub fn displacement_nodes() -> [Vec2; 9] {
    let mut nodes = [Vec2::zeros(); 9];
    for j in 0..3 {
        for i in 0..3 {
            nodes[3 * j + i] = Vec2::new(i as f64 / 2.0, j as f64 / 2.0);
        }
    }
    nodes
}

fn clamp_unit(p: Vec2) -> Vec2 {
    Vec2::new(p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0))
}

/// Values and reference gradients of the nine biquadratic Lagrange
/// functions. Points a hair outside the square are clamped onto it.
pub fn eval_displacement_basis(p: Vec2) -> ([f64; 9], [Vec2; 9]) {
    let p = clamp_unit(p);
    let mut values = [0.0; 9];
    let mut grads = [Vec2::zeros(); 9];
    for j in 0..3 {
        for i in 0..3 {
            let a = 3 * j + i;
            values[a] = lag(i, p.x) * lag(j, p.y);
            grads[a] = Vec2::new(dlag(i, p.x) * lag(j, p.y), lag(i, p.x) * dlag(j, p.y));
        }
    }
    (values, grads)
}

/// Monomials spanning `Q(1,2)` in the order `1, x, y, xy, y^2, xy^2`,
/// with their partial derivatives.
fn mono_q12(p: Vec2) -> ([f64; 6], [f64; 6], [f64; 6]) {
    let (x, y) = (p.x, p.y);
    let v = [1.0, x, y, x * y, y * y, x * y * y];
    let dx = [0.0, 1.0, 0.0, y, 0.0, y * y];
    let dy = [0.0, 0.0, 1.0, x, 2.0 * y, 2.0 * x * y];
    (v, dx, dy)
}

/// Monomials spanning `Q(2,1)` in the order `1, x, y, xy, x^2, x^2 y`.
fn mono_q21(p: Vec2) -> ([f64; 6], [f64; 6], [f64; 6]) {
    let (x, y) = (p.x, p.y);
    let v = [1.0, x, y, x * y, x * x, x * x * y];
    let dx = [0.0, 1.0, 0.0, y, 2.0 * x, 2.0 * x * y];
    let dy = [0.0, 0.0, 1.0, x, 0.0, x * x];
    (v, dx, dy)
}

/// Values and reference derivatives of the twelve rotation basis
/// functions. Basis `k < 6` is the `Q(1,2)` monomial `k` in the first
/// component, basis `k >= 6` the `Q(2,1)` monomial `k - 6` in the second.
/// `derivs[k][0]` is the partial derivative with respect to the first
/// reference coordinate, `derivs[k][1]` with respect to the second.
pub fn eval_rotation_basis(p: Vec2) -> ([Vec2; 12], [[Vec2; 2]; 12]) {
    let p = clamp_unit(p);
    let (vx, dxx, dxy) = mono_q12(p);
    let (vy, dyx, dyy) = mono_q21(p);
    let mut values = [Vec2::zeros(); 12];
    let mut derivs = [[Vec2::zeros(); 2]; 12];
    for k in 0..6 {
        values[k] = Vec2::new(vx[k], 0.0);
        derivs[k][0] = Vec2::new(dxx[k], 0.0);
        derivs[k][1] = Vec2::new(dxy[k], 0.0);
        values[6 + k] = Vec2::new(0.0, vy[k]);
        derivs[6 + k][0] = Vec2::new(0.0, dyx[k]);
        derivs[6 + k][1] = Vec2::new(0.0, dyy[k]);
    }
    (values, derivs)
}

/// Exact expansion of the reference gradient of displacement basis `a` in
/// the rotation basis: `grad phi_a = sum_k coeffs[k] * rot_k`.
///
/// `d/dx (l_i(x) l_j(y))` factors as `(linear in x) * (quadratic in y)`,
/// which lies in `Q(1,2)`, and symmetrically for `d/dy`; both expansions
/// are written out from the 1D coefficient tables.
pub fn gradient_rotation_coefficients(a: usize) -> [f64; 12] {
    // 1D quadratic Lagrange coefficients on {1, s, s^2} and their
    // derivative coefficients on {1, s}.
    const VAL: [[f64; 3]; 3] = [[1.0, -3.0, 2.0], [0.0, 4.0, -4.0], [0.0, -1.0, 2.0]];
    const DER: [[f64; 2]; 3] = [[-3.0, 4.0], [4.0, -8.0], [-1.0, 4.0]];
    let i = a % 3;
    let j = a / 3;
    let mut coeffs = [0.0; 12];
    // d/dx: (c0 + c1 x)(d0 + d1 y + d2 y^2) on [1, x, y, xy, y^2, xy^2].
    let c = DER[i];
    let d = VAL[j];
    coeffs[0] = c[0] * d[0];
    coeffs[1] = c[1] * d[0];
    coeffs[2] = c[0] * d[1];
    coeffs[3] = c[1] * d[1];
    coeffs[4] = c[0] * d[2];
    coeffs[5] = c[1] * d[2];
    // d/dy: (d0 + d1 x + d2 x^2)(c0 + c1 y) on [1, x, y, xy, x^2, x^2 y].
    let d = VAL[i];
    let c = DER[j];
    coeffs[6] = d[0] * c[0];
    coeffs[7] = d[1] * c[0];
    coeffs[8] = d[0] * c[1];
    coeffs[9] = d[1] * c[1];
    coeffs[10] = d[2] * c[0];
    coeffs[11] = d[2] * c[1];
    coeffs
}

/// Gauss rule on the unit segment `[0, 1]`.
#[derive(Clone, Debug)]
pub struct SegmentQuadrature {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Tensor Gauss rule on the unit square `[0, 1]^2`.
#[derive(Clone, Debug)]
pub struct SquareQuadrature {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
fn gauss_nodes(order: usize) -> Result<(Vec<f64>, Vec<f64>), ReferenceError> {
    match order {
        2 => {
            let a = 1.0 / 3f64.sqrt();
            Ok((vec![-a, a], vec![1.0, 1.0]))
        }
        3 => {
            let a = (3.0 / 5.0f64).sqrt();
            Ok((vec![-a, 0.0, a], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0]))
        }
        4 => {
            let a = ((3.0 - 2.0 * (6.0 / 5.0f64).sqrt()) / 7.0).sqrt();
            let b = ((3.0 + 2.0 * (6.0 / 5.0f64).sqrt()) / 7.0).sqrt();
            let wa = (18.0 + 30f64.sqrt()) / 36.0;
            let wb = (18.0 - 30f64.sqrt()) / 36.0;
            Ok((vec![-b, -a, a, b], vec![wb, wa, wa, wb]))
        }
        5 => {
            let a = (5.0 - 2.0 * (10.0 / 7.0f64).sqrt()).sqrt() / 3.0;
            let b = (5.0 + 2.0 * (10.0 / 7.0f64).sqrt()).sqrt() / 3.0;
            let wa = (322.0 + 13.0 * 70f64.sqrt()) / 900.0;
            let wb = (322.0 - 13.0 * 70f64.sqrt()) / 900.0;
            Ok((
                vec![-b, -a, 0.0, a, b],
                vec![wb, wa, 128.0 / 225.0, wa, wb],
            ))
        }
        other => Err(ReferenceError::UnsupportedOrder(other)),
    }
}

/// Gauss rule on `[0, 1]`, exact for polynomials of degree `2*order - 1`.
pub fn gauss_segment(order: usize) -> Result<SegmentQuadrature, ReferenceError> {
    let (nodes, weights) = gauss_nodes(order)?;
    Ok(SegmentQuadrature {
        points: nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: weights.iter().map(|w| 0.5 * w).collect(),
    })
}

/// Tensor Gauss rule on `[0, 1]^2`, exact for `Q(2*order - 1)`.
pub fn gauss_square(order: usize) -> Result<SquareQuadrature, ReferenceError> {
    let seg = gauss_segment(order)?;
    let mut points = Vec::with_capacity(seg.points.len() * seg.points.len());
    let mut weights = Vec::with_capacity(points.capacity());
    for (j, &y) in seg.points.iter().enumerate() {
        for (i, &x) in seg.points.iter().enumerate() {
            points.push(Vec2::new(x, y));
            weights.push(seg.weights[i] * seg.weights[j]);
        }
    }
    Ok(SquareQuadrature { points, weights })
}

/// Composite rule: the square split into `splits x splits` cells, each
/// carrying the tensor Gauss rule of the given order. Used as an
/// independent refined-quadrature oracle.
pub fn gauss_square_subdivided(
    order: usize,
    splits: usize,
) -> Result<SquareQuadrature, ReferenceError> {
    let base = gauss_square(order)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let scale = 1.0 / splits as f64;
    for cy in 0..splits {
        for cx in 0..splits {
            let origin = Vec2::new(cx as f64 * scale, cy as f64 * scale);
            for (p, w) in base.points.iter().zip(&base.weights) {
                points.push(origin + scale * p);
                weights.push(w * scale * scale);
            }
        }
    }
    Ok(SquareQuadrature { points, weights })
}

/// Composite segment rule, the 1D analogue of
/// [`gauss_square_subdivided`].
pub fn gauss_segment_subdivided(
    order: usize,
    splits: usize,
) -> Result<SegmentQuadrature, ReferenceError> {
    let base = gauss_segment(order)?;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let scale = 1.0 / splits as f64;
    for c in 0..splits {
        let origin = c as f64 * scale;
        for (p, w) in base.points.iter().zip(&base.weights) {
            points.push(origin + scale * p);
            weights.push(w * scale);
        }
    }
    Ok(SegmentQuadrature { points, weights })
}
