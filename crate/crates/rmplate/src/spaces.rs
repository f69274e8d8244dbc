//! Global degree-of-freedom management and interpolation operators.
//!
//! Displacement unknowns live on the Q2 nodes and are shared between
//! neighbouring elements (corner nodes keyed by mesh vertex, midside nodes
//! keyed by mesh edge, one interior node per element); the nodes on the
//! domain boundary are constrained to zero, which clamps the displacement
//! strongly. Rotation unknowns are twelve monomial coefficients per
//! element and are never shared or constrained: the clamping of the
//! rotation is weak, through the boundary edge terms of the bilinear form.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::mapping::{ElementMap, Mat2, MappingError, RotationVariant};
use crate::mesh::{local_edge_vertices, QuadMesh, Vec2};
use crate::reference::{
    eval_displacement_basis, eval_rotation_basis, gradient_rotation_coefficients,
    N_ROTATION_BASIS,
};

#[derive(Debug, Error)]
pub enum SpacesError {
    #[error("element {element}: {source}")]
    Mapping {
        element: usize,
        source: MappingError,
    },
    #[error("rotation interpolation fit is ill-conditioned (condition number {0:.3e})")]
    IllConditionedFit(f64),
}

/// Global numbering of the coupled displacement/rotation unknowns.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub n_displacement: usize,
    pub n_rotation: usize,
    element_displacement: Vec<[usize; 9]>,
    constrained: Vec<bool>,
    node_position: Vec<Vec2>,
}

impl DofMap {
    /// Displacement DOF indices of element `k`, in local node order.
    pub fn displacement_dofs(&self, k: usize) -> &[usize; 9] {
        &self.element_displacement[k]
    }

    /// First rotation DOF of element `k`; the block is `start..start + 12`.
    pub fn rotation_offset(&self, k: usize) -> usize {
        N_ROTATION_BASIS * k
    }

    pub fn is_constrained(&self, displacement_dof: usize) -> bool {
        self.constrained[displacement_dof]
    }

    pub fn n_constrained(&self) -> usize {
        self.constrained.iter().filter(|c| **c).count()
    }

    /// Physical position of a displacement node.
    pub fn node_position(&self, displacement_dof: usize) -> Vec2 {
        self.node_position[displacement_dof]
    }
}

/// Deterministic numbering: mesh vertices first, then one midside node per
/// mesh edge (in edge order), then one interior node per element.
pub fn build_dof_map(mesh: &QuadMesh) -> DofMap {
    let nv = mesh.vertices.len();
    let ne = mesh.edges.len();
    let nq = mesh.n_elements();
    let n_displacement = nv + ne + nq;

    // Sorted vertex pair -> edge index, for midside node lookup.
    let mut edge_of_pair = std::collections::HashMap::new();
    for (e, edge) in mesh.edges.iter().enumerate() {
        let (a, b) = (edge.vertices[0], edge.vertices[1]);
        edge_of_pair.insert((a.min(b), a.max(b)), e);
    }

    // Local Q2 node roles: corner nodes sit at local vertices, midside
    // nodes on local edges, node 4 in the element interior.
    const CORNER_OF_NODE: [(usize, usize); 4] = [(0, 0), (2, 1), (8, 2), (6, 3)];
    const EDGE_OF_NODE: [(usize, usize); 4] = [(1, 0), (5, 1), (7, 2), (3, 3)];

    let mut element_displacement = vec![[0usize; 9]; nq];
    for (k, quad) in mesh.quads.iter().enumerate() {
        let dofs = &mut element_displacement[k];
        for (node, corner) in CORNER_OF_NODE {
            dofs[node] = quad[corner];
        }
        for (node, local_edge) in EDGE_OF_NODE {
            let (a, b) = local_edge_vertices(quad, local_edge);
            let e = edge_of_pair[&(a.min(b), a.max(b))];
            dofs[node] = nv + e;
        }
        dofs[4] = nv + ne + k;
    }

    let mut constrained = vec![false; n_displacement];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.is_boundary() {
            constrained[edge.vertices[0]] = true;
            constrained[edge.vertices[1]] = true;
            constrained[nv + e] = true;
        }
    }

    let mut node_position = vec![Vec2::zeros(); n_displacement];
    for (v, p) in mesh.vertices.iter().enumerate() {
        node_position[v] = *p;
    }
    for (e, edge) in mesh.edges.iter().enumerate() {
        node_position[nv + e] =
            0.5 * (mesh.vertices[edge.vertices[0]] + mesh.vertices[edge.vertices[1]]);
    }
    for k in 0..nq {
        let c = mesh.corners(k);
        node_position[nv + ne + k] = (c[0] + c[1] + c[2] + c[3]) / 4.0;
    }

    DofMap {
        n_displacement,
        n_rotation: N_ROTATION_BASIS * nq,
        element_displacement,
        constrained,
        node_position,
    }
}

/// Nodal interpolant of a scalar field: the coefficient of each
/// displacement DOF is the field value at the mapped node.
pub fn interpolate_displacement<F: Fn(Vec2) -> f64>(
    _mesh: &QuadMesh,
    dofs: &DofMap,
    f: F,
) -> Vec<f64> {
    (0..dofs.n_displacement)
        .map(|d| f(dofs.node_position(d)))
        .collect()
}

/// Fixed 4x4 reference sample grid used by the rotation interpolation
/// operator.
fn rotation_sample_grid() -> [Vec2; 16] {
    let mut pts = [Vec2::zeros(); 16];
    for j in 0..4 {
        for i in 0..4 {
            pts[4 * j + i] = Vec2::new(i as f64 / 3.0, j as f64 / 3.0);
        }
    }
    pts
}

/// Least-squares projector onto one 6-dimensional monomial component,
/// sampled on the fixed grid. Returns the pseudo-inverse (6 x 16).
fn component_projector(component: usize) -> Result<DMatrix<f64>, SpacesError> {
    let grid = rotation_sample_grid();
    let mut design = DMatrix::zeros(16, 6);
    for (row, &p) in grid.iter().enumerate() {
        let (values, _) = eval_rotation_basis(p);
        for col in 0..6 {
            let basis = if component == 0 { col } else { 6 + col };
            design[(row, col)] = values[basis][component];
        }
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if !(cond.is_finite() && cond < 1e8) {
        return Err(SpacesError::IllConditionedFit(cond));
    }
    let u = svd.u.as_ref().expect("svd with u");
    let vt = svd.v_t.as_ref().expect("svd with v_t");
    let sigma_inv = DMatrix::from_diagonal(&svd.singular_values.map(|s| 1.0 / s));
    Ok(vt.transpose() * sigma_inv * u.transpose())
}

/// Interpolate a rotation (vector) field into the discontinuous discrete
/// space: per element, pull the field back to the reference square with the
/// chosen variant, then least-squares fit the twelve monomial coefficients
/// on the fixed sample grid.
pub fn interpolate_rotation<G: Fn(Vec2) -> Vec2>(
    mesh: &QuadMesh,
    dofs: &DofMap,
    variant: RotationVariant,
    g: G,
) -> Result<Vec<f64>, SpacesError> {
    let grid = rotation_sample_grid();
    let proj_x = component_projector(0)?;
    let proj_y = component_projector(1)?;
    let mut coeffs = vec![0.0; dofs.n_rotation];
    for k in 0..mesh.n_elements() {
        let map = ElementMap::for_element(mesh, k)
            .map_err(|source| SpacesError::Mapping { element: k, source })?;
        let mut fx = DVector::zeros(16);
        let mut fy = DVector::zeros(16);
        for (row, &p) in grid.iter().enumerate() {
            let value = g(map.map_point(p));
            let pulled = match variant {
                RotationVariant::Covariant => map.jacobian(p).transpose() * value,
                RotationVariant::PlainParametric => value,
            };
            fx[row] = pulled.x;
            fy[row] = pulled.y;
        }
        let cx = &proj_x * fx;
        let cy = &proj_y * fy;
        let offset = dofs.rotation_offset(k);
        for m in 0..6 {
            coeffs[offset + m] = cx[m];
            coeffs[offset + 6 + m] = cy[m];
        }
    }
    Ok(coeffs)
}

/// Rotation coefficients whose transported field equals the gradient of the
/// local discrete displacement with the given local coefficients. Exact
/// under the covariant variant: the reference gradient of every
/// displacement basis function lies in the rotation span.
pub fn rotation_coefficients_for_gradient(u_local: &[f64; 9]) -> [f64; 12] {
    let mut theta = [0.0; 12];
    for (a, &u) in u_local.iter().enumerate() {
        let g = gradient_rotation_coefficients(a);
        for k in 0..12 {
            theta[k] += u * g[k];
        }
    }
    theta
}

/// Value and physical gradient of the discrete displacement restricted to
/// one element, from its local coefficient slice.
pub fn displacement_value_gradient(
    map: &ElementMap,
    u_local: &[f64; 9],
    p: Vec2,
) -> Result<(f64, Vec2), MappingError> {
    let (values, grads) = eval_displacement_basis(p);
    let mut value = 0.0;
    let mut ref_grad = Vec2::zeros();
    for a in 0..9 {
        value += u_local[a] * values[a];
        ref_grad += u_local[a] * grads[a];
    }
    Ok((value, map.physical_gradient_scalar(p, ref_grad)?))
}

/// Transported rotation value of one element from its 12 local
/// coefficients.
pub fn rotation_value(
    map: &ElementMap,
    variant: RotationVariant,
    theta_local: &[f64],
    p: Vec2,
) -> Result<Vec2, MappingError> {
    let (values, _) = eval_rotation_basis(p);
    let mut theta_hat = Vec2::zeros();
    for k in 0..12 {
        theta_hat += theta_local[k] * values[k];
    }
    map.push_rotation(variant, p, theta_hat)
}

/// Physical gradient of the transported rotation of one element.
pub fn rotation_gradient(
    map: &ElementMap,
    variant: RotationVariant,
    theta_local: &[f64],
    p: Vec2,
) -> Result<Mat2, MappingError> {
    let (values, derivs) = eval_rotation_basis(p);
    let mut theta_hat = Vec2::zeros();
    let mut ddx = Vec2::zeros();
    let mut ddy = Vec2::zeros();
    for k in 0..12 {
        theta_hat += theta_local[k] * values[k];
        ddx += theta_local[k] * derivs[k][0];
        ddy += theta_local[k] * derivs[k][1];
    }
    map.physical_rotation_gradient(variant, p, theta_hat, ddx, ddy)
}

/// Gather the local displacement coefficients of element `k`.
pub fn local_displacement(dofs: &DofMap, coeffs: &[f64], k: usize) -> [f64; 9] {
    let ids = dofs.displacement_dofs(k);
    let mut local = [0.0; 9];
    for (slot, &d) in local.iter_mut().zip(ids.iter()) {
        *slot = coeffs[d];
    }
    local
}

/// Gather the twelve local rotation coefficients of element `k`.
pub fn local_rotation<'a>(dofs: &DofMap, coeffs: &'a [f64], k: usize) -> &'a [f64] {
    let offset = dofs.rotation_offset(k);
    &coeffs[offset..offset + N_ROTATION_BASIS]
}
