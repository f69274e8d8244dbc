//! Assembly of the coupled sparse symmetric system: element bending and
//! shear matrices, interior-penalty edge terms, and the load vector.
//!
//! The bilinear form consists of the elementwise bending energy
//! `(sigma(theta), eps(vartheta))_K`, the symmetric Nitsche edge terms
//! `-(<n.sigma(theta)>, [vartheta])_E - (<n.sigma(vartheta)>, [theta])_E`
//! with the penalty `(mu + lambda) gamma (h_E^{-1} [theta], [vartheta])_E`
//! over interior and boundary edges, and the shear coupling
//! `(kappa / t^2) (grad u - theta, grad v - vartheta)`. Constrained
//! displacement DOFs are eliminated, which keeps the reduced matrix
//! symmetric positive definite for sufficiently large penalty.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SMatrix, SVector};
use thiserror::Error;

use crate::dd::Dd;
use crate::mapping::{ElementMap, Mat2, MappingError, RotationVariant};
use crate::mesh::{QuadMesh, Vec2};
use crate::reference::{
    eval_displacement_basis, eval_rotation_basis, gauss_segment, gauss_square,
    DEFAULT_EDGE_ORDER, DEFAULT_VOLUME_ORDER,
};
use crate::spaces::DofMap;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("invalid material parameters: {0}")]
    InvalidMaterial(&'static str),
    #[error("element {element}: {source}")]
    Mapping {
        element: usize,
        source: MappingError,
    },
    #[error("edge {edge}: traces of the two elements disagree by {distance:.3e}")]
    EdgeTraceMismatch { edge: usize, distance: f64 },
}

/// Plate material and discretization parameters.
///
/// The moduli follow the plate scaling `mu = E / (24 (1 + nu))`,
/// `lambda = nu E / (12 (1 - nu^2))` and the shear stiffness is
/// `kappa = E k / (2 (1 + nu))` with shear correction factor `k`.
#[derive(Clone, Copy, Debug)]
pub struct MaterialParams {
    /// Young's modulus (Pa).
    pub e: f64,
    /// Poisson ratio.
    pub nu: f64,
    /// Shear correction factor.
    pub k_shear: f64,
    /// Plate thickness, relative to the unit domain scale.
    pub t: f64,
    /// Interior-penalty constant.
    pub gamma: f64,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64, k_shear: f64, t: f64, gamma: f64) -> Result<Self, AssemblyError> {
        if !(e > 0.0) {
            return Err(AssemblyError::InvalidMaterial("E must be positive"));
        }
        if !(0.0..0.5).contains(&nu) {
            return Err(AssemblyError::InvalidMaterial("nu must lie in [0, 0.5)"));
        }
        if !(k_shear > 0.0) {
            return Err(AssemblyError::InvalidMaterial("k must be positive"));
        }
        if !(t > 0.0) {
            return Err(AssemblyError::InvalidMaterial("t must be positive"));
        }
        if !(gamma > 0.0) {
            return Err(AssemblyError::InvalidMaterial("gamma must be positive"));
        }
        Ok(Self {
            e,
            nu,
            k_shear,
            t,
            gamma,
        })
    }

    /// Default data: E = 180 GPa, nu = 0.3, k = 5/6, gamma = 10.
    pub fn standard(t: f64) -> Result<Self, AssemblyError> {
        Self::new(180e9, 0.3, 5.0 / 6.0, t, 10.0)
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self, AssemblyError> {
        Self::new(self.e, self.nu, self.k_shear, self.t, gamma)
    }

    pub fn mu(&self) -> f64 {
        self.e / (24.0 * (1.0 + self.nu))
    }

    pub fn lambda(&self) -> f64 {
        self.nu * self.e / (12.0 * (1.0 - self.nu * self.nu))
    }

    pub fn kappa(&self) -> f64 {
        self.e * self.k_shear / (2.0 * (1.0 + self.nu))
    }
}

/// Curvature (symmetric part of the rotation gradient) and moment tensor
/// `sigma = 2 mu eps + lambda tr(grad) I`.
pub fn curvature_and_moment(gradient: Mat2, params: &MaterialParams) -> (Mat2, Mat2) {
    let eps = 0.5 * (gradient + gradient.transpose());
    let sigma = 2.0 * params.mu() * eps + params.lambda() * gradient.trace() * Mat2::identity();
    (eps, sigma)
}

fn moment_contraction(ei: &Mat2, ti: f64, ej: &Mat2, tj: f64, params: &MaterialParams) -> f64 {
    // sigma(i) : eps(j) = 2 mu eps_i : eps_j + lambda tr_i tr_j, written so
    // that the (i, j) and (j, i) evaluations are bitwise identical.
    let dot = ei[(0, 0)] * ej[(0, 0)]
        + ei[(0, 1)] * ej[(0, 1)]
        + ei[(1, 0)] * ej[(1, 0)]
        + ei[(1, 1)] * ej[(1, 1)];
    2.0 * params.mu() * dot + params.lambda() * ti * tj
}

/// Element bending matrix over the twelve local rotation coefficients.
pub fn element_bending(
    map: &ElementMap,
    params: &MaterialParams,
    variant: RotationVariant,
) -> Result<SMatrix<f64, 12, 12>, MappingError> {
    let rule = gauss_square(DEFAULT_VOLUME_ORDER).expect("default order supported");
    let mut m = SMatrix::<f64, 12, 12>::zeros();
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let scale = w * map.jacobian_det(*p);
        let (values, derivs) = eval_rotation_basis(*p);
        let mut eps = [Mat2::zeros(); 12];
        let mut tr = [0.0; 12];
        for k in 0..12 {
            let g = map.physical_rotation_gradient(
                variant,
                *p,
                values[k],
                derivs[k][0],
                derivs[k][1],
            )?;
            eps[k] = 0.5 * (g + g.transpose());
            tr[k] = g.trace();
        }
        for i in 0..12 {
            for j in 0..12 {
                m[(i, j)] += scale * moment_contraction(&eps[i], tr[i], &eps[j], tr[j], params);
            }
        }
    }
    Ok(m)
}

/// Element shear matrix over the 21 local unknowns
/// `(u_0..u_8, theta_0..theta_11)`: the Gram matrix of
/// `grad phi_a` and `-theta_k` weighted by `kappa / t^2`.
pub fn element_shear(
    map: &ElementMap,
    params: &MaterialParams,
    variant: RotationVariant,
) -> Result<SMatrix<f64, 21, 21>, MappingError> {
    let (hi, _) = element_shear_split(map, params, variant)?;
    Ok(hi)
}

/// Element shear matrix accumulated in double-double precision, returned
/// as (high, low) parts. Keeping the Gram structure exact well below f64
/// rounding prevents the huge `kappa / t^2` factor from polluting the
/// bending-scale physics on the shear kernel at very small thickness.
pub(crate) fn element_shear_split(
    map: &ElementMap,
    params: &MaterialParams,
    variant: RotationVariant,
) -> Result<(SMatrix<f64, 21, 21>, SMatrix<f64, 21, 21>), MappingError> {
    let rule = gauss_square(DEFAULT_VOLUME_ORDER).expect("default order supported");
    let factor = params.kappa() / (params.t * params.t);
    let mut hi = SMatrix::<f64, 21, 21>::zeros();
    let mut lo = SMatrix::<f64, 21, 21>::zeros();
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let scale = factor * w * map.jacobian_det(*p);
        let (_, grads) = eval_displacement_basis(*p);
        let (rot_values, _) = eval_rotation_basis(*p);
        let mut c = [Vec2::zeros(); 21];
        for a in 0..9 {
            c[a] = map.physical_gradient_scalar(*p, grads[a])?;
        }
        for k in 0..12 {
            c[9 + k] = -map.push_rotation(variant, *p, rot_values[k])?;
        }
        for i in 0..21 {
            for j in 0..21 {
                let dot = Dd::product(c[i].x, c[j].x).add(Dd::product(c[i].y, c[j].y));
                let term = dot.scale(scale);
                let acc = Dd {
                    hi: hi[(i, j)],
                    lo: lo[(i, j)],
                }
                .add(term);
                hi[(i, j)] = acc.hi;
                lo[(i, j)] = acc.lo;
            }
        }
    }
    Ok((hi, lo))
}

/// Element load vector `(g, phi_a)_K`.
pub fn element_load<G: Fn(Vec2) -> f64>(map: &ElementMap, g: G) -> SVector<f64, 9> {
    let rule = gauss_square(DEFAULT_VOLUME_ORDER).expect("default order supported");
    let mut b = SVector::<f64, 9>::zeros();
    for (p, w) in rule.points.iter().zip(&rule.weights) {
        let scale = w * map.jacobian_det(*p) * g(map.map_point(*p));
        let (values, _) = eval_displacement_basis(*p);
        for a in 0..9 {
            b[a] += scale * values[a];
        }
    }
    b
}

/// Reference-coordinate point on local edge `local` at arclength parameter
/// `s`, following the counterclockwise traversal.
pub fn edge_reference_point(local: usize, s: f64) -> Vec2 {
    match local {
        0 => Vec2::new(s, 0.0),
        1 => Vec2::new(1.0, s),
        2 => Vec2::new(1.0 - s, 1.0),
        _ => Vec2::new(0.0, 1.0 - s),
    }
}

/// Edge coupling matrix over the rotation coefficients of the incident
/// elements: consistency, its transpose, and the penalty. The local
/// ordering is the twelve plus-side coefficients followed by the twelve
/// minus-side coefficients for interior edges.
pub struct EdgeLocal {
    pub plus: usize,
    pub minus: Option<usize>,
    pub matrix: DMatrix<f64>,
}

pub fn edge_terms(
    mesh: &QuadMesh,
    edge_index: usize,
    params: &MaterialParams,
    variant: RotationVariant,
) -> Result<EdgeLocal, AssemblyError> {
    let edge = &mesh.edges[edge_index];
    let rule = gauss_segment(DEFAULT_EDGE_ORDER).expect("default order supported");
    let map_plus = ElementMap::for_element(mesh, edge.plus).map_err(|source| {
        AssemblyError::Mapping {
            element: edge.plus,
            source,
        }
    })?;
    let minus = edge
        .minus
        .map(|k| {
            ElementMap::for_element(mesh, k).map_err(|source| AssemblyError::Mapping {
                element: k,
                source,
            })
        })
        .transpose()?;

    let n_dofs = if minus.is_some() { 24 } else { 12 };
    let mut m = DMatrix::<f64>::zeros(n_dofs, n_dofs);
    let penalty = (params.mu() + params.lambda()) * params.gamma / edge.h_e;

    // Orientation of the minus-side parametrization relative to the plus
    // side, decided from the shared vertex indices.
    let minus_reversed = edge.minus.map(|k| {
        let lm = edge.minus_local.expect("interior edge has minus local");
        let (c, d) = crate::mesh::local_edge_vertices(&mesh.quads[k], lm);
        debug_assert!(
            (c == edge.vertices[0] && d == edge.vertices[1])
                || (c == edge.vertices[1] && d == edge.vertices[0])
        );
        c == edge.vertices[1]
    });

    for (sq, w) in rule.points.iter().zip(&rule.weights) {
        let scale = w * edge.length;
        let p_plus = edge_reference_point(edge.plus_local, *sq);
        let x_plus = map_plus.map_point(p_plus);

        // Trace values and normal moments of every local basis function.
        let mut value = vec![Vec2::zeros(); n_dofs];
        let mut sigma_n = vec![Vec2::zeros(); n_dofs];
        let mut jump_sign = vec![1.0f64; n_dofs];
        let mut avg_weight = vec![1.0f64; n_dofs];

        let (pv, pd) = eval_rotation_basis(p_plus);
        for k in 0..12 {
            value[k] = map_plus
                .push_rotation(variant, p_plus, pv[k])
                .map_err(|source| AssemblyError::Mapping {
                    element: edge.plus,
                    source,
                })?;
            let g = map_plus
                .physical_rotation_gradient(variant, p_plus, pv[k], pd[k][0], pd[k][1])
                .map_err(|source| AssemblyError::Mapping {
                    element: edge.plus,
                    source,
                })?;
            let (_, sigma) = curvature_and_moment(g, params);
            sigma_n[k] = sigma * edge.normal;
        }

        if let (Some(map_minus), Some(reversed)) = (&minus, minus_reversed) {
            let sm = if reversed { 1.0 - *sq } else { *sq };
            let p_minus = edge_reference_point(edge.minus_local.unwrap(), sm);
            let x_minus = map_minus.map_point(p_minus);
            let distance = (x_plus - x_minus).norm();
            if distance > 1e-10 * (1.0 + x_plus.norm()) {
                return Err(AssemblyError::EdgeTraceMismatch {
                    edge: edge_index,
                    distance,
                });
            }
            let (mv, md) = eval_rotation_basis(p_minus);
            let k_minus = edge.minus.unwrap();
            for k in 0..12 {
                let i = 12 + k;
                value[i] = map_minus
                    .push_rotation(variant, p_minus, mv[k])
                    .map_err(|source| AssemblyError::Mapping {
                        element: k_minus,
                        source,
                    })?;
                let g = map_minus
                    .physical_rotation_gradient(variant, p_minus, mv[k], md[k][0], md[k][1])
                    .map_err(|source| AssemblyError::Mapping {
                        element: k_minus,
                        source,
                    })?;
                let (_, sigma) = curvature_and_moment(g, params);
                sigma_n[i] = sigma * edge.normal;
                jump_sign[i] = -1.0;
            }
            for weight in avg_weight.iter_mut() {
                *weight = 0.5;
            }
        }

        for i in 0..n_dofs {
            for j in 0..n_dofs {
                let jump_i = jump_sign[i];
                let jump_j = jump_sign[j];
                let consistency = avg_weight[j]
                    * jump_i
                    * (sigma_n[j].x * value[i].x + sigma_n[j].y * value[i].y);
                let symmetry = avg_weight[i]
                    * jump_j
                    * (sigma_n[i].x * value[j].x + sigma_n[i].y * value[j].y);
                let pen = penalty
                    * jump_i
                    * jump_j
                    * (value[i].x * value[j].x + value[i].y * value[j].y);
                m[(i, j)] += scale * (pen - consistency - symmetry);
            }
        }
    }

    Ok(EdgeLocal {
        plus: edge.plus,
        minus: edge.minus,
        matrix: m,
    })
}

/// Compressed sparse row matrix with full (both triangles) storage.
#[derive(Clone, Debug)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from triplets, summing duplicates. The stable sort keeps the
    /// accumulation order deterministic, so repeated assemblies are
    /// bit-identical.
    pub fn from_triplets(n: usize, mut triplets: Vec<(u32, u32, f64)>) -> Self {
        triplets.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx: Vec<u32> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        let mut last: Option<(u32, u32)> = None;
        for (i, j, v) in triplets {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i as usize + 1] = col_idx.len();
                last = Some((i, j));
            }
        }
        for r in 1..=n {
            row_ptr[r] = row_ptr[r].max(row_ptr[r - 1]);
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&(j as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k] as usize;
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Quadratic form `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * x[self.col_idx[k] as usize];
            }
            acc += x[i] * row;
        }
        acc
    }
}

/// Variant of [`CsrMatrix::from_triplets`] accumulating in double-double
/// precision; returns the high parts as a matrix plus the aligned low
/// parts.
fn csr_from_dd_triplets(n: usize, mut triplets: Vec<(u32, u32, Dd)>) -> (CsrMatrix, Vec<f64>) {
    triplets.sort_by_key(|&(i, j, _)| (i, j));
    let mut row_ptr = vec![0usize; n + 1];
    let mut col_idx: Vec<u32> = Vec::new();
    let mut values: Vec<Dd> = Vec::new();
    let mut last: Option<(u32, u32)> = None;
    for (i, j, v) in triplets {
        if last == Some((i, j)) {
            let slot = values.last_mut().unwrap();
            *slot = slot.add(v);
        } else {
            col_idx.push(j);
            values.push(v);
            row_ptr[i as usize + 1] = col_idx.len();
            last = Some((i, j));
        }
    }
    for r in 1..=n {
        row_ptr[r] = row_ptr[r].max(row_ptr[r - 1]);
    }
    let (hi, lo): (Vec<f64>, Vec<f64>) = values.into_iter().map(|v| (v.hi, v.lo)).unzip();
    (
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: hi,
        },
        lo,
    )
}

/// Assembled coupled system with the constrained displacement DOFs
/// eliminated.
///
/// Besides the assembled operator, the bending part (element bending plus
/// edge terms) and the shear part are kept as separate matrices: at extreme
/// thickness the shear entries exceed the bending entries by more than
/// `1/eps` and the sum alone can no longer represent the bending operator.
#[derive(Clone, Debug)]
pub struct SparseSystem {
    /// Reduced dimension `n_u + n_theta - n_constrained`.
    pub dim: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub n_displacement: usize,
    pub n_rotation: usize,
    pub bending_part: CsrMatrix,
    pub shear_part: CsrMatrix,
    /// Low-order (double-double) corrections to `shear_part.values`,
    /// aligned entry by entry.
    pub shear_part_low: Vec<f64>,
    pub(crate) free_of_full: Vec<Option<u32>>,
    pub(crate) full_of_free: Vec<u32>,
}

impl SparseSystem {
    /// Reduced index of a full (displacement-then-rotation) index.
    pub fn free_index(&self, full: usize) -> Option<usize> {
        self.free_of_full[full].map(|x| x as usize)
    }

    pub fn full_index(&self, free: usize) -> usize {
        self.full_of_free[free] as usize
    }

    /// Debug export in coordinate format, one `i j value` line per stored
    /// entry in row-major order.
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.matrix.n {
            for k in self.matrix.row_ptr[i]..self.matrix.row_ptr[i + 1] {
                let _ = writeln!(
                    out,
                    "{} {} {}",
                    i, self.matrix.col_idx[k], self.matrix.values[k]
                );
            }
        }
        out
    }
}

/// Assemble the coupled system for the given load.
pub fn assemble<G: Fn(Vec2) -> f64>(
    mesh: &QuadMesh,
    dofs: &DofMap,
    params: &MaterialParams,
    variant: RotationVariant,
    g: G,
) -> Result<SparseSystem, AssemblyError> {
    let n_u = dofs.n_displacement;
    let n_full = n_u + dofs.n_rotation;

    let mut free_of_full = vec![None; n_full];
    let mut full_of_free = Vec::with_capacity(n_full);
    for full in 0..n_full {
        let constrained = full < n_u && dofs.is_constrained(full);
        if !constrained {
            free_of_full[full] = Some(full_of_free.len() as u32);
            full_of_free.push(full as u32);
        }
    }
    let dim = full_of_free.len();

    let mut triplets: Vec<(u32, u32, f64)> = Vec::new();
    let mut bending_triplets: Vec<(u32, u32, f64)> = Vec::new();
    let mut shear_triplets: Vec<(u32, u32, Dd)> = Vec::new();
    let mut rhs = vec![0.0; dim];

    let scatter = |gi: usize, gj: usize, v: f64, triplets: &mut Vec<(u32, u32, f64)>| {
        if let (Some(fi), Some(fj)) = (free_of_full[gi], free_of_full[gj]) {
            triplets.push((fi, fj, v));
        }
    };

    for k in 0..mesh.n_elements() {
        let map = ElementMap::for_element(mesh, k)
            .map_err(|source| AssemblyError::Mapping { element: k, source })?;
        let u_dofs = dofs.displacement_dofs(k);
        let r_off = n_u + dofs.rotation_offset(k);

        let bending = element_bending(&map, params, variant)
            .map_err(|source| AssemblyError::Mapping { element: k, source })?;
        for i in 0..12 {
            for j in 0..12 {
                scatter(r_off + i, r_off + j, bending[(i, j)], &mut triplets);
                scatter(r_off + i, r_off + j, bending[(i, j)], &mut bending_triplets);
            }
        }

        let (shear, shear_low) = element_shear_split(&map, params, variant)
            .map_err(|source| AssemblyError::Mapping { element: k, source })?;
        let global = |local: usize| {
            if local < 9 {
                u_dofs[local]
            } else {
                r_off + (local - 9)
            }
        };
        for i in 0..21 {
            for j in 0..21 {
                scatter(global(i), global(j), shear[(i, j)], &mut triplets);
                if let (Some(fi), Some(fj)) =
                    (free_of_full[global(i)], free_of_full[global(j)])
                {
                    shear_triplets.push((
                        fi,
                        fj,
                        Dd {
                            hi: shear[(i, j)],
                            lo: shear_low[(i, j)],
                        },
                    ));
                }
            }
        }

        let load = element_load(&map, &g);
        for a in 0..9 {
            if let Some(fi) = free_of_full[u_dofs[a]] {
                rhs[fi as usize] += load[a];
            }
        }
    }

    for e in 0..mesh.edges.len() {
        let local = edge_terms(mesh, e, params, variant)?;
        let offsets: Vec<usize> = match local.minus {
            Some(minus) => {
                let p = n_u + dofs.rotation_offset(local.plus);
                let m = n_u + dofs.rotation_offset(minus);
                (0..12).map(|k| p + k).chain((0..12).map(|k| m + k)).collect()
            }
            None => {
                let p = n_u + dofs.rotation_offset(local.plus);
                (0..12).map(|k| p + k).collect()
            }
        };
        for (i, &gi) in offsets.iter().enumerate() {
            for (j, &gj) in offsets.iter().enumerate() {
                scatter(gi, gj, local.matrix[(i, j)], &mut triplets);
                scatter(gi, gj, local.matrix[(i, j)], &mut bending_triplets);
            }
        }
    }

    let matrix = CsrMatrix::from_triplets(dim, triplets);
    let bending_part = CsrMatrix::from_triplets(dim, bending_triplets);
    let (shear_part, shear_part_low) = csr_from_dd_triplets(dim, shear_triplets);
    Ok(SparseSystem {
        dim,
        matrix,
        rhs,
        n_displacement: n_u,
        n_rotation: dofs.n_rotation,
        bending_part,
        shear_part,
        shear_part_low,
        free_of_full,
        full_of_free,
    })
}
