//! Convex quadrilateral meshes with the oriented edge topology required by
//! the interior-penalty form.
//!
//! Every edge carries a fixed unit normal. For a boundary edge it is the
//! exterior normal of the domain; for an interior edge it points from the
//! `plus` element into the `minus` element, which fixes the sign of jumps
//! and averages once and for all. The `plus` side is always the incident
//! element with the smaller index, so the whole topology is reproducible
//! bit-for-bit.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::Vector2;
use thiserror::Error;

use crate::rng::SplitMix64;

/// 2D point / vector type used throughout the crate.
pub type Vec2 = Vector2<f64>;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("distortion {0} outside [0, 0.45)")]
    InvalidDistortion(f64),
    #[error("jitter {0} outside [0, 0.3]")]
    InvalidJitter(f64),
    #[error("levels must be >= 1")]
    InvalidLevels,
    #[error("n must be >= 1")]
    InvalidSubdivisions,
    #[error("quad {0} is not convex with counterclockwise orientation")]
    NonConvexQuad(usize),
    #[error("edge ({0}, {1}) is shared by more than two quads")]
    NonManifoldEdge(usize, usize),
    #[error("quad {quad} references vertex {vertex} out of bounds")]
    VertexOutOfBounds { quad: usize, vertex: usize },
    #[error("vertex {0} rejected {1} times during jittering; jitter too large")]
    JitterRejection(usize, usize),
    #[error("mesh file parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Interior edges separate two elements; boundary edges lie on the domain
/// boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    Interior,
    Boundary,
}

/// One mesh edge with its fixed orientation data.
#[derive(Clone, Debug)]
pub struct Edge {
    /// Endpoint vertex indices, in the traversal order of the plus side.
    pub vertices: [usize; 2],
    /// Incident element with the smaller index.
    pub plus: usize,
    /// Local edge index (0..4) of the edge within the plus element.
    pub plus_local: usize,
    /// Second incident element, absent for boundary edges.
    pub minus: Option<usize>,
    /// Local edge index within the minus element.
    pub minus_local: Option<usize>,
    /// Fixed unit normal: exterior of the domain for boundary edges,
    /// pointing from plus into minus for interior edges.
    pub normal: Vec2,
    /// Euclidean length of the (straight) edge.
    pub length: f64,
    /// Edge weight `(|T+| + |T-|) / (2 |E|)`, or `|T+| / |E|` on the
    /// boundary.
    pub h_e: f64,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.kind == EdgeKind::Boundary
    }
}

/// Mesh of convex quadrilaterals, immutable after construction.
#[derive(Clone, Debug)]
pub struct QuadMesh {
    pub vertices: Vec<Vec2>,
    /// Vertex indices per quad, counterclockwise.
    pub quads: Vec<[usize; 4]>,
    pub edges: Vec<Edge>,
    /// Element areas, in quad order.
    pub areas: Vec<f64>,
    /// Mesh parameter: the largest element diameter.
    pub h: f64,
}

fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn quad_signed_area(c: &[Vec2; 4]) -> f64 {
    0.5 * (cross(c[0], c[1]) + cross(c[1], c[2]) + cross(c[2], c[3]) + cross(c[3], c[0]))
}

fn quad_diameter(c: &[Vec2; 4]) -> f64 {
    let mut d = 0.0f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            d = d.max((c[i] - c[j]).norm());
        }
    }
    d
}

fn quad_is_convex_ccw(c: &[Vec2; 4]) -> bool {
    (0..4).all(|k| {
        let e0 = c[(k + 1) % 4] - c[k];
        let e1 = c[(k + 2) % 4] - c[(k + 1) % 4];
        cross(e0, e1) > 0.0
    })
}

/// Diameter of the inscribed circle of the triangle `(a, b, c)`.
fn incircle_diameter(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    let area = 0.5 * cross(b - a, c - a).abs();
    let per = (b - a).norm() + (c - b).norm() + (a - c).norm();
    4.0 * area / per
}

impl QuadMesh {
    /// Build a mesh from raw cells, validating convexity and orientation
    /// and constructing the edge topology.
    pub fn from_cells(vertices: Vec<Vec2>, quads: Vec<[usize; 4]>) -> Result<Self, MeshError> {
        for (q, quad) in quads.iter().enumerate() {
            for &v in quad {
                if v >= vertices.len() {
                    return Err(MeshError::VertexOutOfBounds { quad: q, vertex: v });
                }
            }
        }
        let mut areas = Vec::with_capacity(quads.len());
        let mut h = 0.0f64;
        for (q, quad) in quads.iter().enumerate() {
            let c = corner_coords(&vertices, quad);
            if !quad_is_convex_ccw(&c) || quad_signed_area(&c) <= 0.0 {
                return Err(MeshError::NonConvexQuad(q));
            }
            areas.push(quad_signed_area(&c));
            h = h.max(quad_diameter(&c));
        }
        let edges = build_edges(&vertices, &quads, &areas)?;
        Ok(Self {
            vertices,
            quads,
            edges,
            areas,
            h,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.quads.len()
    }

    /// Corner coordinates of element `k`, counterclockwise.
    pub fn corners(&self, k: usize) -> [Vec2; 4] {
        corner_coords(&self.vertices, &self.quads[k])
    }

    /// Uniform n x n mesh of the unit square.
    pub fn uniform_unit_square(n: usize) -> Result<Self, MeshError> {
        generate_perturbed_mesh(n, 0.0, 0)
    }

    /// Serialize in the plain text format: `nv nq`, then one `x y` line per
    /// vertex, then one `i0 i1 i2 i3` line per quad (0-based,
    /// counterclockwise). Edges are never serialized.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.vertices.len(), self.quads.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {}", v.x, v.y);
        }
        for q in &self.quads {
            let _ = writeln!(s, "{} {} {} {}", q[0], q[1], q[2], q[3]);
        }
        s
    }

    /// Parse the text format written by [`QuadMesh::to_text`]. The edge
    /// topology is always rebuilt.
    pub fn from_text(text: &str) -> Result<Self, MeshError> {
        let mut lines = text.lines().enumerate();
        let (line, header) = lines
            .next()
            .ok_or(MeshError::Parse {
                line: 1,
                message: "empty file".into(),
            })?;
        let mut it = header.split_whitespace();
        let nv: usize = parse_field(it.next(), line, "vertex count")?;
        let nq: usize = parse_field(it.next(), line, "quad count")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, row) = lines.next().ok_or(MeshError::Parse {
                line: nv + nq + 1,
                message: "unexpected end of file".into(),
            })?;
            let mut it = row.split_whitespace();
            let x: f64 = parse_field(it.next(), line, "x")?;
            let y: f64 = parse_field(it.next(), line, "y")?;
            vertices.push(Vec2::new(x, y));
        }
        let mut quads = Vec::with_capacity(nq);
        for _ in 0..nq {
            let (line, row) = lines.next().ok_or(MeshError::Parse {
                line: nv + nq + 1,
                message: "unexpected end of file".into(),
            })?;
            let mut it = row.split_whitespace();
            let mut q = [0usize; 4];
            for slot in &mut q {
                *slot = parse_field(it.next(), line, "vertex index")?;
            }
            quads.push(q);
        }
        Self::from_cells(vertices, quads)
    }
}

fn parse_field<T: std::str::FromStr>(
    field: Option<&str>,
    line: usize,
    what: &str,
) -> Result<T, MeshError> {
    field
        .ok_or(MeshError::Parse {
            line: line + 1,
            message: format!("missing {what}"),
        })?
        .parse()
        .map_err(|_| MeshError::Parse {
            line: line + 1,
            message: format!("invalid {what}"),
        })
}

fn corner_coords(vertices: &[Vec2], quad: &[usize; 4]) -> [Vec2; 4] {
    [
        vertices[quad[0]],
        vertices[quad[1]],
        vertices[quad[2]],
        vertices[quad[3]],
    ]
}

/// Local edge `l` of a quad runs from corner `l` to corner `(l+1) % 4`.
pub fn local_edge_vertices(quad: &[usize; 4], local: usize) -> (usize, usize) {
    (quad[local], quad[(local + 1) % 4])
}

fn build_edges(
    vertices: &[Vec2],
    quads: &[[usize; 4]],
    areas: &[f64],
) -> Result<Vec<Edge>, MeshError> {
    // Incidences keyed by the sorted vertex pair; edge order is the order of
    // first appearance while scanning elements, which is deterministic.
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut incidences: Vec<((usize, usize), Vec<(usize, usize)>)> = Vec::new();
    for (q, quad) in quads.iter().enumerate() {
        for local in 0..4 {
            let (a, b) = local_edge_vertices(quad, local);
            let key = (a.min(b), a.max(b));
            let slot = *index.entry(key).or_insert_with(|| {
                incidences.push((key, Vec::new()));
                incidences.len() - 1
            });
            incidences[slot].1.push((q, local));
        }
    }

    let mut edges = Vec::with_capacity(incidences.len());
    for (key, inc) in incidences {
        if inc.len() > 2 {
            return Err(MeshError::NonManifoldEdge(key.0, key.1));
        }
        // Plus side: incident element with the smaller index.
        let (plus, plus_local, minus, minus_local) = match inc.as_slice() {
            [(q, l)] => (*q, *l, None, None),
            [(q0, l0), (q1, l1)] => {
                if q0 < q1 {
                    (*q0, *l0, Some(*q1), Some(*l1))
                } else {
                    (*q1, *l1, Some(*q0), Some(*l0))
                }
            }
            _ => unreachable!(),
        };
        let (a, b) = local_edge_vertices(&quads[plus], plus_local);
        let tangent = vertices[b] - vertices[a];
        let length = tangent.norm();
        // Exterior normal of the plus element: counterclockwise traversal
        // rotated by -90 degrees.
        let normal = Vec2::new(tangent.y, -tangent.x) / length;
        let (h_e, kind) = match minus {
            Some(m) => (
                (areas[plus] + areas[m]) / (2.0 * length),
                EdgeKind::Interior,
            ),
            None => (areas[plus] / length, EdgeKind::Boundary),
        };
        edges.push(Edge {
            vertices: [a, b],
            plus,
            plus_local,
            minus,
            minus_local,
            normal,
            length,
            h_e,
            kind,
        });
    }
    Ok(edges)
}

/// Worst shape-regularity measure `h_K / rho_K` over all elements, where
/// `rho_K` is the smallest incircle diameter among the four subtriangles cut
/// off by the two diagonals.
pub fn shape_regularity(mesh: &QuadMesh) -> f64 {
    let mut worst = 0.0f64;
    for k in 0..mesh.n_elements() {
        let c = mesh.corners(k);
        let rho = [
            incircle_diameter(c[0], c[1], c[2]),
            incircle_diameter(c[0], c[2], c[3]),
            incircle_diameter(c[0], c[1], c[3]),
            incircle_diameter(c[1], c[2], c[3]),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        worst = worst.max(quad_diameter(&c) / rho);
    }
    worst
}

/// Sequence of trapezoidal meshes of the unit square, level `l` holding
/// `2^l x 2^l` elements.
///
/// Odd-numbered horizontal grid lines zigzag: every vertex on such a line
/// (including the ones on the left and right boundary, which slide along
/// the boundary) moves vertically by `(-1)^(i+j) * distortion / N`. All
/// elements of every level are then similar to one fixed trapezoid with two
/// vertical parallel sides, so the family is self-similar across levels and
/// `distortion = 0` recovers the uniform square mesh.
pub fn generate_trapezoid_sequence(
    levels: usize,
    distortion: f64,
) -> Result<Vec<QuadMesh>, MeshError> {
    if levels < 1 {
        return Err(MeshError::InvalidLevels);
    }
    if !(0.0..0.45).contains(&distortion) {
        return Err(MeshError::InvalidDistortion(distortion));
    }
    let mut meshes = Vec::with_capacity(levels);
    for level in 1..=levels {
        let n = 1usize << level;
        let fnn = n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let x = i as f64 / fnn;
                let mut y = j as f64 / fnn;
                if j % 2 == 1 {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    y += sign * distortion / fnn;
                }
                vertices.push(Vec2::new(x, y));
            }
        }
        let mut quads = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let v = |i: usize, j: usize| j * (n + 1) + i;
                quads.push([v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]);
            }
        }
        meshes.push(QuadMesh::from_cells(vertices, quads)?);
    }
    Ok(meshes)
}

/// Structured n x n mesh of the unit square whose interior vertices are
/// jittered by a deterministic pseudo-random offset uniform in
/// `[-jitter/n, jitter/n]^2`. Offsets that would produce a non-convex quad
/// are redrawn; boundary vertices never move.
pub fn generate_perturbed_mesh(n: usize, jitter: f64, seed: u64) -> Result<QuadMesh, MeshError> {
    if n < 1 {
        return Err(MeshError::InvalidSubdivisions);
    }
    if !(0.0..=0.3).contains(&jitter) {
        return Err(MeshError::InvalidJitter(jitter));
    }
    let fnn = n as f64;
    let v = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices: Vec<Vec2> = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec2::new(i as f64 / fnn, j as f64 / fnn));
        }
    }
    let mut quads = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            quads.push([v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]);
        }
    }
    if jitter > 0.0 {
        let amp = jitter / fnn;
        for j in 1..n {
            for i in 1..n {
                let vid = v(i, j);
                let base = vertices[vid];
                let mut rng = SplitMix64::stream(seed, vid as u64);
                let mut accepted = false;
                for _attempt in 0..1000 {
                    let candidate =
                        base + Vec2::new(rng.next_symmetric(amp), rng.next_symmetric(amp));
                    vertices[vid] = candidate;
                    // Check the (up to four) cells incident to vertex (i, j)
                    // with the current positions. Each quad gets its final
                    // check when its last interior corner is placed, so the
                    // finished mesh is guaranteed convex.
                    let ok = incident_cells(i, j, n).into_iter().all(|(ci, cj)| {
                        let quad = &quads[cj * n + ci];
                        quad_is_convex_ccw(&corner_coords(&vertices, quad))
                    });
                    if ok {
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(MeshError::JitterRejection(vid, 1000));
                }
            }
        }
    }
    QuadMesh::from_cells(vertices, quads)
}

fn incident_cells(i: usize, j: usize, n: usize) -> Vec<(usize, usize)> {
    let mut cells = Vec::with_capacity(4);
    for cj in j.saturating_sub(1)..=j.min(n - 1) {
        for ci in i.saturating_sub(1)..=i.min(n - 1) {
            cells.push((ci, cj));
        }
    }
    cells
}
