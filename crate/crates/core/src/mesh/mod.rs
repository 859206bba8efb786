//! Conforming P1 triangulations with tagged boundaries.
//!
//! Three generators are provided: the structured unit square, the periodic
//! unit cell with a circular hole, and the perforated square built by tiling
//! the cell. Meshes are immutable once constructed.

mod generate;
mod io;
mod locate;

pub use generate::{generate_cell, generate_perforated, generate_square, PerforationSpec};
pub use io::{format_mesh, parse_mesh, read_mesh, write_mesh};
pub use locate::{Location, PointLocator};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// A point in the plane.
pub type Point = [f64; 2];

/// Which part of the boundary an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryTag {
    /// Outer boundary of the domain (Dirichlet).
    Exterior,
    /// Boundary of a perforation (natural, zero flux).
    Hole,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::Exterior => f.write_str("EXTERIOR"),
            BoundaryTag::Hole => f.write_str("HOLE"),
        }
    }
}

impl FromStr for BoundaryTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "EXTERIOR" => Ok(BoundaryTag::Exterior),
            "HOLE" => Ok(BoundaryTag::Hole),
            other => Err(format!("unknown boundary tag '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
}

/// A conforming triangulation.
///
/// Construction through [`Mesh::new`] checks every structural invariant:
/// positive orientation, edge conformity, boundary tagging and periodic
/// pairing offsets.
pub struct Mesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    periodic_pairs: Option<Vec<(usize, usize)>>,
    locator: OnceLock<PointLocator>,
}

impl Clone for Mesh {
    fn clone(&self) -> Self {
        Mesh {
            nodes: self.nodes.clone(),
            triangles: self.triangles.clone(),
            boundary_edges: self.boundary_edges.clone(),
            periodic_pairs: self.periodic_pairs.clone(),
            locator: OnceLock::new(),
        }
    }
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.triangles == other.triangles
            && self.boundary_edges == other.boundary_edges
            && self.periodic_pairs == other.periodic_pairs
    }
}

impl fmt::Debug for Mesh {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mesh")
            .field("nodes", &self.nodes.len())
            .field("triangles", &self.triangles.len())
            .field("boundary_edges", &self.boundary_edges.len())
            .field("periodic_pairs", &self.periodic_pairs.as_ref().map(Vec::len))
            .finish()
    }
}

pub(crate) fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn signed_area(p: Point, q: Point, r: Point) -> f64 {
    0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (r[0] - p[0]) * (q[1] - p[1]))
}

impl Mesh {
    pub fn new(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        periodic_pairs: Option<Vec<(usize, usize)>>,
    ) -> Result<Self> {
        let n = nodes.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing node")));
            }
            let a = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if !(a > 0.0) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} is not counterclockwise (signed area {a:e})"
                )));
            }
        }

        let incidence = edge_incidence(&triangles);
        if let Some((e, c)) = incidence.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge ({}, {}) is shared by {c} triangles",
                e.0, e.1
            )));
        }

        let mut tagged: HashMap<(usize, usize), BoundaryTag> = HashMap::new();
        for be in &boundary_edges {
            let key = edge_key(be.nodes[0], be.nodes[1]);
            if incidence.get(&key) != Some(&1) {
                return Err(Error::InvalidMesh(format!(
                    "tagged edge ({}, {}) is not a boundary edge",
                    key.0, key.1
                )));
            }
            if tagged.insert(key, be.tag).is_some() {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge ({}, {}) tagged more than once",
                    key.0, key.1
                )));
            }
        }
        let boundary_count = incidence.values().filter(|&&c| c == 1).count();
        if boundary_count != tagged.len() {
            return Err(Error::InvalidMesh(format!(
                "{} boundary edges but {} tags",
                boundary_count,
                tagged.len()
            )));
        }

        if let Some(pairs) = &periodic_pairs {
            for &(m, s) in pairs {
                if m >= n || s >= n {
                    return Err(Error::InvalidMesh("periodic pair references a missing node".into()));
                }
                let d = [nodes[s][0] - nodes[m][0], nodes[s][1] - nodes[m][1]];
                if d != [1.0, 0.0] && d != [0.0, 1.0] {
                    return Err(Error::InvalidMesh(format!(
                        "periodic pair ({m}, {s}) is offset by ({}, {})",
                        d[0], d[1]
                    )));
                }
            }
        }

        Ok(Mesh {
            nodes,
            triangles,
            boundary_edges,
            periodic_pairs,
            locator: OnceLock::new(),
        })
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn periodic_pairs(&self) -> Option<&[(usize, usize)]> {
        self.periodic_pairs.as_deref()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.vertices(t);
        signed_area(p, q, r)
    }

    /// Gradients of the three barycentric basis functions on triangle `t`,
    /// together with the triangle area.
    pub fn basis_gradients(&self, t: usize) -> ([[f64; 2]; 3], f64) {
        let [p0, p1, p2] = self.vertices(t);
        let two_area = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let s = 1.0 / two_area;
        (
            [
                [(p1[1] - p2[1]) * s, (p2[0] - p1[0]) * s],
                [(p2[1] - p0[1]) * s, (p0[0] - p2[0]) * s],
                [(p0[1] - p1[1]) * s, (p1[0] - p0[0]) * s],
            ],
            0.5 * two_area,
        )
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Largest element diameter (longest edge).
    pub fn max_h(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let v = self.vertices(t);
                (0..3).map(|i| dist(v[i], v[(i + 1) % 3])).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_degrees(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| min_angle(self.vertices(t)))
            .fold(180.0, f64::min)
    }

    /// Sorted, deduplicated nodes lying on edges with the given tag.
    pub fn tagged_nodes(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_edges
            .iter()
            .filter(|e| e.tag == tag)
            .flat_map(|e| e.nodes)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn has_tag(&self, tag: BoundaryTag) -> bool {
        self.boundary_edges.iter().any(|e| e.tag == tag)
    }

    /// Number of triangles sharing each edge.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), usize> {
        edge_incidence(&self.triangles)
    }

    /// Spatial index used for point location; built on first use.
    pub fn locator(&self) -> &PointLocator {
        self.locator.get_or_init(|| PointLocator::new(self))
    }
}

pub(crate) fn edge_incidence(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), usize> {
    let mut incidence = HashMap::with_capacity(triangles.len() * 2);
    for tri in triangles {
        for i in 0..3 {
            *incidence.entry(edge_key(tri[i], tri[(i + 1) % 3])).or_insert(0) += 1;
        }
    }
    incidence
}

pub(crate) fn dist(p: Point, q: Point) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

pub(crate) fn min_angle(v: [Point; 3]) -> f64 {
    let mut best = 180.0_f64;
    for i in 0..3 {
        let a = v[i];
        let b = v[(i + 1) % 3];
        let c = v[(i + 2) % 3];
        let u = [b[0] - a[0], b[1] - a[1]];
        let w = [c[0] - a[0], c[1] - a[1]];
        let cos = (u[0] * w[0] + u[1] * w[1]) / (u[0].hypot(u[1]) * w[0].hypot(w[1]));
        best = best.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_triangle() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge {
                    nodes: [0, 1],
                    tag: BoundaryTag::Exterior,
                },
                BoundaryEdge {
                    nodes: [1, 2],
                    tag: BoundaryTag::Exterior,
                },
                BoundaryEdge {
                    nodes: [2, 0],
                    tag: BoundaryTag::Exterior,
                },
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let err = Mesh::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 2, 1]], vec![], None).unwrap_err();
        assert!(err.to_string().contains("counterclockwise"));
    }

    #[test]
    fn untagged_boundary_rejected() {
        let err = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![BoundaryEdge {
                nodes: [0, 1],
                tag: BoundaryTag::Exterior,
            }],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidMesh(_)));
    }

    #[test]
    fn double_tag_rejected() {
        let err = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                BoundaryEdge {
                    nodes: [0, 1],
                    tag: BoundaryTag::Exterior,
                },
                BoundaryEdge {
                    nodes: [1, 0],
                    tag: BoundaryTag::Hole,
                },
                BoundaryEdge {
                    nodes: [1, 2],
                    tag: BoundaryTag::Exterior,
                },
                BoundaryEdge {
                    nodes: [2, 0],
                    tag: BoundaryTag::Exterior,
                },
            ],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("more than once"));
    }

    #[test]
    fn bad_periodic_offset_rejected() {
        let err = Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            reference_triangle().boundary_edges().to_vec(),
            Some(vec![(1, 2)]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("offset"));
    }

    #[test]
    fn reference_gradients() {
        let m = reference_triangle();
        let (g, area) = m.basis_gradients(0);
        assert_eq!(area, 0.5);
        assert_eq!(g, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!((m.min_angle_degrees() - 45.0).abs() < 1e-12);
    }
}
