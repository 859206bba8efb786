use std::collections::HashMap;

use super::{dist, edge_incidence, edge_key, min_angle, signed_area, BoundaryEdge, BoundaryTag, Mesh, Point};
use crate::error::{invalid, Error, Result};

/// Nodes closer than this fraction of the grid spacing to the hole boundary
/// are moved onto it before cutting.
const SNAP_FRACTION: f64 = 0.3;

/// Tolerance for merging coincident nodes when tiling cells.
const MERGE_TOLERANCE: f64 = 1e-12;

/// Geometry of a periodically perforated unit square.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerforationSpec {
    cells_per_side: usize,
    hole_radius: f64,
}

impl PerforationSpec {
    /// `epsilon` must be the reciprocal of a positive integer (to 1e-9
    /// relative) and `hole_radius` (in cell units) must lie in (0, 0.5).
    pub fn new(epsilon: f64, hole_radius: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1], got {epsilon}")));
        }
        let cells = (1.0 / epsilon).round();
        if ((1.0 / epsilon) - cells).abs() > 1e-9 * cells {
            return Err(invalid(format!(
                "1/epsilon must be an integer so that cells tile the square, got 1/{epsilon} = {}",
                1.0 / epsilon
            )));
        }
        Self::from_cells(cells as usize, hole_radius)
    }

    pub fn from_cells(cells_per_side: usize, hole_radius: f64) -> Result<Self> {
        if cells_per_side == 0 {
            return Err(invalid("cells per side must be positive"));
        }
        if !(hole_radius > 0.0 && hole_radius < 0.5) {
            return Err(invalid(format!("hole radius must lie in (0, 0.5), got {hole_radius}")));
        }
        Ok(PerforationSpec {
            cells_per_side,
            hole_radius,
        })
    }

    pub fn epsilon(&self) -> f64 {
        1.0 / self.cells_per_side as f64
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells_per_side
    }

    pub fn hole_radius(&self) -> f64 {
        self.hole_radius
    }

    /// Area fraction of the cell outside the hole, 1 - pi r^2.
    pub fn porosity(&self) -> f64 {
        1.0 - std::f64::consts::PI * self.hole_radius * self.hole_radius
    }
}

fn grid_index(n: usize, i: usize, j: usize) -> usize {
    j * (n + 1) + i
}

fn grid_nodes(n: usize) -> Vec<Point> {
    let mut nodes = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    nodes
}

/// Union-jack pattern: the diagonal alternates so the mesh is symmetric under
/// both axis reflections (for even n) and the diagonal swap.
fn grid_triangles(n: usize) -> Vec<[usize; 3]> {
    let mut tris = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let a = grid_index(n, i, j);
            let b = grid_index(n, i + 1, j);
            let c = grid_index(n, i + 1, j + 1);
            let d = grid_index(n, i, j + 1);
            if (i + j) % 2 == 0 {
                tris.push([a, b, c]);
                tris.push([a, c, d]);
            } else {
                tris.push([a, b, d]);
                tris.push([b, c, d]);
            }
        }
    }
    tris
}

fn on_same_unit_side(p: Point, q: Point) -> bool {
    (p[0] == 0.0 && q[0] == 0.0)
        || (p[0] == 1.0 && q[0] == 1.0)
        || (p[1] == 0.0 && q[1] == 0.0)
        || (p[1] == 1.0 && q[1] == 1.0)
}

/// Boundary edges in triangle traversal order, tagged EXTERIOR when both ends
/// lie on one side of the unit square and HOLE otherwise.
fn tag_boundary(nodes: &[Point], triangles: &[[usize; 3]]) -> Vec<BoundaryEdge> {
    let incidence = edge_incidence(triangles);
    let mut edges = Vec::new();
    for tri in triangles {
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            if incidence[&edge_key(a, b)] == 1 {
                let tag = if on_same_unit_side(nodes[a], nodes[b]) {
                    BoundaryTag::Exterior
                } else {
                    BoundaryTag::Hole
                };
                edges.push(BoundaryEdge { nodes: [a, b], tag });
            }
        }
    }
    edges
}

/// Structured union-jack triangulation of the unit square with `n`
/// subdivisions per side: (n+1)^2 nodes, 2n^2 triangles, all boundary edges
/// EXTERIOR.
pub fn generate_square(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(invalid("square mesh needs at least one subdivision"));
    }
    let nodes = grid_nodes(n);
    let triangles = grid_triangles(n);
    let boundary = tag_boundary(&nodes, &triangles);
    Mesh::new(nodes, triangles, boundary, None)
}

fn unit_periodic_pairs(n: usize, renumber: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(2 * (n + 1));
    for j in 0..=n {
        pairs.push((renumber[grid_index(n, 0, j)], renumber[grid_index(n, n, j)]));
    }
    for i in 0..=n {
        pairs.push((renumber[grid_index(n, i, 0)], renumber[grid_index(n, i, n)]));
    }
    pairs
}

/// Periodic unit cell with a circular hole of radius `r` centred at
/// (0.5, 0.5).
///
/// The hole is cut out of the structured grid: nodes near the circle are
/// snapped radially onto it, remaining crossing edges are split at their
/// exact intersection with the circle, and the part of each triangle outside
/// the disk is kept (quadrilaterals are split along the better diagonal).
/// `r == 0` yields the unperforated periodic cell.
pub fn generate_cell(n: usize, r: f64) -> Result<Mesh> {
    if n < 8 {
        return Err(invalid(format!("cell mesh needs n >= 8, got {n}")));
    }
    if !(0.0..0.5).contains(&r) {
        return Err(invalid(format!(
            "hole radius must lie in [0, 0.5) so the hole stays inside the cell, got {r}"
        )));
    }
    let mut nodes = grid_nodes(n);
    if r == 0.0 {
        let triangles = grid_triangles(n);
        let boundary = tag_boundary(&nodes, &triangles);
        let identity: Vec<usize> = (0..nodes.len()).collect();
        let pairs = unit_periodic_pairs(n, &identity);
        return Mesh::new(nodes, triangles, boundary, Some(pairs));
    }
    let h = 1.0 / n as f64;
    if r < 2.0 * h {
        return Err(invalid(format!(
            "hole radius {r} is not resolved by grid spacing {h}; use n >= {}",
            (2.0 / r).ceil()
        )));
    }

    let centre = [0.5, 0.5];
    let project = |p: Point| -> Point {
        let d = dist(p, centre);
        [
            centre[0] + r * (p[0] - centre[0]) / d,
            centre[1] + r * (p[1] - centre[1]) / d,
        ]
    };

    let mut phi: Vec<f64> = nodes.iter().map(|&p| dist(p, centre) - r).collect();
    for j in 1..n {
        for i in 1..n {
            let k = grid_index(n, i, j);
            if phi[k].abs() < SNAP_FRACTION * h {
                nodes[k] = project(nodes[k]);
                phi[k] = 0.0;
            }
        }
    }

    let mut cuts: HashMap<(usize, usize), usize> = HashMap::new();
    let mut out_tris: Vec<[usize; 3]> = Vec::with_capacity(2 * n * n);
    for tri in grid_triangles(n) {
        let s = tri.map(|v| phi[v]);
        if s.iter().all(|&x| x <= 0.0) {
            continue;
        }
        if s.iter().all(|&x| x >= 0.0) {
            out_tris.push(tri);
            continue;
        }
        // Clip the triangle against the outside of the disk.
        let mut poly: Vec<usize> = Vec::with_capacity(4);
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            if phi[a] >= 0.0 {
                poly.push(a);
            }
            if (phi[a] > 0.0 && phi[b] < 0.0) || (phi[a] < 0.0 && phi[b] > 0.0) {
                let key = edge_key(a, b);
                let id = *cuts.entry(key).or_insert_with(|| {
                    let (outside, inside) = if phi[a] > 0.0 { (a, b) } else { (b, a) };
                    let p = circle_crossing(nodes[outside], nodes[inside], centre, r);
                    nodes.push(project(p));
                    phi.push(0.0);
                    nodes.len() - 1
                });
                poly.push(id);
            }
        }
        match poly.len() {
            3 => out_tris.push([poly[0], poly[1], poly[2]]),
            4 => {
                let split_a = [[poly[0], poly[1], poly[2]], [poly[0], poly[2], poly[3]]];
                let split_b = [[poly[0], poly[1], poly[3]], [poly[1], poly[2], poly[3]]];
                let quality = |s: &[[usize; 3]; 2]| {
                    s.iter()
                        .map(|t| {
                            let v = t.map(|i| nodes[i]);
                            if signed_area(v[0], v[1], v[2]) <= 0.0 {
                                -1.0
                            } else {
                                min_angle(v)
                            }
                        })
                        .fold(f64::INFINITY, f64::min)
                };
                let chosen = if quality(&split_b) > quality(&split_a) {
                    split_b
                } else {
                    split_a
                };
                out_tris.extend(chosen);
            }
            _ => {}
        }
    }

    // Drop nodes inside the hole and renumber in creation order.
    let mut used = vec![false; nodes.len()];
    for t in &out_tris {
        for &v in t {
            used[v] = true;
        }
    }
    let mut renumber = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::with_capacity(nodes.len());
    for (i, p) in nodes.iter().enumerate() {
        if used[i] {
            renumber[i] = kept.len();
            kept.push(*p);
        }
    }
    let triangles: Vec<[usize; 3]> = out_tris.iter().map(|t| t.map(|v| renumber[v])).collect();
    let boundary = tag_boundary(&kept, &triangles);
    let pairs = unit_periodic_pairs(n, &renumber);
    Mesh::new(kept, triangles, boundary, Some(pairs))
}

/// Point where the segment from `outside` to `inside` enters the circle.
fn circle_crossing(outside: Point, inside: Point, centre: Point, r: f64) -> Point {
    let d = [inside[0] - outside[0], inside[1] - outside[1]];
    let f = [outside[0] - centre[0], outside[1] - centre[1]];
    let a = d[0] * d[0] + d[1] * d[1];
    let b = f[0] * d[0] + f[1] * d[1];
    let c = f[0] * f[0] + f[1] * f[1] - r * r;
    let disc = (b * b - a * c).max(0.0);
    let t = ((-b - disc.sqrt()) / a).clamp(0.0, 1.0);
    [outside[0] + t * d[0], outside[1] + t * d[1]]
}

/// Perforated unit square: the cell mesh with `n_per_cell` subdivisions is
/// scaled by epsilon and tiled over the square, and coincident interface
/// nodes are merged.
pub fn generate_perforated(n_per_cell: usize, spec: &PerforationSpec) -> Result<Mesh> {
    let cell = generate_cell(n_per_cell, spec.hole_radius())?;
    let m = spec.cells_per_side();
    let scale = m as f64;

    let quantize = |p: Point| -> (i64, i64) {
        (
            (p[0] / MERGE_TOLERANCE).round() as i64,
            (p[1] / MERGE_TOLERANCE).round() as i64,
        )
    };
    let mut index: HashMap<(i64, i64), usize> = HashMap::new();
    let mut nodes: Vec<Point> = Vec::with_capacity(m * m * cell.node_count());
    let mut triangles = Vec::with_capacity(m * m * cell.triangle_count());
    let mut local = vec![0usize; cell.node_count()];

    for cj in 0..m {
        for ci in 0..m {
            for (k, p) in cell.nodes().iter().enumerate() {
                let q = [(ci as f64 + p[0]) / scale, (cj as f64 + p[1]) / scale];
                let on_face = p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;
                local[k] = if on_face {
                    *index.entry(quantize(q)).or_insert_with(|| {
                        nodes.push(q);
                        nodes.len() - 1
                    })
                } else {
                    nodes.push(q);
                    nodes.len() - 1
                };
            }
            triangles.extend(cell.triangles().iter().map(|t| t.map(|v| local[v])));
        }
    }

    let boundary = tag_boundary(&nodes, &triangles);
    let mesh = Mesh::new(nodes, triangles, boundary, None)?;
    let max_h = mesh.max_h();
    if max_h >= spec.epsilon() {
        return Err(Error::RefinementTooCoarse {
            max_h,
            epsilon: spec.epsilon(),
        });
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn count_tags(m: &Mesh, tag: BoundaryTag) -> usize {
        m.boundary_edges().iter().filter(|e| e.tag == tag).count()
    }

    #[test]
    fn square_counts() {
        let m = generate_square(1).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.triangle_count(), 2);
        assert_eq!(count_tags(&m, BoundaryTag::Exterior), 4);

        let m = generate_square(2).unwrap();
        assert_eq!(m.node_count(), 9);
        assert_eq!(m.triangle_count(), 8);
    }

    #[test]
    fn square_tiles_exactly() {
        let m = generate_square(64).unwrap();
        assert!((m.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn square_zero_rejected() {
        assert!(matches!(generate_square(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn cell_area_converges_to_porosity() {
        let m = generate_cell(64, 0.4).unwrap();
        let exact = 1.0 - PI * 0.16;
        assert!((m.area() - exact).abs() / exact < 0.01);

        let m = generate_cell(128, 0.05).unwrap();
        let exact = 1.0 - PI * 0.05 * 0.05;
        assert!((m.area() - exact).abs() / exact < 0.005);
    }

    #[test]
    fn cell_rejects_large_radius() {
        assert!(matches!(generate_cell(16, 0.5), Err(Error::InvalidArgument(_))));
        assert!(matches!(generate_cell(16, 0.7), Err(Error::InvalidArgument(_))));
        assert!(matches!(generate_cell(4, 0.3), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn hole_nodes_on_circle() {
        let m = generate_cell(32, 0.4).unwrap();
        for v in m.tagged_nodes(BoundaryTag::Hole) {
            let d = dist(m.nodes()[v], [0.5, 0.5]);
            assert!((d - 0.4).abs() < 1e-14, "node {v} at distance {d}");
        }
        assert!(count_tags(&m, BoundaryTag::Hole) > 0);
    }

    #[test]
    fn periodic_partners_bit_exact() {
        let m = generate_cell(24, 0.4).unwrap();
        let nodes = m.nodes();
        let pairs = m.periodic_pairs().unwrap();
        for v in 0..m.node_count() {
            if nodes[v][0] == 0.0 {
                assert!(pairs
                    .iter()
                    .any(|&(a, b)| a == v && nodes[b][0] == 1.0 && nodes[b][1].to_bits() == nodes[v][1].to_bits()));
            }
        }
    }

    #[test]
    fn perforated_counts_holes() {
        let spec = PerforationSpec::new(0.5, 0.4).unwrap();
        let m = generate_perforated(16, &spec).unwrap();
        let exact = 1.0 - 4.0 * PI * 0.2 * 0.2;
        assert!((m.area() - exact).abs() / exact < 0.01);
        // Each hole is a closed loop: HOLE edge count equals HOLE node count.
        assert_eq!(
            count_tags(&m, BoundaryTag::Hole),
            m.tagged_nodes(BoundaryTag::Hole).len()
        );

        let spec = PerforationSpec::new(0.25, 0.4).unwrap();
        let m = generate_perforated(16, &spec).unwrap();
        let exact = 1.0 - 16.0 * PI * 0.01;
        assert!((m.area() - exact).abs() / exact < 0.01);
        assert!(m.max_h() < 0.25);
    }

    #[test]
    fn perforated_single_cell_is_cell() {
        let spec = PerforationSpec::new(1.0, 0.4).unwrap();
        let m = generate_perforated(16, &spec).unwrap();
        let c = generate_cell(16, 0.4).unwrap();
        assert_eq!(m.nodes(), c.nodes());
        assert_eq!(m.triangles(), c.triangles());
    }

    #[test]
    fn spec_validation() {
        assert!(PerforationSpec::new(0.2, 0.4).is_ok());
        assert!(PerforationSpec::new(0.3, 0.4).is_err());
        assert!(PerforationSpec::new(0.25, 0.5).is_err());
        assert!(PerforationSpec::new(1.0 / 6.0, 0.4).is_ok());
    }
}
