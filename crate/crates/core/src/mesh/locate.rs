use super::{Mesh, Point};

/// Barycentric tolerance for accepting a point as inside a triangle.
pub const INSIDE_TOLERANCE: f64 = 1e-9;

/// The triangle containing a point and the point's barycentric coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub barycentric: [f64; 3],
}

/// Uniform background grid of candidate triangles.
#[derive(Debug, Clone)]
pub struct PointLocator {
    origin: Point,
    cell_size: [f64; 2],
    dims: [usize; 2],
    offsets: Vec<usize>,
    candidates: Vec<usize>,
    vertices: Vec<[Point; 3]>,
}

impl PointLocator {
    pub fn new(mesh: &Mesh) -> Self {
        let nt = mesh.triangle_count();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.nodes() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = ((nt as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let dims = [side, side];
        let cell_size = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let vertices: Vec<[Point; 3]> = (0..nt).map(|t| mesh.vertices(t)).collect();

        let bin_range = |v: &[Point; 3], d: usize| -> (usize, usize) {
            let min = v.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
            let max = v.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
            let a = ((min - lo[d]) / cell_size[d]).floor().max(0.0) as usize;
            let b = ((max - lo[d]) / cell_size[d]).floor().max(0.0) as usize;
            (a.min(dims[d] - 1), b.min(dims[d] - 1))
        };

        let mut counts = vec![0usize; dims[0] * dims[1] + 1];
        for v in &vertices {
            let (x0, x1) = bin_range(v, 0);
            let (y0, y1) = bin_range(v, 1);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    counts[j * dims[0] + i + 1] += 1;
                }
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let offsets = counts;
        let mut fill = offsets.clone();
        let mut candidates = vec![0usize; *offsets.last().unwrap()];
        for (t, v) in vertices.iter().enumerate() {
            let (x0, x1) = bin_range(v, 0);
            let (y0, y1) = bin_range(v, 1);
            for j in y0..=y1 {
                for i in x0..=x1 {
                    let b = j * dims[0] + i;
                    candidates[fill[b]] = t;
                    fill[b] += 1;
                }
            }
        }
        PointLocator {
            origin: lo,
            cell_size,
            dims,
            offsets,
            candidates,
            vertices,
        }
    }

    fn barycentric(v: &[Point; 3], p: Point) -> [f64; 3] {
        let det = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
        let l1 = ((p[0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (p[1] - v[0][1])) / det;
        let l2 = ((v[1][0] - v[0][0]) * (p[1] - v[0][1]) - (p[0] - v[0][0]) * (v[1][1] - v[0][1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Finds a triangle containing `p` (within [`INSIDE_TOLERANCE`] in
    /// barycentric coordinates). Among several candidates the one in which
    /// `p` lies deepest is returned, so the answer is independent of the
    /// candidate order.
    pub fn locate(&self, p: Point) -> Option<Location> {
        let mut bin = [0usize; 2];
        for d in 0..2 {
            let f = ((p[d] - self.origin[d]) / self.cell_size[d]).floor();
            if f < -1.0 || f > self.dims[d] as f64 {
                return None;
            }
            bin[d] = (f.max(0.0) as usize).min(self.dims[d] - 1);
        }
        let b = bin[1] * self.dims[0] + bin[0];
        let mut best: Option<(f64, Location)> = None;
        for &t in &self.candidates[self.offsets[b]..self.offsets[b + 1]] {
            let lam = Self::barycentric(&self.vertices[t], p);
            let depth = lam[0].min(lam[1]).min(lam[2]);
            if depth >= -INSIDE_TOLERANCE && best.as_ref().is_none_or(|(d, _)| depth > *d) {
                best = Some((
                    depth,
                    Location {
                        triangle: t,
                        barycentric: lam,
                    },
                ));
            }
        }
        best.map(|(_, loc)| loc)
    }
}

#[cfg(test)]
mod tests {
    use crate::mesh::{generate_cell, generate_square};

    #[test]
    fn locates_every_centroid() {
        let m = generate_cell(16, 0.4).unwrap();
        let loc = m.locator();
        for t in 0..m.triangle_count() {
            let v = m.vertices(t);
            let c = [(v[0][0] + v[1][0] + v[2][0]) / 3.0, (v[0][1] + v[1][1] + v[2][1]) / 3.0];
            let found = loc.locate(c).unwrap();
            assert_eq!(found.triangle, t);
        }
    }

    #[test]
    fn rejects_outside_points() {
        let m = generate_cell(16, 0.4).unwrap();
        assert!(m.locator().locate([0.5, 0.5]).is_none());
        let sq = generate_square(4).unwrap();
        assert!(sq.locator().locate([1.5, 0.5]).is_none());
        assert!(sq.locator().locate([1.0 + 1e-12, 0.5]).is_some());
    }
}
