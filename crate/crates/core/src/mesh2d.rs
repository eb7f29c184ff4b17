//! Planar conforming triangle meshes.
//!
//! Edges are globally oriented from the lower to the higher vertex index.
//! The global edge normal is the unit tangent rotated by -90 degrees, so for
//! a counter-clockwise triangle the outward normal of a side equals the
//! global normal times the per-side orientation sign.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Point = Vector2<f64>;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("invalid mesh parameter: {0}")]
    InvalidParameter(String),
    #[error("triangle {0} has non-positive signed area")]
    Inverted(usize),
    #[error("edge ({0},{1}) is shared by more than two triangles")]
    NonManifold(usize, usize),
    #[error("boundary edge ({0},{1}) has no region label")]
    Unlabeled(usize, usize),
    #[error("edge ({0},{1}) labelled as boundary is not a boundary edge")]
    NotBoundary(usize, usize),
    #[error("vertex index {0} out of range")]
    BadVertex(usize),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("mesh file: {0}")]
    Io(String),
}

/// Geometric frame of a mesh edge.
#[derive(Clone, Debug)]
pub struct FacetFrame {
    /// Unit normal, the tangent rotated by -90 degrees.
    pub normal: Point,
    /// Unit tangent from the low to the high vertex.
    pub tangent: Point,
    pub length: f64,
    /// (triangle, outward sign relative to `normal`) for each adjacent triangle.
    pub sides: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    tri_signs: Vec<[f64; 3]>,
    edge_tris: Vec<Vec<(usize, usize)>>,
    edge_region: Vec<Option<usize>>,
    regions: Vec<String>,
}

impl Mesh2D {
    /// Builds a mesh from vertices, CCW triangles and labelled boundary edges.
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: &[([usize; 2], String)],
    ) -> Result<Self, MeshError> {
        let nv = vertices.len();
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_tris: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        let mut tri_signs = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(MeshError::BadVertex(v));
                }
            }
            let [a, b, c] = tri.map(|i| vertices[i]);
            if cross(b - a, c - a) <= 0.0 {
                return Err(MeshError::Inverted(t));
            }
            let mut te = [0; 3];
            let mut ts = [0.0; 3];
            for i in 0..3 {
                let (p, q) = (tri[i], tri[(i + 1) % 3]);
                let key = [p.min(q), p.max(q)];
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push(Vec::new());
                    edges.len() - 1
                });
                if edge_tris[e].len() == 2 {
                    return Err(MeshError::NonManifold(key[0], key[1]));
                }
                edge_tris[e].push((t, i));
                te[i] = e;
                ts[i] = if p < q { 1.0 } else { -1.0 };
            }
            tri_edges.push(te);
            tri_signs.push(ts);
        }
        let mut regions: Vec<String> = Vec::new();
        let mut edge_region = vec![None; edges.len()];
        for (pair, name) in boundary {
            let key = [pair[0].min(pair[1]), pair[0].max(pair[1])];
            let e = *edge_index
                .get(&key)
                .ok_or(MeshError::NotBoundary(key[0], key[1]))?;
            if edge_tris[e].len() != 1 {
                return Err(MeshError::NotBoundary(key[0], key[1]));
            }
            let r = match regions.iter().position(|r| r == name) {
                Some(r) => r,
                None => {
                    regions.push(name.clone());
                    regions.len() - 1
                }
            };
            edge_region[e] = Some(r);
        }
        for (e, tris) in edge_tris.iter().enumerate() {
            if tris.len() == 1 && edge_region[e].is_none() {
                return Err(MeshError::Unlabeled(edges[e][0], edges[e][1]));
            }
        }
        Ok(Self {
            vertices,
            triangles,
            edges,
            tri_edges,
            tri_signs,
            edge_tris,
            edge_region,
            regions,
        })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }
    /// Global edges of a triangle; local edge `i` joins local vertices `i` and `i+1`.
    pub fn tri_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }
    /// +1 where the local edge direction agrees with the global one.
    pub fn tri_edge_signs(&self, t: usize) -> [f64; 3] {
        self.tri_signs[t]
    }
    /// (triangle, local edge) pairs adjacent to an edge.
    pub fn edge_triangles(&self, e: usize) -> &[(usize, usize)] {
        &self.edge_tris[e]
    }
    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_tris[e].len() == 1
    }
    pub fn region_names(&self) -> &[String] {
        &self.regions
    }
    pub fn edge_region(&self, e: usize) -> Option<&str> {
        self.edge_region[e].map(|r| self.regions[r].as_str())
    }
    pub fn has_region(&self, name: &str) -> bool {
        self.regions.iter().any(|r| r == name)
    }
    /// Edges carrying the given boundary label, in increasing edge order.
    pub fn region_edges(&self, name: &str) -> Result<Vec<usize>, MeshError> {
        let r = self
            .regions
            .iter()
            .position(|r| r == name)
            .ok_or_else(|| MeshError::UnknownRegion(name.to_string()))?;
        Ok((0..self.edges.len())
            .filter(|&e| self.edge_region[e] == Some(r))
            .collect())
    }

    pub fn tri_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.vertices[i])
    }
    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        0.5 * cross(b - a, c - a)
    }
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_points(t);
        (b - a).norm().max((c - b).norm()).max((a - c).norm())
    }
    pub fn edge_length(&self, e: usize) -> f64 {
        let [p, q] = self.edges[e];
        (self.vertices[q] - self.vertices[p]).norm()
    }
    /// Minimum edge length over the mesh.
    pub fn min_edge_length(&self) -> f64 {
        (0..self.edges.len())
            .map(|e| self.edge_length(e))
            .fold(f64::INFINITY, f64::min)
    }
    /// Maximum triangle diameter over the mesh.
    pub fn max_diameter(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn facet_frame(&self, e: usize) -> FacetFrame {
        let [p, q] = self.edges[e];
        let d = self.vertices[q] - self.vertices[p];
        let length = d.norm();
        let tangent = d / length;
        let normal = Point::new(tangent.y, -tangent.x);
        let sides = self.edge_tris[e]
            .iter()
            .map(|&(t, i)| (t, self.tri_signs[t][i]))
            .collect();
        FacetFrame {
            normal,
            tangent,
            length,
            sides,
        }
    }

    /// Barycentric coordinates of `x` in triangle `t`.
    pub fn barycentric(&self, t: usize, x: &Point) -> [f64; 3] {
        let [a, b, c] = self.tri_points(t);
        let det = cross(b - a, c - a);
        let l1 = cross(x - a, c - a) / det;
        let l2 = cross(b - a, x - a) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Lowest-index triangle containing `x` (with a relative tolerance).
    pub fn locate(&self, x: &Point) -> Option<usize> {
        let tol = 1e-10;
        (0..self.triangles.len()).find(|&t| self.barycentric(t, x).iter().all(|&l| l >= -tol))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Maps every vertex through `f`; topology and labels are unchanged.
    pub fn map_vertices(&self, f: impl Fn(&Point) -> Point) -> Result<Self, MeshError> {
        let vertices = self.vertices.iter().map(f).collect();
        Self::new(vertices, self.triangles.clone(), &self.boundary_list())
    }

    fn boundary_list(&self) -> Vec<([usize; 2], String)> {
        (0..self.edges.len())
            .filter_map(|e| {
                self.edge_region[e].map(|r| (self.edges[e], self.regions[r].clone()))
            })
            .collect()
    }

    /// Checks the structural invariants; returns a description of the first violation.
    pub fn check_invariants(&self) -> Result<(), String> {
        for t in 0..self.triangles.len() {
            if self.area(t) <= 0.0 {
                return Err(format!("triangle {t} not CCW"));
            }
        }
        for (e, tris) in self.edge_tris.iter().enumerate() {
            match (tris.len(), self.edge_region[e]) {
                (1, Some(_)) | (2, None) => {}
                (1, None) => return Err(format!("boundary edge {e} unlabelled")),
                _ => return Err(format!("edge {e} adjacency {}", tris.len())),
            }
            if tris.len() == 2 {
                let s0 = self.tri_signs[tris[0].0][tris[0].1];
                let s1 = self.tri_signs[tris[1].0][tris[1].1];
                if s0 * s1 >= 0.0 {
                    return Err(format!("edge {e} orientation not opposite"));
                }
            }
        }
        let euler = self.vertices.len() as i64 - self.edges.len() as i64
            + self.triangles.len() as i64;
        if euler != 1 {
            return Err(format!("Euler characteristic {euler}"));
        }
        Ok(())
    }

    /// Splits every triangle into four through its edge midpoints.
    pub fn uniform_refine(&self) -> Self {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        for &[p, q] in &self.edges {
            vertices.push(0.5 * (self.vertices[p] + self.vertices[q]));
        }
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let te = self.tri_edges[t];
            let m = te.map(|e| nv + e);
            let [a, b, c] = *tri;
            triangles.push([a, m[0], m[2]]);
            triangles.push([m[0], b, m[1]]);
            triangles.push([m[2], m[1], c]);
            triangles.push([m[0], m[1], m[2]]);
        }
        let mut boundary = Vec::new();
        for e in 0..self.edges.len() {
            if let Some(r) = self.edge_region[e] {
                let [p, q] = self.edges[e];
                boundary.push(([p, nv + e], self.regions[r].clone()));
                boundary.push(([nv + e, q], self.regions[r].clone()));
            }
        }
        Self::new(vertices, triangles, &boundary).expect("refinement preserves validity")
    }

    /// Moves interior vertices by a deterministic pseudo-random offset of at
    /// most `fraction * h` per coordinate, where `h` is the minimum edge length.
    pub fn jitter_interior(&self, fraction: f64, seed: u64) -> Result<Self, MeshError> {
        let h = self.min_edge_length();
        let mut on_boundary = vec![false; self.vertices.len()];
        for e in 0..self.edges.len() {
            if self.is_boundary_edge(e) {
                on_boundary[self.edges[e][0]] = true;
                on_boundary[self.edges[e][1]] = true;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut vertices = self.vertices.clone();
        for (v, x) in vertices.iter_mut().enumerate() {
            let dx: f64 = rng.random_range(-1.0..1.0);
            let dy: f64 = rng.random_range(-1.0..1.0);
            if !on_boundary[v] {
                *x += fraction * h * Point::new(dx, dy);
            }
        }
        Self::new(vertices, self.triangles.clone(), &self.boundary_list())
    }

    /// Canonical JSON serialization.
    pub fn to_json(&self) -> String {
        let file = MeshFile {
            vertices: self.vertices.iter().map(|p| [p.x, p.y]).collect(),
            triangles: self.triangles.clone(),
            boundary: self
                .boundary_list()
                .into_iter()
                .map(|(edge, region)| BoundaryEntry { edge, region })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("mesh serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MeshError> {
        let file: MeshFile =
            serde_json::from_str(text).map_err(|e| MeshError::Io(e.to_string()))?;
        let boundary: Vec<_> = file
            .boundary
            .into_iter()
            .map(|b| (b.edge, b.region))
            .collect();
        Self::new(
            file.vertices.iter().map(|v| Point::new(v[0], v[1])).collect(),
            file.triangles,
            &boundary,
        )
    }

    pub fn write(&self, path: &Path) -> Result<(), MeshError> {
        std::fs::write(path, self.to_json()).map_err(|e| MeshError::Io(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, MeshError> {
        let text = std::fs::read_to_string(path).map_err(|e| MeshError::Io(e.to_string()))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEntry>,
}

#[derive(Serialize, Deserialize)]
struct BoundaryEntry {
    edge: [usize; 2],
    region: String,
}

pub fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Structured grid on a logically rectangular patch, every cell split along
/// its lower-left to upper-right diagonal. `map` sends (i/nx, j/ny) to the plane.
fn structured(
    nx: usize,
    ny: usize,
    map: impl Fn(f64, f64) -> Point,
    names: [&str; 4],
) -> Result<Mesh2D, MeshError> {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push(map(i as f64 / nx as f64, j as f64 / ny as f64));
        }
    }
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let [left, right, bottom, top] = names;
    let mut boundary = Vec::new();
    for i in 0..nx {
        boundary.push(([id(i, 0), id(i + 1, 0)], bottom.to_string()));
        boundary.push(([id(i, ny), id(i + 1, ny)], top.to_string()));
    }
    for j in 0..ny {
        boundary.push(([id(0, j), id(0, j + 1)], left.to_string()));
        boundary.push(([id(nx, j), id(nx, j + 1)], right.to_string()));
    }
    Mesh2D::new(vertices, triangles, &boundary)
}

/// `nx` by `ny` rectangles of size `lx` by `ly` starting at `origin`.
/// Regions: "left", "right", "bottom", "top".
pub fn build_rect_tri_mesh(
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    origin: Point,
) -> Result<Mesh2D, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidParameter("cell counts must be >= 1".into()));
    }
    if !(lx > 0.0 && ly > 0.0) {
        return Err(MeshError::InvalidParameter("dimensions must be positive".into()));
    }
    structured(
        nx,
        ny,
        |s, t| origin + Point::new(s * lx, t * ly),
        ["left", "right", "bottom", "top"],
    )
}

/// Cook's membrane: trapezoid (0,0), (48,44), (48,60), (0,44) with `n` by `n` cells.
/// Regions: "left" (clamped edge), "right" (loaded edge), "bottom", "top".
pub fn build_cook_tri_mesh(n: usize) -> Result<Mesh2D, MeshError> {
    if n == 0 {
        return Err(MeshError::InvalidParameter("n must be >= 1".into()));
    }
    structured(
        n,
        n,
        |s, t| {
            let x = 48.0 * s;
            let y0 = 44.0 * s;
            let y1 = 44.0 + 16.0 * s;
            Point::new(x, y0 + t * (y1 - y0))
        },
        ["left", "right", "bottom", "top"],
    )
}

/// Sorted list of vertex indices touched by the given region's edges.
pub fn region_vertices(mesh: &Mesh2D, name: &str) -> Result<Vec<usize>, MeshError> {
    let mut set = BTreeMap::new();
    for e in mesh.region_edges(name)? {
        for v in mesh.edges()[e] {
            set.insert(v, ());
        }
    }
    Ok(set.into_keys().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_counts() {
        let m = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (4, 5, 2));
        let m = build_rect_tri_mesh(10, 1, 10.0, 0.1, Point::zeros()).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (22, 41, 20));
        m.check_invariants().unwrap();
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(build_rect_tri_mesh(0, 1, 1.0, 1.0, Point::zeros()).is_err());
        assert!(build_rect_tri_mesh(1, 1, -1.0, 1.0, Point::zeros()).is_err());
        assert!(build_cook_tri_mesh(0).is_err());
    }

    #[test]
    fn cook_counts_and_corners() {
        let m = build_cook_tri_mesh(1).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (4, 5, 2));
        let m = build_cook_tri_mesh(2).unwrap();
        assert_eq!((m.num_vertices(), m.num_edges(), m.num_triangles()), (9, 16, 8));
        m.check_invariants().unwrap();
        for c in [[0.0, 0.0], [48.0, 44.0], [48.0, 60.0], [0.0, 44.0]] {
            assert!(m.vertices().iter().any(|v| (v - Point::new(c[0], c[1])).norm() < 1e-12));
        }
        assert!((m.total_area() - 0.5 * (44.0 + 16.0) * 48.0).abs() < 1e-9);
    }

    #[test]
    fn facet_frames() {
        let m = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
        for e in 0..m.num_edges() {
            let f = m.facet_frame(e);
            assert!(f.normal.dot(&f.tangent).abs() < 1e-15);
            let [p, q] = m.edges()[e];
            if p == 0 && q == 1 {
                assert!((f.tangent - Point::new(1.0, 0.0)).norm() < 1e-15);
                assert!((f.normal - Point::new(0.0, -1.0)).norm() < 1e-15);
                assert!((f.length - 1.0).abs() < 1e-15);
            }
            if p == 0 && q == 3 {
                assert!((f.length - 2f64.sqrt()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn refine_counts_and_area() {
        let m = build_rect_tri_mesh(1, 1, 1.0, 1.0, Point::zeros()).unwrap();
        let r = m.uniform_refine();
        assert_eq!(r.num_triangles(), 8);
        assert_eq!(r.num_vertices(), m.num_vertices() + m.num_edges());
        r.check_invariants().unwrap();
        assert!((r.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(r.region_edges("left").unwrap().len(), 2);
    }

    #[test]
    fn json_round_trip() {
        let m = build_cook_tri_mesh(2).unwrap().jitter_interior(0.2, 7).unwrap();
        let text = m.to_json();
        let back = Mesh2D::from_json(&text).unwrap();
        assert_eq!(back.to_json(), text);
        assert_eq!(back.num_edges(), m.num_edges());
    }

    #[test]
    fn locate_points() {
        let m = build_rect_tri_mesh(2, 2, 1.0, 1.0, Point::zeros()).unwrap();
        let t = m.locate(&Point::new(0.9, 0.1)).unwrap();
        assert!(m.barycentric(t, &Point::new(0.9, 0.1)).iter().all(|&l| l >= 0.0));
        assert!(m.locate(&Point::new(1.5, 0.1)).is_none());
    }
}
