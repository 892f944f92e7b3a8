//! Conforming triangulations, newest-vertex bisection and the induced boundary mesh.
//!
//! Triangles are stored as vertex triples `[a, b, c]` in counterclockwise order.
//! The refinement edge of a triangle is always `(a, b)`; `c` is its newest vertex.
//! Bisection of `[a, b, c]` at the midpoint `m` of `(a, b)` produces the sons
//! `[c, a, m]` and `[b, c, m]`, which again carry their refinement edge first.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    let d = sub(a, b);
    d[0].hypot(d[1])
}

pub(crate) fn midpoint(a: Point, b: Point) -> Point {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Edge connectivity derived from the triangle list.
#[derive(Debug, Clone)]
pub struct Topology {
    /// Edges as sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// `tri_edges[t][k]` is the edge from local vertex `k` to `k + 1`; `k = 0` is the refinement edge.
    pub tri_edges: Vec<[usize; 3]>,
    /// Triangles adjacent to each edge; the second slot is empty on the boundary.
    pub edge_tris: Vec<[Option<usize>; 2]>,
    /// Edge ids of the interior facets, in increasing order. A facet id indexes this list.
    pub interior_edges: Vec<usize>,
    /// Edge id of each boundary segment.
    pub segment_edges: Vec<usize>,
    /// Boundary segment index of each edge, if any.
    pub edge_segment: Vec<Option<usize>>,
}

impl Topology {
    fn build(nv: usize, triangles: &[[usize; 3]], boundary: &[[usize; 2]]) -> Result<Self> {
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len() / 2 + nv);
        let mut edges = Vec::new();
        let mut edge_tris: Vec<[Option<usize>; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0; 3];
            for k in 0..3 {
                let key = edge_key(tri[k], tri[(k + 1) % 3]);
                let id = *lookup.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_tris.push([None, None]);
                    edges.len() - 1
                });
                let slot = &mut edge_tris[id];
                if slot[0].is_none() {
                    slot[0] = Some(t);
                } else if slot[1].is_none() {
                    slot[1] = Some(t);
                } else {
                    return Err(Error::InvalidMesh(format!("edge {key:?} shared by more than two triangles")));
                }
                local[k] = id;
            }
            tri_edges.push(local);
        }
        let mut edge_segment = vec![None; edges.len()];
        let mut segment_edges = Vec::with_capacity(boundary.len());
        for (k, seg) in boundary.iter().enumerate() {
            let id = *lookup
                .get(&edge_key(seg[0], seg[1]))
                .ok_or_else(|| Error::InvalidMesh(format!("boundary segment {seg:?} is not a triangle edge")))?;
            if edge_tris[id][1].is_some() {
                return Err(Error::InvalidMesh(format!("boundary segment {seg:?} is an interior edge")));
            }
            if edge_segment[id].replace(k).is_some() {
                return Err(Error::InvalidMesh(format!("boundary segment {seg:?} listed twice")));
            }
            segment_edges.push(id);
        }
        let mut interior_edges = Vec::new();
        for (e, tris) in edge_tris.iter().enumerate() {
            match (tris[1], edge_segment[e]) {
                (Some(_), _) => interior_edges.push(e),
                (None, None) => {
                    return Err(Error::InvalidMesh(format!("edge {:?} has one triangle but is not on the boundary", edges[e])))
                }
                (None, Some(_)) => {}
            }
        }
        Ok(Self { edges, tri_edges, edge_tris, interior_edges, segment_edges, edge_segment })
    }
}

/// Conforming triangulation of a polygon with NVB bookkeeping.
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<[usize; 2]>,
    parents: Vec<Option<usize>>,
    level: usize,
    topology: Topology,
}

/// Marked triangles, interior facets and boundary segments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MarkSet {
    pub triangles: BTreeSet<usize>,
    pub facets: BTreeSet<usize>,
    pub segments: BTreeSet<usize>,
}

impl MarkSet {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty() && self.facets.is_empty() && self.segments.is_empty()
    }

    pub fn len(&self) -> usize {
        self.triangles.len() + self.facets.len() + self.segments.len()
    }

    /// Every triangle, interior facet and boundary segment of `mesh`.
    pub fn all(mesh: &VolumeMesh) -> Self {
        Self {
            triangles: (0..mesh.num_triangles()).collect(),
            facets: (0..mesh.num_interior_facets()).collect(),
            segments: (0..mesh.num_boundary_segments()).collect(),
        }
    }
}

impl VolumeMesh {
    /// Builds a mesh whose triangles already carry their refinement edge first.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>, boundary: Vec<[usize; 2]>) -> Result<Self> {
        let n = triangles.len();
        Self::from_parts(vertices, triangles, boundary, vec![None; n], 0)
    }

    /// Builds a mesh and assigns the longest edge of each triangle as refinement edge,
    /// breaking ties by the smallest opposite-vertex index.
    pub fn with_longest_edge_refinement(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<[usize; 2]>,
    ) -> Result<Self> {
        let triangles = triangles
            .into_iter()
            .map(|t| {
                let len = |k: usize| dist(vertices[t[k]], vertices[t[(k + 1) % 3]]);
                let longest = (0..3).map(len).fold(0.0, f64::max);
                let k = (0..3)
                    .filter(|&k| len(k) >= longest * (1.0 - 1e-12))
                    .min_by_key(|&k| t[(k + 2) % 3])
                    .expect("triangle has edges");
                [t[k], t[(k + 1) % 3], t[(k + 2) % 3]]
            })
            .collect();
        Self::new(vertices, triangles, boundary)
    }

    fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<[usize; 2]>,
        parents: Vec<Option<usize>>,
        level: usize,
    ) -> Result<Self> {
        let nv = vertices.len();
        for t in &triangles {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::InvalidMesh(format!("triangle {t:?} references a missing vertex")));
            }
        }
        if boundary.iter().flatten().any(|&v| v >= nv) {
            return Err(Error::InvalidMesh("boundary references a missing vertex".into()));
        }
        let topology = Topology::build(nv, &triangles, &boundary)?;
        let mesh = Self { vertices, triangles, boundary, parents, level, topology };
        mesh.check_conformity()?;
        Ok(mesh)
    }

    /// Verifies orientation, the closed counterclockwise boundary loop and that the
    /// triangles tile the polygon without overlap.
    pub fn check_conformity(&self) -> Result<()> {
        for (i, t) in self.triangles.iter().enumerate() {
            if self.area(i) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {i} {t:?} is not positively oriented")));
            }
        }
        let nb = self.boundary.len();
        if nb < 3 {
            return Err(Error::InvalidMesh("boundary has fewer than three segments".into()));
        }
        for k in 0..nb {
            if self.boundary[k][1] != self.boundary[(k + 1) % nb][0] {
                return Err(Error::InvalidMesh(format!("boundary segments {k} and {} are not consecutive", (k + 1) % nb)));
            }
        }
        // Boundary segments must be traversed with the owning triangle on the left.
        for (k, seg) in self.boundary.iter().enumerate() {
            let e = self.topology.segment_edges[k];
            let t = self.topology.edge_tris[e][0].expect("boundary edge has a triangle");
            let tri = self.triangles[t];
            let opposite = tri.iter().copied().find(|v| !seg.contains(v)).expect("third vertex");
            if signed_area(self.vertices[seg[0]], self.vertices[seg[1]], self.vertices[opposite]) <= 0.0 {
                return Err(Error::InvalidMesh(format!("boundary segment {k} is not counterclockwise")));
            }
        }
        let polygon: f64 = self
            .boundary
            .iter()
            .map(|s| {
                let (a, b) = (self.vertices[s[0]], self.vertices[s[1]]);
                0.5 * (a[0] * b[1] - b[0] * a[1])
            })
            .sum();
        let total: f64 = (0..self.triangles.len()).map(|i| self.area(i)).sum();
        if (polygon - total).abs() > 1e-12 * polygon.abs().max(1.0) {
            return Err(Error::InvalidMesh(format!("triangle areas {total} do not tile the polygon area {polygon}")));
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary(&self) -> &[[usize; 2]] {
        &self.boundary
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parents
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.topology.edges.len()
    }

    pub fn num_interior_facets(&self) -> usize {
        self.topology.interior_edges.len()
    }

    pub fn num_boundary_segments(&self) -> usize {
        self.boundary.len()
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        signed_area(a, b, c)
    }

    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        dist(a, b).max(dist(b, c)).max(dist(c, a))
    }

    /// Maximum over the triangles of `diam(T)^2 / |T|`.
    pub fn shape_regularity(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.diameter(t).powi(2) / self.area(t)).fold(0.0, f64::max)
    }

    /// Largest distance between two vertices.
    pub fn domain_diameter(&self) -> f64 {
        let pts: Vec<Point> = self.boundary.iter().map(|s| self.vertices[s[0]]).collect();
        let mut d: f64 = 0.0;
        for (i, &a) in pts.iter().enumerate() {
            for &b in &pts[i + 1..] {
                d = d.max(dist(a, b));
            }
        }
        d
    }

    /// Interior angle of the polygon at boundary vertex `v`.
    pub fn interior_angle(&self, v: usize) -> Option<f64> {
        let incoming = self.boundary.iter().find(|s| s[1] == v)?;
        let outgoing = self.boundary.iter().find(|s| s[0] == v)?;
        let to_prev = sub(self.vertices[incoming[0]], self.vertices[v]);
        let to_next = sub(self.vertices[outgoing[1]], self.vertices[v]);
        // Counterclockwise sweep from the outgoing to the incoming direction.
        let angle = to_prev[1].atan2(to_prev[0]) - to_next[1].atan2(to_next[0]);
        Some(angle.rem_euclid(std::f64::consts::TAU))
    }

    /// Refines all marked entities by newest-vertex bisection.
    ///
    /// A marked triangle has all three edges bisected, a marked facet or boundary
    /// segment has its edge bisected. Refinement edges of triangles carrying a
    /// marked edge are added until the edge set is closed, so the result is conforming.
    pub fn refine(&self, marks: &MarkSet) -> Result<VolumeMesh> {
        let topo = &self.topology;
        if let Some(&t) = marks.triangles.iter().find(|&&t| t >= self.num_triangles()) {
            return Err(Error::UnknownEntity { kind: "triangle", id: t });
        }
        if let Some(&f) = marks.facets.iter().find(|&&f| f >= self.num_interior_facets()) {
            return Err(Error::UnknownEntity { kind: "facet", id: f });
        }
        if let Some(&s) = marks.segments.iter().find(|&&s| s >= self.num_boundary_segments()) {
            return Err(Error::UnknownEntity { kind: "segment", id: s });
        }
        if marks.is_empty() {
            return Ok(self.clone());
        }

        let mut marked = vec![false; self.num_edges()];
        for &t in &marks.triangles {
            for &e in &topo.tri_edges[t] {
                marked[e] = true;
            }
        }
        for &f in &marks.facets {
            marked[topo.interior_edges[f]] = true;
        }
        for &s in &marks.segments {
            marked[topo.segment_edges[s]] = true;
        }
        // Closure: any marked edge forces the refinement edge of its triangles.
        loop {
            let mut changed = false;
            for edges in &topo.tri_edges {
                if !marked[edges[0]] && (marked[edges[1]] || marked[edges[2]]) {
                    marked[edges[0]] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut new_vertex = vec![usize::MAX; self.num_edges()];
        for (e, &m) in marked.iter().enumerate() {
            if m {
                let [a, b] = topo.edges[e];
                new_vertex[e] = vertices.len();
                vertices.push(midpoint(self.vertices[a], self.vertices[b]));
            }
        }

        let mut triangles = Vec::with_capacity(2 * self.num_triangles());
        let mut parents = Vec::with_capacity(2 * self.num_triangles());
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let [e0, e1, e2] = topo.tri_edges[t];
            let mut push = |tri: [usize; 3]| {
                triangles.push(tri);
                parents.push(Some(t));
            };
            if !marked[e0] {
                push([a, b, c]);
                continue;
            }
            let m = new_vertex[e0];
            if marked[e2] {
                let m2 = new_vertex[e2];
                push([m, c, m2]);
                push([a, m, m2]);
            } else {
                push([c, a, m]);
            }
            if marked[e1] {
                let m1 = new_vertex[e1];
                push([m, b, m1]);
                push([c, m, m1]);
            } else {
                push([b, c, m]);
            }
        }

        let mut boundary = Vec::with_capacity(2 * self.boundary.len());
        for (k, &[a, b]) in self.boundary.iter().enumerate() {
            let e = topo.segment_edges[k];
            if marked[e] {
                boundary.push([a, new_vertex[e]]);
                boundary.push([new_vertex[e], b]);
            } else {
                boundary.push([a, b]);
            }
        }

        Self::from_parts(vertices, triangles, boundary, parents, self.level + 1)
    }

    /// Uniform refinement: every triangle is split into four.
    pub fn refine_uniform(&self) -> Result<VolumeMesh> {
        self.refine(&MarkSet::all(self))
    }

    /// Plain-text dump: a header line, coordinate rows, index triples, boundary pairs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "vertices {} triangles {} boundary {}",
            self.num_vertices(),
            self.num_triangles(),
            self.num_boundary_segments()
        );
        for v in &self.vertices {
            let _ = writeln!(out, "{} {}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for s in &self.boundary {
            let _ = writeln!(out, "{} {}", s[0], s[1]);
        }
        out
    }

    /// Parses the format written by [`VolumeMesh::to_text`]. Triangle vertex order is kept as given.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty mesh file".into()))?.split_whitespace().collect();
        let count = |key: &str, pos: usize| -> Result<usize> {
            match (header.get(pos), header.get(pos + 1)) {
                (Some(&k), Some(v)) if k == key => v.parse().map_err(|_| Error::Parse(format!("bad count for {key}"))),
                _ => Err(Error::Parse(format!("header must contain `{key} <count>`"))),
            }
        };
        let (nv, nt, nb) = (count("vertices", 0)?, count("triangles", 2)?, count("boundary", 4)?);
        fn row<T: std::str::FromStr, const N: usize>(line: Option<&str>) -> Result<[T; N]> {
            let line = line.ok_or_else(|| Error::Parse("unexpected end of mesh file".into()))?;
            let vals: Vec<T> = line
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| Error::Parse(format!("cannot parse `{s}`"))))
                .collect::<Result<_>>()?;
            vals.try_into().map_err(|_| Error::Parse(format!("expected {N} values in `{line}`")))
        }
        let vertices = (0..nv).map(|_| row::<f64, 2>(lines.next())).collect::<Result<Vec<_>>>()?;
        let triangles = (0..nt).map(|_| row::<usize, 3>(lines.next())).collect::<Result<Vec<_>>>()?;
        let boundary = (0..nb).map(|_| row::<usize, 2>(lines.next())).collect::<Result<Vec<_>>>()?;
        Self::new(vertices, triangles, boundary)
    }

    pub fn write_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Vertex list of the Z-shaped benchmark polygon, counterclockwise from the reentrant corner.
///
/// The square `[-1/4, 1/4]^2` minus the triangle `(0,0), (1/4,0), (1/4,-1/4)`.
/// The interior angle at the origin is `7*pi/4` and the diameter is `sqrt(2)/2`.
pub const Z_SHAPE_CORNERS: [Point; 6] = [[0.0, 0.0], [0.25, 0.0], [0.25, 0.25], [-0.25, 0.25], [-0.25, -0.25], [0.25, -0.25]];

/// Initial Z-shape triangulation with 14 triangles and 10 boundary segments.
///
/// The three quarter squares each get a center vertex and four triangles; the
/// remaining triangle `(0,0), (0,-1/4), (1/4,-1/4)` is halved through the
/// midpoint of its hypotenuse on the boundary.
pub fn create_z_shape_initial() -> VolumeMesh {
    let vertices = vec![
        [0.0, 0.0],       // 0 reentrant corner
        [0.25, 0.0],      // 1
        [0.25, 0.25],     // 2
        [0.0, 0.25],      // 3
        [-0.25, 0.25],    // 4
        [-0.25, 0.0],     // 5
        [-0.25, -0.25],   // 6
        [0.0, -0.25],     // 7
        [0.25, -0.25],    // 8
        [0.125, -0.125],  // 9
        [0.125, 0.125],   // 10 center of the upper right square
        [-0.125, 0.125],  // 11 center of the upper left square
        [-0.125, -0.125], // 12 center of the lower left square
    ];
    let triangles = vec![
        [0, 1, 10],
        [1, 2, 10],
        [2, 3, 10],
        [3, 0, 10],
        [0, 3, 11],
        [3, 4, 11],
        [4, 5, 11],
        [5, 0, 11],
        [0, 5, 12],
        [5, 6, 12],
        [6, 7, 12],
        [7, 0, 12],
        [7, 8, 9],
        [7, 9, 0],
    ];
    let boundary = (0..10).map(|k| [k, (k + 1) % 10]).collect();
    VolumeMesh::with_longest_edge_refinement(vertices, triangles, boundary).expect("Z-shape mesh is valid")
}

/// One straight boundary segment.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
    /// Vertex indices of the endpoints in the volume mesh.
    pub vertices: [usize; 2],
    pub length: f64,
    pub tangent: Point,
    /// Outward unit normal.
    pub normal: Point,
    /// Arclength of `a` measured from the start of segment 0.
    pub arclength_start: f64,
    /// Triangle owning this segment.
    pub triangle: usize,
}

impl Segment {
    /// Point at local parameter `t` in `[0, 1]`.
    pub fn point(&self, t: f64) -> Point {
        [self.a[0] + t * (self.b[0] - self.a[0]), self.a[1] + t * (self.b[1] - self.a[1])]
    }
}

/// Boundary mesh induced by a volume mesh, ordered counterclockwise.
#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    pub segments: Vec<Segment>,
}

impl BoundaryMesh {
    pub fn from_volume(mesh: &VolumeMesh) -> Self {
        let topo = mesh.topology();
        let mut s0 = 0.0;
        let segments = mesh
            .boundary()
            .iter()
            .enumerate()
            .map(|(k, &[i, j])| {
                let (a, b) = (mesh.vertices()[i], mesh.vertices()[j]);
                let length = dist(a, b);
                let tangent = [(b[0] - a[0]) / length, (b[1] - a[1]) / length];
                let seg = Segment {
                    a,
                    b,
                    vertices: [i, j],
                    length,
                    tangent,
                    normal: [tangent[1], -tangent[0]],
                    arclength_start: s0,
                    triangle: topo.edge_tris[topo.segment_edges[k]][0].expect("boundary edge owner"),
                };
                s0 += length;
                seg
            })
            .collect();
        Self { segments }
    }

    /// Builds a standalone boundary mesh from a closed counterclockwise polygon.
    pub fn from_polygon(points: &[Point]) -> Self {
        let n = points.len();
        let mut s0 = 0.0;
        let segments = (0..n)
            .map(|k| {
                let (a, b) = (points[k], points[(k + 1) % n]);
                let length = dist(a, b);
                let tangent = [(b[0] - a[0]) / length, (b[1] - a[1]) / length];
                let seg = Segment {
                    a,
                    b,
                    vertices: [k, (k + 1) % n],
                    length,
                    tangent,
                    normal: [tangent[1], -tangent[0]],
                    arclength_start: s0,
                    triangle: usize::MAX,
                };
                s0 += length;
                seg
            })
            .collect();
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Local mesh size `h|_E = |E|`.
    pub fn mesh_size(&self, k: usize) -> f64 {
        self.segments[k].length
    }
}
