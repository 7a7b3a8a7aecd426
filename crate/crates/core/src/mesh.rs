//! Conforming triangle meshes with face topology and newest-vertex
//! bisection.
//!
//! Triangles are stored counter-clockwise as `[newest, a, b]`: the first
//! vertex is the newest vertex and `(a, b)` is the refinement edge. Local
//! edge `e` is the edge opposite local vertex `e`.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

pub type Point = [f64; 2];

/// Test domains for the structured initial meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    /// `[0,1]^2` cut along `[0.5, 1] x {0.5}`.
    Slit,
    /// `[-1,1]^2 \ [0,1] x [-1,0]`.
    LShape,
    /// `[0,1]^2`.
    UnitSquare,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Slit => "slit",
            Domain::LShape => "lshape",
            Domain::UnitSquare => "unit-square",
        }
    }

    /// Initial mesh size used by the reference experiments.
    pub fn default_h0(self) -> f64 {
        match self {
            Domain::Slit => std::f64::consts::SQRT_2 / 32.0,
            Domain::LShape => std::f64::consts::SQRT_2 / 16.0,
            Domain::UnitSquare => std::f64::consts::SQRT_2 / 8.0,
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "slit" => Ok(Domain::Slit),
            "lshape" | "l-shape" => Ok(Domain::LShape),
            "unit-square" | "square" => Ok(Domain::UnitSquare),
            other => Err(Error::Config(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Interior,
    Boundary,
}

/// A mesh edge. For interior faces the normal points from `minus` to
/// `plus`; for boundary faces it points out of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Endpoint vertex indices, ascending.
    pub vertices: [usize; 2],
    pub kind: FaceKind,
    /// `kappa_-`, or the only adjacent triangle on the boundary.
    pub minus: usize,
    pub plus: Option<usize>,
    /// Local edge index of this face in `minus` and `plus`.
    pub minus_local: usize,
    pub plus_local: Option<usize>,
    pub normal: [f64; 2],
    pub length: f64,
}

impl Face {
    pub fn is_interior(&self) -> bool {
        self.kind == FaceKind::Interior
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    faces: Vec<Face>,
    triangle_faces: Vec<[usize; 3]>,
    generation: Vec<u32>,
    parent: Vec<Option<usize>>,
}

impl Mesh {
    /// Builds a mesh from counter-clockwise triangles. The first vertex of
    /// each triangle is taken as its newest vertex.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = triangles.len();
        Self::with_history(vertices, triangles, vec![0; n], vec![None; n])
    }

    fn with_history(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        generation: Vec<u32>,
        parent: Vec<Option<usize>>,
    ) -> Result<Self> {
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::Config(format!("triangle {t} references a missing vertex")));
            }
            if signed_area(&vertices, tri) <= 0.0 {
                return Err(Error::Config(format!(
                    "triangle {t} is not counter-clockwise or is degenerate"
                )));
            }
        }
        let (faces, triangle_faces) = build_faces(&vertices, &triangles)?;
        Ok(Mesh {
            vertices,
            triangles,
            faces,
            triangle_faces,
            generation,
            parent,
        })
    }

    /// Structured mesh of congruent right triangles with diameter `h0`.
    pub fn make_uniform(domain: Domain, h0: f64) -> Result<Self> {
        let sizing = Error::MeshSizing {
            domain: domain.name(),
            h0,
        };
        if !(h0.is_finite() && h0 > 0.0) {
            return Err(sizing);
        }
        let cell = h0 / std::f64::consts::SQRT_2;
        let (origin, extent) = match domain {
            Domain::Slit | Domain::UnitSquare => ([0.0, 0.0], 1.0),
            Domain::LShape => ([-1.0, -1.0], 2.0),
        };
        // the slit and the re-entrant corner sit at half the extent
        let half = (0.5 * extent / cell).round();
        if half < 1.0 && domain != Domain::UnitSquare {
            return Err(sizing);
        }
        let cells = (extent / cell).round();
        let exact = |count: f64, length: f64| (count * cell - length).abs() < 1e-9 * length;
        if cells < 1.0 || !exact(cells, extent) {
            return Err(sizing);
        }
        if domain != Domain::UnitSquare && !exact(half, 0.5 * extent) {
            return Err(sizing);
        }
        let cells = cells as usize;
        let half = half as usize;

        let keep_cell = |i: usize, j: usize| match domain {
            Domain::LShape => !(i >= half && j < half),
            _ => true,
        };
        let mut index = vec![usize::MAX; (cells + 1) * (cells + 1)];
        let mut vertices = Vec::new();
        let mut vertex_of = |i: usize, j: usize, vertices: &mut Vec<Point>| {
            let k = j * (cells + 1) + i;
            if index[k] == usize::MAX {
                index[k] = vertices.len();
                vertices.push([origin[0] + i as f64 * cell, origin[1] + j as f64 * cell]);
            }
            index[k]
        };
        let mut triangles = Vec::with_capacity(2 * cells * cells);
        for j in 0..cells {
            for i in 0..cells {
                if !keep_cell(i, j) {
                    continue;
                }
                let p00 = vertex_of(i, j, &mut vertices);
                let p10 = vertex_of(i + 1, j, &mut vertices);
                let p01 = vertex_of(i, j + 1, &mut vertices);
                let p11 = vertex_of(i + 1, j + 1, &mut vertices);
                triangles.push([p10, p11, p00]);
                triangles.push([p01, p00, p11]);
            }
        }

        if domain == Domain::Slit {
            // cells directly above the slit get their own copies of the
            // vertices on (0.5, 1] x {0.5}
            let mut copies: HashMap<usize, usize> = HashMap::new();
            for j in (half..half + 1).filter(|&j| j < cells) {
                for i in half..cells {
                    let base = 2 * (j * cells + i);
                    for tri in &mut triangles[base..base + 2] {
                        for v in tri.iter_mut() {
                            let [x, y] = vertices[*v];
                            let on_slit = (y - 0.5).abs() < 1e-12 && x > 0.5 + 1e-12;
                            if on_slit {
                                *v = *copies.entry(*v).or_insert_with(|| {
                                    vertices.push([x, y]);
                                    vertices.len() - 1
                                });
                            }
                        }
                    }
                }
            }
        }
        Mesh::new(vertices, triangles)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Face indices of triangle `t`, ordered by local edge.
    pub fn triangle_faces(&self, t: usize) -> [usize; 3] {
        self.triangle_faces[t]
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    /// Index of the triangle in the previous mesh this one descends from.
    pub fn parent(&self, t: usize) -> Option<usize> {
        self.parent[t]
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Diameter `h_kappa` (longest edge).
    pub fn diameter(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.corners(t);
        dist(p0, p1).max(dist(p1, p2)).max(dist(p2, p0))
    }

    pub fn max_diameter(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.diameter(t)).fold(0.0, f64::max)
    }

    /// Smallest interior angle of triangle `t`, in radians.
    pub fn min_angle(&self, t: usize) -> f64 {
        let p = self.corners(t);
        (0..3)
            .map(|i| {
                let a = p[i];
                let u = sub(p[(i + 1) % 3], a);
                let v = sub(p[(i + 2) % 3], a);
                let c = (u[0] * v[0] + u[1] * v[1]) / (norm(u) * norm(v));
                c.clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn global_min_angle(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.min_angle(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.corners(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    /// Gauss points and weights on a face; the weights sum to its length.
    pub fn face_quadrature_points(&self, face: &Face, order: usize) -> Vec<(Point, f64)> {
        segment_quadrature(self.vertices[face.vertices[0]], self.vertices[face.vertices[1]], order)
    }

    /// Newest-vertex bisection of every marked triangle plus the closure
    /// bisections needed to keep the mesh conforming.
    pub fn refine(&self, marked: &[usize]) -> Mesh {
        let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
        let mut marked_edges: HashSet<(usize, usize)> = marked
            .iter()
            .map(|&t| {
                let [_, a, b] = self.triangles[t];
                key(a, b)
            })
            .collect();
        if marked_edges.is_empty() {
            let mut same = self.clone();
            same.parent = (0..self.num_triangles()).map(Some).collect();
            return same;
        }

        // closure: a triangle with any marked edge must have its
        // refinement edge marked too
        loop {
            let mut changed = false;
            for &[v0, v1, v2] in &self.triangles {
                let refinement = key(v1, v2);
                if marked_edges.contains(&refinement) {
                    continue;
                }
                if marked_edges.contains(&key(v0, v1)) || marked_edges.contains(&key(v2, v0)) {
                    marked_edges.insert(refinement);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut vertices = self.vertices.clone();
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut triangles = Vec::with_capacity(self.num_triangles() + 2 * marked_edges.len());
        let mut generation = Vec::with_capacity(triangles.capacity());
        let mut parent = Vec::with_capacity(triangles.capacity());
        let mut stack = Vec::new();
        for (t, &tri) in self.triangles.iter().enumerate() {
            stack.push((tri, self.generation[t]));
            while let Some(([v0, v1, v2], g)) = stack.pop() {
                let e = key(v1, v2);
                if !marked_edges.contains(&e) {
                    triangles.push([v0, v1, v2]);
                    generation.push(g);
                    parent.push(Some(t));
                    continue;
                }
                let p = *midpoints.entry(e).or_insert_with(|| {
                    let (a, b) = (vertices[v1], vertices[v2]);
                    vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                    vertices.len() - 1
                });
                // children inherit marks on (v0, v1) and (v2, v0) only
                stack.push(([p, v2, v0], g + 1));
                stack.push(([p, v0, v1], g + 1));
            }
        }
        Mesh::with_history(vertices, triangles, generation, parent).expect("bisection preserves orientation")
    }

    /// Bisects every triangle twice, halving the mesh size.
    pub fn refine_uniform(&self) -> Mesh {
        let once = self.refine(&(0..self.num_triangles()).collect::<Vec<_>>());
        let mut twice = once.refine(&(0..once.num_triangles()).collect::<Vec<_>>());
        // report ancestry against self, not the intermediate mesh
        for p in &mut twice.parent {
            *p = p.and_then(|q| once.parent[q]);
        }
        twice
    }

    /// Writes `nv nt`, then `x y` per vertex, then `i j k` per triangle.
    pub fn write_text(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.num_vertices(), self.num_triangles())?;
        for [x, y] in &self.vertices {
            writeln!(out, "{x:.17e} {y:.17e}")?;
        }
        for [i, j, k] in &self.triangles {
            writeln!(out, "{i} {j} {k}")?;
        }
        Ok(())
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_text(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Parses the text format written by [`Mesh::write_text`].
    pub fn read_text(text: &str) -> Result<Mesh> {
        let bad = |what: &str| Error::Config(format!("malformed mesh file: {what}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        let (nv, nt) = match (it.next(), it.next()) {
            (Some(Ok(nv)), Some(Ok(nt))) => (nv, nt),
            _ => return Err(bad("header")),
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("missing vertex"))?;
            let v: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("vertex"))?;
            if v.len() != 2 {
                return Err(bad("vertex"));
            }
            vertices.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("missing triangle"))?;
            let t: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("triangle"))?;
            if t.len() != 3 {
                return Err(bad("triangle"));
            }
            triangles.push([t[0], t[1], t[2]]);
        }
        Mesh::new(vertices, triangles)
    }
}

/// Gauss–Legendre points on the segment `a`–`b`.
pub fn segment_quadrature(a: Point, b: Point, order: usize) -> Vec<(Point, f64)> {
    let len = dist(a, b);
    let (nodes, weights) = gauss_legendre(order.max(1));
    nodes
        .iter()
        .zip(&weights)
        .map(|(s, w)| ([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])], w * len))
        .collect()
}

fn build_faces(vertices: &[Point], triangles: &[[usize; 3]]) -> Result<(Vec<Face>, Vec<[usize; 3]>)> {
    let mut faces: Vec<Face> = Vec::with_capacity(3 * triangles.len() / 2 + 1);
    let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.capacity());
    let mut triangle_faces = vec![[usize::MAX; 3]; triangles.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            let a = tri[(e + 1) % 3];
            let b = tri[(e + 2) % 3];
            let k = if a < b { (a, b) } else { (b, a) };
            match lookup.get(&k) {
                Some(&f) => {
                    let face = &mut faces[f];
                    if face.plus.is_some() {
                        return Err(Error::Config(format!(
                            "edge ({}, {}) is shared by more than two triangles",
                            k.0, k.1
                        )));
                    }
                    face.plus = Some(t);
                    face.plus_local = Some(e);
                    face.kind = FaceKind::Interior;
                    triangle_faces[t][e] = f;
                }
                None => {
                    let d = sub(vertices[b], vertices[a]);
                    let length = norm(d);
                    lookup.insert(k, faces.len());
                    triangle_faces[t][e] = faces.len();
                    faces.push(Face {
                        vertices: [k.0, k.1],
                        kind: FaceKind::Boundary,
                        minus: t,
                        plus: None,
                        minus_local: e,
                        plus_local: None,
                        // outward for a counter-clockwise edge a -> b
                        normal: [d[1] / length, -d[0] / length],
                        length,
                    });
                }
            }
        }
    }
    Ok((faces, triangle_faces))
}

fn signed_area(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

fn dist(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}
