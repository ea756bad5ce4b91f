//! Triangle meshes: uniform rectangle grids for the macroscopic domain and
//! perforated unit-cell meshes for the periodic micro domain.
//!
//! Cell meshes start from a uniform criss-cross grid of the unit square;
//! triangles whose barycenter falls inside a hole are removed, and the exposed
//! staircase vertices are then projected onto the analytic hole boundary when
//! that projection is short (within half a grid diameter) and does not squash
//! any incident triangle below a 10 degree minimum angle. Periodicity is
//! recorded as a master-slave vertex pairing: right pairs onto left, top onto
//! bottom, and all four corners collapse onto the origin.

use crate::{Error, Result};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Minimum angle (radians) a snapped triangle may be left with.
const MIN_SNAP_ANGLE: f64 = 10.0 * std::f64::consts::PI / 180.0;

/// Tolerance for matching periodic partner coordinates.
const PERIODIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryMarker {
    OuterLeft,
    OuterRight,
    OuterBottom,
    OuterTop,
    Hole,
}

impl BoundaryMarker {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMarker::OuterLeft => "OUTER_LEFT",
            BoundaryMarker::OuterRight => "OUTER_RIGHT",
            BoundaryMarker::OuterBottom => "OUTER_BOTTOM",
            BoundaryMarker::OuterTop => "OUTER_TOP",
            BoundaryMarker::Hole => "HOLE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "OUTER_LEFT" => BoundaryMarker::OuterLeft,
            "OUTER_RIGHT" => BoundaryMarker::OuterRight,
            "OUTER_BOTTOM" => BoundaryMarker::OuterBottom,
            "OUTER_TOP" => BoundaryMarker::OuterTop,
            "HOLE" => BoundaryMarker::Hole,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub marker: BoundaryMarker,
}

/// Axis-aligned hole cut out of the unit cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoleSpec {
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    Rectangle { min: [f64; 2], max: [f64; 2] },
}

impl HoleSpec {
    /// Whether `p` lies in the closed hole region.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            HoleSpec::Ellipse { center, semi_axes } => {
                let u = (p[0] - center[0]) / semi_axes[0];
                let v = (p[1] - center[1]) / semi_axes[1];
                u * u + v * v <= 1.0
            }
            HoleSpec::Rectangle { min, max } => {
                p[0] >= min[0] && p[0] <= max[0] && p[1] >= min[1] && p[1] <= max[1]
            }
        }
    }

    /// Closest point of the hole boundary to `p`.
    pub fn nearest_boundary_point(&self, p: [f64; 2]) -> [f64; 2] {
        match *self {
            HoleSpec::Ellipse { center, semi_axes } => {
                let q = |t: f64| {
                    [center[0] + semi_axes[0] * t.cos(), center[1] + semi_axes[1] * t.sin()]
                };
                let d2 = |t: f64| {
                    let qt = q(t);
                    let dx = qt[0] - p[0];
                    let dy = qt[1] - p[1];
                    dx * dx + dy * dy
                };
                // coarse scan, then ternary refinement around the best sample
                let samples = 512;
                let mut best_t = 0.0;
                let mut best = f64::INFINITY;
                for k in 0..samples {
                    let t = 2.0 * std::f64::consts::PI * (k as f64) / (samples as f64);
                    let d = d2(t);
                    if d < best {
                        best = d;
                        best_t = t;
                    }
                }
                let step = 2.0 * std::f64::consts::PI / samples as f64;
                let mut lo = best_t - step;
                let mut hi = best_t + step;
                for _ in 0..80 {
                    let m1 = lo + (hi - lo) / 3.0;
                    let m2 = hi - (hi - lo) / 3.0;
                    if d2(m1) <= d2(m2) {
                        hi = m2;
                    } else {
                        lo = m1;
                    }
                }
                q(0.5 * (lo + hi))
            }
            HoleSpec::Rectangle { min, max } => {
                let inside = self.contains(p);
                if !inside {
                    [p[0].clamp(min[0], max[0]), p[1].clamp(min[1], max[1])]
                } else {
                    // push to the nearest face
                    let cands = [
                        (p[0] - min[0], [min[0], p[1]]),
                        (max[0] - p[0], [max[0], p[1]]),
                        (p[1] - min[1], [p[0], min[1]]),
                        (max[1] - p[1], [p[0], max[1]]),
                    ];
                    let mut best = cands[0];
                    for c in &cands[1..] {
                        if c.0 < best.0 {
                            best = *c;
                        }
                    }
                    best.1
                }
            }
        }
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            HoleSpec::Ellipse { center, semi_axes } => (
                [center[0] - semi_axes[0], center[1] - semi_axes[1]],
                [center[0] + semi_axes[0], center[1] + semi_axes[1]],
            ),
            HoleSpec::Rectangle { min, max } => (min, max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            HoleSpec::Ellipse { semi_axes, .. } => {
                if !(semi_axes[0] > 0.0 && semi_axes[1] > 0.0) {
                    return Err(Error::InvalidGeometry(format!(
                        "ellipse semi-axes must be positive, got {semi_axes:?}"
                    )));
                }
            }
            HoleSpec::Rectangle { min, max } => {
                if !(min[0] < max[0] && min[1] < max[1]) {
                    return Err(Error::InvalidGeometry(format!(
                        "degenerate hole rectangle {min:?}..{max:?}"
                    )));
                }
            }
        }
        let (lo, hi) = self.bbox();
        if !(lo[0] > 0.0 && lo[1] > 0.0 && hi[0] < 1.0 && hi[1] < 1.0) {
            return Err(Error::InvalidGeometry(format!(
                "hole closure {lo:?}..{hi:?} must stay strictly inside the open unit square"
            )));
        }
        Ok(())
    }
}

/// One periodic identification: `slave` carries the same degree of freedom as
/// `master`, whose position is `slave position + shift`.
#[derive(Debug, Clone, Copy)]
pub struct PeriodicPair {
    pub slave: usize,
    pub master: usize,
    pub shift: [f64; 2],
}

#[derive(Debug, Clone, Default)]
pub struct PeriodicMap {
    pub pairs: Vec<PeriodicPair>,
}

impl PeriodicMap {
    /// vertex -> representative vertex (identity for masters and interior).
    pub fn vertex_map(&self, n_vertices: usize) -> Vec<usize> {
        let mut map: Vec<usize> = (0..n_vertices).collect();
        for p in &self.pairs {
            map[p.slave] = p.master;
        }
        map
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let mut is_slave = vec![false; mesh.n_vertices()];
        for p in &self.pairs {
            is_slave[p.slave] = true;
        }
        for p in &self.pairs {
            if is_slave[p.master] {
                return Err(Error::InvalidGeometry(format!(
                    "periodic master {} is itself a slave",
                    p.master
                )));
            }
            let s = mesh.vertices[p.slave];
            let m = mesh.vertices[p.master];
            let dx = (s[0] + p.shift[0] - m[0]).abs();
            let dy = (s[1] + p.shift[1] - m[1]).abs();
            if dx > PERIODIC_TOL || dy > PERIODIC_TOL {
                return Err(Error::InvalidGeometry(format!(
                    "periodic pair {}->{} mismatched by ({dx:.2e}, {dy:.2e})",
                    p.slave, p.master
                )));
            }
        }
        Ok(())
    }
}

/// Uniform-grid payload enabling O(1) point location on rectangle meshes.
#[derive(Debug, Clone, Copy)]
struct RectGrid {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    nx: usize,
    ny: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    h_max: f64,
    grid: Option<RectGrid>,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Longest edge over all triangles.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        triangle_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Total area of the triangulated region.
    pub fn measure(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Evaluates a P1 nodal field at an arbitrary point. Points outside the
    /// mesh are clamped onto it (rectangle meshes) or matched to the nearest
    /// containing triangle within a small slack (general meshes).
    pub fn eval_p1(&self, nodal: &[f64], p: [f64; 2]) -> f64 {
        assert_eq!(nodal.len(), self.n_vertices(), "nodal field length mismatch");
        let (t, lambda) = self.locate(p);
        let [a, b, c] = self.triangles[t];
        lambda[0] * nodal[a] + lambda[1] * nodal[b] + lambda[2] * nodal[c]
    }

    /// Triangle index and barycentric coordinates of the triangle containing
    /// (or, off the mesh, closest to) a point. O(1) on rectangle meshes.
    pub fn locate(&self, p: [f64; 2]) -> (usize, [f64; 3]) {
        if let Some(g) = self.grid {
            let fx = ((p[0] - g.x0) / g.dx).clamp(0.0, g.nx as f64);
            let fy = ((p[1] - g.y0) / g.dy).clamp(0.0, g.ny as f64);
            let i = (fx.floor() as usize).min(g.nx - 1);
            let j = (fy.floor() as usize).min(g.ny - 1);
            let u = fx - i as f64;
            let v = fy - j as f64;
            // cell split along the (i,j) -> (i+1,j+1) diagonal
            let t = 2 * (j * g.nx + i) + if u >= v { 0 } else { 1 };
            return (t, self.barycentric(t, p));
        }
        // general meshes: linear scan for the best triangle
        let mut best = (0usize, [0.0; 3], f64::NEG_INFINITY);
        for t in 0..self.triangles.len() {
            let l = self.barycentric(t, p);
            let min_l = l[0].min(l[1]).min(l[2]);
            if min_l > best.2 {
                best = (t, l, min_l);
                if min_l >= 0.0 {
                    break;
                }
            }
        }
        (best.0, best.1)
    }

    /// Barycentric coordinates of a point with respect to a triangle.
    pub fn barycentric(&self, t: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[t];
        let pa = self.vertices[a];
        let pb = self.vertices[b];
        let pc = self.vertices[c];
        let area = triangle_area(pa, pb, pc);
        let l0 = triangle_area(p, pb, pc) / area;
        let l1 = triangle_area(pa, p, pc) / area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Structural checks: positive areas, consistent edge incidence, each
    /// boundary edge on exactly one triangle, hole loops closed.
    pub fn validate(&self) -> Result<()> {
        let nv = self.n_vertices();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if v >= nv {
                    return Err(Error::InvalidGeometry(format!(
                        "triangle {t} references vertex {v} out of range"
                    )));
                }
            }
            if self.triangle_area(t) <= 0.0 {
                return Err(Error::InvalidGeometry(format!(
                    "triangle {t} has non-positive area (wrong orientation or degenerate)"
                )));
            }
        }
        let mut edge_count: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        for (&(a, b), &cnt) in &edge_count {
            if cnt > 2 {
                return Err(Error::InvalidGeometry(format!(
                    "edge ({a}, {b}) shared by {cnt} triangles"
                )));
            }
        }
        let mut boundary_set: BTreeMap<(usize, usize), BoundaryMarker> = BTreeMap::new();
        for e in &self.boundary_edges {
            let key = (e.vertices[0].min(e.vertices[1]), e.vertices[0].max(e.vertices[1]));
            if boundary_set.insert(key, e.marker).is_some() {
                return Err(Error::InvalidGeometry(format!("duplicate boundary edge {key:?}")));
            }
        }
        for (&key, &cnt) in &edge_count {
            let on_boundary = boundary_set.contains_key(&key);
            if (cnt == 1) != on_boundary {
                return Err(Error::InvalidGeometry(format!(
                    "edge {key:?} incidence {cnt} inconsistent with boundary list"
                )));
            }
        }
        // hole boundaries must close up: every touched vertex has exactly two
        // incident hole edges
        let mut hole_deg: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &self.boundary_edges {
            if e.marker == BoundaryMarker::Hole {
                *hole_deg.entry(e.vertices[0]).or_insert(0) += 1;
                *hole_deg.entry(e.vertices[1]).or_insert(0) += 1;
            }
        }
        for (&v, &d) in &hole_deg {
            if d != 2 {
                return Err(Error::InvalidGeometry(format!(
                    "hole boundary pinched at vertex {v} (degree {d})"
                )));
            }
        }
        let h = self.compute_h_max();
        if (h - self.h_max).abs() > 1e-12 * (1.0 + h) {
            return Err(Error::InvalidGeometry(format!(
                "stored h_max {} disagrees with recomputed {h}",
                self.h_max
            )));
        }
        Ok(())
    }

    fn compute_h_max(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let a = self.vertices[tri[k]];
                let b = self.vertices[tri[(k + 1) % 3]];
                h = h.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        h
    }

    /// Plain-text serialization (counts header, then `v`/`t`/`e` lines,
    /// 0-based indices, coordinates with 17 significant digits).
    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "mesh2d {} {} {}",
            self.n_vertices(),
            self.n_triangles(),
            self.boundary_edges.len()
        );
        for v in &self.vertices {
            let _ = writeln!(s, "v {:.17e} {:.17e}", v[0], v[1]);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "t {} {} {}", t[0], t[1], t[2]);
        }
        for e in &self.boundary_edges {
            let _ = writeln!(s, "e {} {} {}", e.vertices[0], e.vertices[1], e.marker.as_str());
        }
        s
    }

    pub fn write_ascii(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }

    pub fn from_ascii(text: &str) -> Result<Mesh> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("empty mesh file".into()))?;
        let mut hp = header.split_whitespace();
        if hp.next() != Some("mesh2d") {
            return Err(Error::Format("mesh file must start with 'mesh2d'".into()));
        }
        let counts: Vec<usize> = hp
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::Format(format!("bad count '{t}' in mesh header")))
            })
            .collect::<Result<_>>()?;
        let [nv, nt, ne]: [usize; 3] = counts
            .try_into()
            .map_err(|_| Error::Format("mesh header needs exactly three counts".into()))?;

        let mut vertices = Vec::with_capacity(nv);
        let mut triangles = Vec::with_capacity(nt);
        let mut boundary_edges = Vec::with_capacity(ne);
        for (lineno, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let kind = tok.next().unwrap();
            let rest: Vec<&str> = tok.collect();
            let parse_f = |t: &str| {
                t.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::Format(format!("line {}: bad number '{t}'", lineno + 1)))
            };
            let parse_i = |t: &str| {
                t.parse::<usize>()
                    .map_err(|_| Error::Format(format!("line {}: bad index '{t}'", lineno + 1)))
            };
            match kind {
                "v" if rest.len() == 2 => {
                    vertices.push([parse_f(rest[0])?, parse_f(rest[1])?]);
                }
                "t" if rest.len() == 3 => {
                    triangles.push([parse_i(rest[0])?, parse_i(rest[1])?, parse_i(rest[2])?]);
                }
                "e" if rest.len() == 3 => {
                    let marker = BoundaryMarker::parse(rest[2]).ok_or_else(|| {
                        Error::Format(format!("line {}: unknown marker '{}'", lineno + 1, rest[2]))
                    })?;
                    boundary_edges.push(BoundaryEdge {
                        vertices: [parse_i(rest[0])?, parse_i(rest[1])?],
                        marker,
                    });
                }
                _ => {
                    return Err(Error::Format(format!(
                        "line {}: unrecognized record '{line}'",
                        lineno + 1
                    )))
                }
            }
        }
        if vertices.len() != nv || triangles.len() != nt || boundary_edges.len() != ne {
            return Err(Error::Format(format!(
                "mesh record counts ({}, {}, {}) disagree with header ({nv}, {nt}, {ne})",
                vertices.len(),
                triangles.len(),
                boundary_edges.len()
            )));
        }
        let mut mesh = Mesh { vertices, triangles, boundary_edges, h_max: 0.0, grid: None };
        mesh.h_max = mesh.compute_h_max();
        mesh.validate()?;
        Ok(mesh)
    }
}

pub fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn min_angle(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let angle_at = |p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        let u = [q[0] - p[0], q[1] - p[1]];
        let v = [r[0] - p[0], r[1] - p[1]];
        let dot = u[0] * v[0] + u[1] * v[1];
        let nu = (u[0] * u[0] + u[1] * u[1]).sqrt();
        let nv = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if nu == 0.0 || nv == 0.0 {
            return 0.0;
        }
        (dot / (nu * nv)).clamp(-1.0, 1.0).acos()
    };
    angle_at(a, b, c).min(angle_at(b, c, a)).min(angle_at(c, a, b))
}

/// Uniform criss-cross triangulation of `[x0, x1] x [y0, y1]` with `nx` by
/// `ny` cells, two triangles per cell.
pub fn build_rect_mesh(x: [f64; 2], y: [f64; 2], nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidInput(format!("mesh resolution {nx}x{ny} must be positive")));
    }
    if !(x[1] > x[0] && y[1] > y[0]) {
        return Err(Error::InvalidInput(format!("empty extent {x:?} x {y:?}")));
    }
    let coord = |lo: f64, hi: f64, i: usize, n: usize| lo + (hi - lo) * (i as f64 / n as f64);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([coord(x[0], x[1], i, nx), coord(y[0], y[1], j, ny)]);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            // diagonal from (i, j) to (i+1, j+1)
            triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, 0), vid(i + 1, 0)],
            marker: BoundaryMarker::OuterBottom,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(i, ny), vid(i + 1, ny)],
            marker: BoundaryMarker::OuterTop,
        });
    }
    for j in 0..ny {
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(0, j), vid(0, j + 1)],
            marker: BoundaryMarker::OuterLeft,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [vid(nx, j), vid(nx, j + 1)],
            marker: BoundaryMarker::OuterRight,
        });
    }
    let dx = (x[1] - x[0]) / nx as f64;
    let dy = (y[1] - y[0]) / ny as f64;
    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        h_max: (dx * dx + dy * dy).sqrt(),
        grid: Some(RectGrid { x0: x[0], y0: y[0], dx, dy, nx, ny }),
    })
}

/// Perforated periodic unit cell: unit-square grid at resolution `n`, holes
/// removed by the barycenter rule, staircase snapped to the analytic hole
/// boundaries, and the periodic master-slave vertex pairing.
pub fn build_cell_mesh(holes: &[HoleSpec], n: usize) -> Result<(Mesh, PeriodicMap)> {
    for h in holes {
        h.validate()?;
    }
    let full = build_rect_mesh([0.0, 1.0], [0.0, 1.0], n, n)?;
    let h_grid = full.h_max();

    let on_outer = |p: [f64; 2]| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0;

    let mut keep = vec![true; full.n_triangles()];
    for (t, tri) in full.triangles.iter().enumerate() {
        let [a, b, c] = *tri;
        let pa = full.vertices[a];
        let pb = full.vertices[b];
        let pc = full.vertices[c];
        let bary = [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0];
        if holes.iter().any(|h| h.contains(bary)) {
            keep[t] = false;
            for &v in tri {
                if on_outer(full.vertices[v]) {
                    return Err(Error::InvalidGeometry(format!(
                        "hole reaches the outer boundary at resolution n = {n}; \
                         refine until a full layer of cells separates holes from the rim"
                    )));
                }
            }
        }
    }

    // compact vertex numbering over kept triangles
    let mut new_id = vec![usize::MAX; full.n_vertices()];
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (t, tri) in full.triangles.iter().enumerate() {
        if !keep[t] {
            continue;
        }
        let mut mapped = [0usize; 3];
        for (k, &v) in tri.iter().enumerate() {
            if new_id[v] == usize::MAX {
                new_id[v] = vertices.len();
                vertices.push(full.vertices[v]);
            }
            mapped[k] = new_id[v];
        }
        triangles.push(mapped);
    }
    if triangles.is_empty() {
        return Err(Error::InvalidGeometry("holes removed the entire cell".into()));
    }

    // fluid region must stay connected (mesh adjacency, not periodic wrap)
    let mut edge_tris: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tri) in triangles.iter().enumerate() {
        for k in 0..3 {
            let a = tri[k];
            let b = tri[(k + 1) % 3];
            edge_tris.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    {
        let mut seen = vec![false; triangles.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(t) = stack.pop() {
            let tri = triangles[t];
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                for &t2 in &edge_tris[&(a.min(b), a.max(b))] {
                    if !seen[t2] {
                        seen[t2] = true;
                        count += 1;
                        stack.push(t2);
                    }
                }
            }
        }
        if count != triangles.len() {
            return Err(Error::InvalidGeometry(format!(
                "fluid region is disconnected ({count} of {} triangles reachable)",
                triangles.len()
            )));
        }
    }

    // boundary edges of the perforated mesh
    let mut boundary_edges = Vec::new();
    for (&(a, b), tris) in &edge_tris {
        if tris.len() != 1 {
            continue;
        }
        let pa = vertices[a];
        let pb = vertices[b];
        let marker = if pa[0] == 0.0 && pb[0] == 0.0 {
            BoundaryMarker::OuterLeft
        } else if pa[0] == 1.0 && pb[0] == 1.0 {
            BoundaryMarker::OuterRight
        } else if pa[1] == 0.0 && pb[1] == 0.0 {
            BoundaryMarker::OuterBottom
        } else if pa[1] == 1.0 && pb[1] == 1.0 {
            BoundaryMarker::OuterTop
        } else {
            BoundaryMarker::Hole
        };
        boundary_edges.push(BoundaryEdge { vertices: [a, b], marker });
    }

    // vertex -> incident triangles, for the snapping angle guard
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    for (t, tri) in triangles.iter().enumerate() {
        for &v in tri {
            incident[v].push(t);
        }
    }

    // Snap exposed hole vertices onto the analytic boundary. Whether a
    // projection passes the angle guard depends on where the neighbors sit,
    // so we sweep to a fixed point, committing the longest moves first: far
    // staircase corners snap while their surroundings are still fat, and the
    // vertices left behind by the guard are the nearly-converged ones whose
    // kept staircase costs almost nothing. At the end every still-unsnapped
    // vertex within reach genuinely cannot be projected without squashing a
    // triangle.
    let mut exposed: Vec<usize> = boundary_edges
        .iter()
        .filter(|e| e.marker == BoundaryMarker::Hole)
        .flat_map(|e| e.vertices)
        .collect();
    exposed.sort_unstable();
    exposed.dedup();
    let project = |p: [f64; 2]| -> ([f64; 2], f64) {
        let mut best = (p, f64::INFINITY);
        for h in holes {
            let q = h.nearest_boundary_point(p);
            let d = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
            if d < best.1 {
                best = (q, d);
            }
        }
        best
    };
    let mut pending = exposed.clone();
    for _sweep in 0..8 {
        let mut targets: Vec<(f64, usize, [f64; 2])> = Vec::new();
        for &v in &pending {
            let (q, d) = project(vertices[v]);
            if d > 1e-14 && d <= 0.5 * h_grid {
                targets.push((d, v, q));
            }
        }
        targets.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut moved = false;
        let mut still_pending = Vec::new();
        for &(_, v, q) in &targets {
            let ok = incident[v].iter().all(|&t| {
                let tri = triangles[t];
                let pos = |u: usize| if u == v { q } else { vertices[u] };
                let (a, b, c) = (pos(tri[0]), pos(tri[1]), pos(tri[2]));
                triangle_area(a, b, c) > 0.0 && min_angle(a, b, c) >= MIN_SNAP_ANGLE
            });
            if ok {
                vertices[v] = q;
                moved = true;
            } else {
                still_pending.push(v);
            }
        }
        pending = still_pending;
        if !moved || pending.is_empty() {
            break;
        }
    }

    // periodic pairing by exact grid coordinates
    let key = |p: [f64; 2]| (p[0].to_bits(), p[1].to_bits());
    let mut lookup: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    for (v, p) in vertices.iter().enumerate() {
        lookup.insert(key(*p), v);
    }
    let find = |p: [f64; 2]| -> Result<usize> {
        lookup.get(&key(p)).copied().ok_or_else(|| {
            Error::InvalidGeometry(format!("periodic partner missing at ({}, {})", p[0], p[1]))
        })
    };
    let mut pairs = Vec::new();
    for (v, p) in vertices.iter().enumerate() {
        let right = p[0] == 1.0;
        let top = p[1] == 1.0;
        if right && top {
            pairs.push(PeriodicPair { slave: v, master: find([0.0, 0.0])?, shift: [-1.0, -1.0] });
        } else if right {
            pairs.push(PeriodicPair { slave: v, master: find([0.0, p[1]])?, shift: [-1.0, 0.0] });
        } else if top {
            pairs.push(PeriodicPair { slave: v, master: find([p[0], 0.0])?, shift: [0.0, -1.0] });
        }
    }

    let mut mesh = Mesh { vertices, triangles, boundary_edges, h_max: 0.0, grid: None };
    mesh.h_max = mesh.compute_h_max();
    mesh.validate()?;
    let map = PeriodicMap { pairs };
    map.validate(&mesh)?;
    Ok((mesh, map))
}
