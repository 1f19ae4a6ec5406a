//! Conforming triangulations with newest-vertex-bisection refinement.
//!
//! Every element stores its vertices counter-clockwise together with the
//! local index of its newest vertex. Local edge `i` is the edge opposite
//! local vertex `i`, so the refinement edge of an element is the local edge
//! whose index equals the newest vertex.
//!
//! Refinement works on marked edges: the refinement edge of every marked
//! element is marked, and the marking is closed under the rule "an element
//! with a marked edge has its refinement edge marked". Each element is then
//! bisected recursively through marked edges only, which yields between one
//! and four children. Rebuilding a mesh never merges vertices by coordinate;
//! new vertices are keyed by the sorted endpoint ids of the edge they split.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::real::{Point, Real};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex<T> {
    pub x: T,
    pub y: T,
    pub on_boundary: bool,
}

impl<T: Real> Vertex<T> {
    pub fn point(&self) -> Point<T> {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Element {
    /// Counter-clockwise vertex ids.
    pub vertices: [usize; 3],
    /// Local index of the refinement edge, equal to the local index of the
    /// newest vertex.
    pub refinement_edge: usize,
    /// Number of bisections separating this element from its initial ancestor.
    pub generation: u32,
}

impl Element {
    /// Vertex ids of local edge `i` (the edge opposite local vertex `i`).
    pub fn edge_vertices(&self, i: usize) -> [usize; 2] {
        [self.vertices[(i + 1) % 3], self.vertices[(i + 2) % 3]]
    }

    pub fn newest_vertex(&self) -> usize {
        self.vertices[self.refinement_edge]
    }
}

/// How a refined mesh relates to the mesh it was refined from.
pub struct Lineage<T: Real> {
    parent: Arc<Mesh<T>>,
    element_parent: Vec<usize>,
    carried: Vec<bool>,
    new_vertex_parents: Vec<[usize; 2]>,
}

impl<T: Real> Lineage<T> {
    pub fn parent(&self) -> &Arc<Mesh<T>> {
        &self.parent
    }

    /// Parent element in the previous mesh for every element of this mesh.
    pub fn element_parent(&self) -> &[usize] {
        &self.element_parent
    }

    /// `true` when the element was not bisected and is geometrically
    /// identical to its parent.
    pub fn carried(&self) -> &[bool] {
        &self.carried
    }

    /// Edge endpoints (ids in the parent mesh) for every vertex created by
    /// the refinement, in creation order. Old vertices keep their ids.
    pub fn new_vertex_parents(&self) -> &[[usize; 2]] {
        &self.new_vertex_parents
    }
}

pub struct Mesh<T: Real> {
    id: u64,
    vertices: Vec<Vertex<T>>,
    elements: Vec<Element>,
    edges: Vec<[usize; 2]>,
    edge_elements: Vec<(usize, Option<usize>)>,
    element_edges: Vec<[usize; 3]>,
    edge_lookup: HashMap<(usize, usize), usize>,
    generation: u32,
    lineage: Option<Lineage<T>>,
}

impl<T: Real> fmt::Debug for Mesh<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Mesh")
            .field("id", &self.id)
            .field("vertices", &self.vertices.len())
            .field("elements", &self.elements.len())
            .field("edges", &self.edges.len())
            .field("generation", &self.generation)
            .finish()
    }
}

#[inline]
fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn signed_area<T: Real>(p: [Point<T>; 3]) -> T {
    T::lit(0.5) * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn factor_grid(cells: usize) -> (usize, usize) {
    let mut best = (cells, 1);
    let mut ny = 1;
    while ny * ny <= cells {
        if cells.is_multiple_of(ny) {
            best = (cells / ny, ny);
        }
        ny += 1;
    }
    best
}

/// Uniform mesh of the unit square with `2 n^2` right triangles.
pub fn build_initial_mesh<T: Real>(n_per_side: usize) -> Result<Mesh<T>> {
    Mesh::rectangle_grid(n_per_side, n_per_side)
}

/// Uniform mesh of the unit square with (close to square) `nx x ny` cells
/// chosen so that `2 nx ny == target_elements`.
pub fn build_initial_mesh_with_elements<T: Real>(target_elements: usize) -> Result<Mesh<T>> {
    if target_elements < 2 || !target_elements.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "target element count {target_elements} must be an even number >= 2"
        )));
    }
    let (nx, ny) = factor_grid(target_elements / 2);
    Mesh::rectangle_grid(nx, ny)
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh from raw coordinates and triangles.
    ///
    /// Clockwise triangles are reoriented. Without explicit refinement edges
    /// the longest edge (lowest local index on ties) is used.
    pub fn from_raw(
        coords: Vec<Point<T>>,
        triangles: Vec<[usize; 3]>,
        refinement_edges: Option<Vec<usize>>,
    ) -> Result<Self> {
        if let Some(r) = &refinement_edges {
            if r.len() != triangles.len() {
                return Err(Error::InvalidInput(format!(
                    "{} refinement edges for {} triangles",
                    r.len(),
                    triangles.len()
                )));
            }
        }
        for (i, c) in coords.iter().enumerate() {
            if !(c[0].is_finite() && c[1].is_finite()) {
                return Err(Error::InvalidInput(format!("vertex {i} has non-finite coordinates")));
            }
        }
        let mut elements = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= coords.len()) {
                return Err(Error::InvalidInput(format!("triangle {t} references a missing vertex")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidInput(format!("triangle {t} repeats a vertex")));
            }
            let pts = [coords[tri[0]], coords[tri[1]], coords[tri[2]]];
            let area = signed_area(pts);
            let scale = (0..3)
                .map(|i| {
                    let d = [pts[(i + 1) % 3][0] - pts[i][0], pts[(i + 1) % 3][1] - pts[i][1]];
                    d[0] * d[0] + d[1] * d[1]
                })
                .fold(T::zero(), |a, b| a.max(b));
            if area.abs() <= T::epsilon() * T::lit(16.0) * scale {
                return Err(Error::InvalidInput(format!("triangle {t} is degenerate")));
            }
            let mut r = match &refinement_edges {
                Some(r) => {
                    if r[t] > 2 {
                        return Err(Error::InvalidInput(format!(
                            "triangle {t}: refinement edge {} out of range",
                            r[t]
                        )));
                    }
                    r[t]
                }
                None => {
                    let mut best = 0;
                    let mut best_len = T::zero();
                    for i in 0..3 {
                        let a = pts[(i + 1) % 3];
                        let b = pts[(i + 2) % 3];
                        let len = (b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2);
                        if len > best_len {
                            best_len = len;
                            best = i;
                        }
                    }
                    best
                }
            };
            let mut vertices = *tri;
            if area < T::zero() {
                vertices.swap(1, 2);
                r = match r {
                    1 => 2,
                    2 => 1,
                    other => other,
                };
            }
            elements.push(Element {
                vertices,
                refinement_edge: r,
                generation: 0,
            });
        }
        let vertices = coords
            .into_iter()
            .map(|c| Vertex {
                x: c[0],
                y: c[1],
                on_boundary: false,
            })
            .collect();
        Self::assemble(vertices, elements, 0, None)
    }

    /// `nx x ny` cell grid on the unit square; every cell is split along the
    /// diagonal from its lower-left to its upper-right corner and the
    /// diagonal is the refinement edge of both halves.
    pub fn rectangle_grid(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput("grid needs at least one cell per side".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Vertex {
                    x: T::lit(i as f64 / nx as f64),
                    y: T::lit(j as f64 / ny as f64),
                    on_boundary: false,
                });
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut elements = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v11, v01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                elements.push(Element {
                    vertices: [v00, v10, v11],
                    refinement_edge: 1,
                    generation: 0,
                });
                elements.push(Element {
                    vertices: [v00, v11, v01],
                    refinement_edge: 2,
                    generation: 0,
                });
            }
        }
        Self::assemble(vertices, elements, 0, None)
    }

    fn assemble(
        mut vertices: Vec<Vertex<T>>,
        elements: Vec<Element>,
        generation: u32,
        lineage: Option<Lineage<T>>,
    ) -> Result<Self> {
        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(elements.len() * 3 / 2 + 4);
        let mut edge_elements: Vec<(usize, Option<usize>)> = Vec::with_capacity(edges.capacity());
        let mut element_edges = Vec::with_capacity(elements.len());
        let mut edge_lookup = HashMap::with_capacity(edges.capacity());
        for (t, el) in elements.iter().enumerate() {
            let mut local = [0usize; 3];
            for (i, slot) in local.iter_mut().enumerate() {
                let [a, b] = el.edge_vertices(i);
                let key = edge_key(a, b);
                let e = match edge_lookup.get(&key) {
                    Some(&e) => {
                        let entry: &mut (usize, Option<usize>) = &mut edge_elements[e];
                        if entry.1.is_some() {
                            return Err(Error::InvalidInput(format!(
                                "edge ({a}, {b}) is shared by more than two elements"
                            )));
                        }
                        entry.1 = Some(t);
                        e
                    }
                    None => {
                        let e = edges.len();
                        edges.push([key.0, key.1]);
                        edge_elements.push((t, None));
                        edge_lookup.insert(key, e);
                        e
                    }
                };
                *slot = e;
            }
            element_edges.push(local);
        }
        for v in vertices.iter_mut() {
            v.on_boundary = false;
        }
        for (e, adj) in edge_elements.iter().enumerate() {
            if adj.1.is_none() {
                vertices[edges[e][0]].on_boundary = true;
                vertices[edges[e][1]].on_boundary = true;
            }
        }
        Ok(Mesh {
            id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
            vertices,
            elements,
            edges,
            edge_elements,
            element_edges,
            edge_lookup,
            generation,
            lineage,
        })
    }

    /// Process-unique identifier used for lineage checks.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    pub fn vertices(&self) -> &[Vertex<T>] {
        &self.vertices
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Sorted endpoint ids of every edge.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// The one or two elements adjacent to each edge.
    pub fn edge_elements(&self) -> &[(usize, Option<usize>)] {
        &self.edge_elements
    }

    /// Global edge ids of the local edges of every element.
    pub fn element_edges(&self) -> &[[usize; 3]] {
        &self.element_edges
    }

    pub fn edge_id(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_lookup.get(&edge_key(a, b)).copied()
    }

    pub fn is_boundary_edge(&self, edge: usize) -> bool {
        self.edge_elements[edge].1.is_none()
    }

    pub fn n_boundary_vertices(&self) -> usize {
        self.vertices.iter().filter(|v| v.on_boundary).count()
    }

    pub fn n_interior_edges(&self) -> usize {
        self.edge_elements.iter().filter(|adj| adj.1.is_some()).count()
    }

    pub fn lineage(&self) -> Option<&Lineage<T>> {
        self.lineage.as_ref()
    }

    pub fn parent(&self) -> Option<&Arc<Mesh<T>>> {
        self.lineage.as_ref().map(|l| &l.parent)
    }

    pub fn element_points(&self, element: usize) -> [Point<T>; 3] {
        let v = self.elements[element].vertices;
        [
            self.vertices[v[0]].point(),
            self.vertices[v[1]].point(),
            self.vertices[v[2]].point(),
        ]
    }

    pub fn area(&self, element: usize) -> T {
        signed_area(self.element_points(element))
    }

    /// `h_T = |T|^{1/2}`.
    pub fn element_size(&self, element: usize) -> T {
        self.area(element).sqrt()
    }

    /// Element across local edge `local_edge`, if any.
    pub fn neighbor(&self, element: usize, local_edge: usize) -> Option<usize> {
        let (a, b) = self.edge_elements[self.element_edges[element][local_edge]];
        if a == element {
            b
        } else {
            Some(a)
        }
    }

    /// The element together with every element sharing a full edge with it,
    /// in ascending id order.
    pub fn patch(&self, element: usize) -> Result<Vec<usize>> {
        if element >= self.elements.len() {
            return Err(Error::InvalidInput(format!(
                "element {element} out of range ({} elements)",
                self.elements.len()
            )));
        }
        let mut out = vec![element];
        out.extend((0..3).filter_map(|i| self.neighbor(element, i)));
        out.sort_unstable();
        Ok(out)
    }

    /// Smallest interior angle over all elements, in radians.
    pub fn min_angle(&self) -> T {
        let mut min = T::infinity();
        for t in 0..self.elements.len() {
            let p = self.element_points(t);
            for i in 0..3 {
                let a = p[i];
                let b = p[(i + 1) % 3];
                let c = p[(i + 2) % 3];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1])
                    / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
                min = min.min(cos.max(-T::one()).min(T::one()).acos());
            }
        }
        min
    }

    pub fn boundary_length(&self) -> T {
        self.edges
            .iter()
            .zip(&self.edge_elements)
            .filter(|(_, adj)| adj.1.is_none())
            .map(|(e, _)| {
                let a = self.vertices[e[0]].point();
                let b = self.vertices[e[1]].point();
                ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
            })
            .sum()
    }

    pub fn total_area(&self) -> T {
        (0..self.elements.len()).map(|t| self.area(t)).sum()
    }

    /// Checks that the triangulation is conforming: positive orientation,
    /// interior edges traversed in opposite directions by their two
    /// elements, and a boundary that has not grown relative to the initial
    /// ancestor (a hanging vertex would add interior "boundary" edges).
    pub fn check_conformity(&self) -> Result<()> {
        for t in 0..self.elements.len() {
            if self.area(t) <= T::zero() {
                return Err(Error::InvalidInput(format!("element {t} is not positively oriented")));
            }
        }
        for (e, &(a, b)) in self.edge_elements.iter().enumerate() {
            let Some(b) = b else { continue };
            let dir = |t: usize| {
                let el = &self.elements[t];
                let li = (0..3)
                    .find(|&i| self.element_edges[t][i] == e)
                    .expect("edge belongs to element");
                el.edge_vertices(li)
            };
            let da = dir(a);
            let db = dir(b);
            if da[0] != db[1] || da[1] != db[0] {
                return Err(Error::InvalidInput(format!("edge {e} has inconsistent orientation")));
            }
        }
        let mut root = self;
        while let Some(p) = root.parent() {
            root = p;
        }
        let l0 = root.boundary_length();
        let l = self.boundary_length();
        if (l - l0).abs() > T::lit(1e-10) * l0.max(T::one()) {
            return Err(Error::InvalidInput(format!(
                "boundary length {l} differs from initial {l0}: hanging vertices present"
            )));
        }
        Ok(())
    }

    /// `true` when `ancestor` appears in this mesh's lineage (or is this
    /// mesh itself).
    pub fn descends_from(&self, ancestor: &Mesh<T>) -> bool {
        self.chain_from(ancestor).is_some()
    }

    /// Meshes strictly after `ancestor` up to and including `self`, ordered
    /// from coarse to fine. Empty when `ancestor` is `self`.
    pub fn chain_from<'a>(&'a self, ancestor: &Mesh<T>) -> Option<Vec<&'a Mesh<T>>> {
        let mut chain = Vec::new();
        let mut cur = self;
        loop {
            if cur.id == ancestor.id {
                chain.reverse();
                return Some(chain);
            }
            chain.push(cur);
            cur = cur.parent()?;
        }
    }

    /// For every element, the element of `ancestor` that contains it.
    pub fn ancestor_map(&self, ancestor: &Mesh<T>) -> Option<Vec<usize>> {
        let chain = self.chain_from(ancestor)?;
        let mut map: Vec<usize> = (0..ancestor.n_elements()).collect();
        for level in chain {
            let parents = level.lineage().expect("refined mesh carries lineage").element_parent();
            map = parents.iter().map(|&p| map[p]).collect();
        }
        Some(map)
    }
}

/// Bisects every marked element at least once and completes the result to a
/// conforming mesh.
pub fn refine<T: Real>(mesh: &Arc<Mesh<T>>, marked: &[usize]) -> Result<Mesh<T>> {
    let n_old = mesh.n_vertices();
    let mut edge_marked = vec![false; mesh.n_edges()];
    let mut stack = Vec::new();
    for &t in marked {
        if t >= mesh.n_elements() {
            return Err(Error::InvalidInput(format!(
                "marked element {t} out of range ({} elements)",
                mesh.n_elements()
            )));
        }
        let r = mesh.element_edges[t][mesh.elements[t].refinement_edge];
        if !edge_marked[r] {
            edge_marked[r] = true;
            stack.push(r);
        }
    }
    // closure: any element touching a marked edge needs its refinement edge
    while let Some(e) = stack.pop() {
        let (a, b) = mesh.edge_elements[e];
        for t in std::iter::once(a).chain(b) {
            let r = mesh.element_edges[t][mesh.elements[t].refinement_edge];
            if !edge_marked[r] {
                edge_marked[r] = true;
                stack.push(r);
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint = vec![usize::MAX; mesh.n_edges()];
    let mut new_vertex_parents = Vec::new();
    let half = T::lit(0.5);
    for (e, &is_marked) in edge_marked.iter().enumerate() {
        if is_marked {
            let [a, b] = mesh.edges[e];
            midpoint[e] = vertices.len();
            let pa = mesh.vertices[a];
            let pb = mesh.vertices[b];
            vertices.push(Vertex {
                x: half * (pa.x + pb.x),
                y: half * (pa.y + pb.y),
                on_boundary: false,
            });
            new_vertex_parents.push([a, b]);
        }
    }

    let mid_of = |a: usize, b: usize| -> Option<usize> {
        if a >= n_old || b >= n_old {
            return None;
        }
        let e = mesh.edge_id(a, b)?;
        edge_marked[e].then_some(midpoint[e])
    };

    let mut elements = Vec::with_capacity(mesh.n_elements() + 2 * marked.len());
    let mut element_parent = Vec::with_capacity(elements.capacity());
    let mut carried = Vec::with_capacity(elements.capacity());
    let mut scratch = Vec::with_capacity(4);
    for (t, el) in mesh.elements.iter().enumerate() {
        scratch.clear();
        bisect(*el, &mid_of, &mut scratch);
        let untouched = scratch.len() == 1;
        for child in scratch.drain(..) {
            elements.push(child);
            element_parent.push(t);
            carried.push(untouched);
        }
    }

    Mesh::assemble(
        vertices,
        elements,
        mesh.generation + 1,
        Some(Lineage {
            parent: Arc::clone(mesh),
            element_parent,
            carried,
            new_vertex_parents,
        }),
    )
}

fn bisect(el: Element, mid_of: &impl Fn(usize, usize) -> Option<usize>, out: &mut Vec<Element>) {
    let r = el.refinement_edge;
    let p = el.vertices[r];
    let a = el.vertices[(r + 1) % 3];
    let b = el.vertices[(r + 2) % 3];
    match mid_of(a, b) {
        None => out.push(el),
        Some(m) => {
            let generation = el.generation + 1;
            bisect(
                Element {
                    vertices: [p, a, m],
                    refinement_edge: 2,
                    generation,
                },
                mid_of,
                out,
            );
            bisect(
                Element {
                    vertices: [p, m, b],
                    refinement_edge: 1,
                    generation,
                },
                mid_of,
                out,
            );
        }
    }
}

/// One uniform level: every element is bisected twice, halving `h_T`.
pub fn uniform_refine<T: Real>(mesh: &Arc<Mesh<T>>) -> Result<Mesh<T>> {
    let all: Vec<usize> = (0..mesh.n_elements()).collect();
    let once = Arc::new(refine(mesh, &all)?);
    let all: Vec<usize> = (0..once.n_elements()).collect();
    refine(&once, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Arc<Mesh<f64>> {
        Arc::new(build_initial_mesh(n).unwrap())
    }

    #[test]
    fn ancestor_map_contains_children() {
        let coarse = unit(3);
        let mid = Arc::new(refine(&coarse, &[0, 5, 7]).unwrap());
        let fine = Arc::new(uniform_refine(&mid).unwrap());
        let map = fine.ancestor_map(&coarse).unwrap();
        assert_eq!(map.len(), fine.n_elements());
        let mut area = vec![0.0; coarse.n_elements()];
        for (t, &a) in map.iter().enumerate() {
            area[a] += fine.area(t);
            let p = fine.element_points(t);
            let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let q = coarse.element_points(a);
            let inside = (0..3).all(|i| {
                let (u, v) = (q[(i + 1) % 3], q[(i + 2) % 3]);
                (v[0] - u[0]) * (c[1] - u[1]) - (v[1] - u[1]) * (c[0] - u[0]) > 0.0
            });
            assert!(inside);
        }
        for (t, a) in area.iter().enumerate() {
            assert!((a - coarse.area(t)).abs() < 1e-15);
        }
        assert_eq!(coarse.ancestor_map(&coarse).unwrap(), (0..18).collect::<Vec<_>>());
        assert!(coarse.ancestor_map(&fine).is_none());
    }

    #[test]
    fn single_cell_counts() {
        let m = unit(1);
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_edges(), 5);
    }

    #[test]
    fn two_by_two_counts() {
        let m = unit(2);
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_boundary_vertices(), 8);
        m.check_conformity().unwrap();
    }

    #[test]
    fn target_144_elements() {
        let m: Mesh<f64> = build_initial_mesh_with_elements(144).unwrap();
        assert_eq!(m.n_elements(), 144);
        for t in 0..m.n_elements() {
            assert!((m.area(t) - 1.0 / 144.0).abs() < 1e-15);
            assert!((m.element_size(t) - 1.0 / 12.0).abs() < 1e-15);
        }
        // Euler: V - E + F = 1 on a disc
        assert_eq!(m.n_vertices() + m.n_elements(), m.n_edges() + 1);
        assert!(build_initial_mesh_with_elements::<f64>(143).is_err());
    }

    #[test]
    fn boundary_flags_match_square() {
        let m = unit(5);
        for v in m.vertices() {
            let geo = v.x == 0.0 || v.x == 1.0 || v.y == 0.0 || v.y == 1.0;
            assert_eq!(v.on_boundary, geo);
        }
    }

    #[test]
    fn empty_marking_keeps_mesh() {
        let m = unit(3);
        let r = refine(&m, &[]).unwrap();
        assert_eq!(r.n_elements(), m.n_elements());
        assert_eq!(r.elements(), m.elements());
    }

    #[test]
    fn marking_one_of_two_completes_neighbor() {
        let m = unit(1);
        let r = refine(&m, &[0]).unwrap();
        assert_eq!(r.n_elements(), 4);
        assert_eq!(r.n_vertices(), 5);
        r.check_conformity().unwrap();
        let c = r.vertices()[4];
        assert_eq!((c.x, c.y), (0.5, 0.5));
        assert!(!c.on_boundary);
    }

    #[test]
    fn marking_all_compatible_doubles() {
        let m = unit(4);
        let all: Vec<usize> = (0..m.n_elements()).collect();
        let r = refine(&m, &all).unwrap();
        assert_eq!(r.n_elements(), 2 * m.n_elements());
        r.check_conformity().unwrap();
    }

    #[test]
    fn child_size_shrinks_by_sqrt2() {
        let m = unit(1);
        let r = refine(&m, &[0]).unwrap();
        let lin = r.lineage().unwrap();
        for t in 0..r.n_elements() {
            let p = lin.element_parent()[t];
            let ratio = m.element_size(p) / r.element_size(t);
            assert!((ratio - 2f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn patch_sizes() {
        let m = unit(3);
        // lower triangle of the bottom-right cell touches two boundary edges
        assert_eq!(m.patch(4).unwrap().len(), 2);
        // triangle in the middle cell is interior
        let middle = 2 * (3 + 1);
        assert_eq!(m.patch(middle).unwrap().len(), 4);
        assert!(m.patch(m.n_elements()).is_err());
    }

    #[test]
    fn patch_cardinality_sum_brute_force() {
        let m = Arc::new(refine(&unit(3), &[0, 5, 11]).unwrap());
        let sum: usize = (0..m.n_elements()).map(|t| m.patch(t).unwrap().len()).sum();
        // brute force: count ordered pairs of distinct elements sharing two vertices
        let mut shared = 0;
        for a in 0..m.n_elements() {
            for b in 0..m.n_elements() {
                if a == b {
                    continue;
                }
                let va = m.elements()[a].vertices;
                let vb = m.elements()[b].vertices;
                if va.iter().filter(|v| vb.contains(v)).count() == 2 {
                    shared += 1;
                }
            }
        }
        assert_eq!(sum, m.n_elements() + shared);
        assert_eq!(shared, 2 * m.n_interior_edges());
    }

    #[test]
    fn degenerate_triangle_rejected() {
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]];
        assert!(Mesh::<f64>::from_raw(coords, vec![[0, 1, 2]], None).is_err());
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let coords = vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]];
        let m = Mesh::<f64>::from_raw(coords, vec![[0, 1, 2]], None).unwrap();
        assert!(m.area(0) > 0.0);
        // hypotenuse (1,0)-(0,1) stays the refinement edge
        let el = m.elements()[0];
        assert_eq!(el.newest_vertex(), 0);
    }

    #[test]
    fn random_refinement_keeps_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mesh = unit(2);
        let min0 = mesh.min_angle();
        for _ in 0..20 {
            let marked: Vec<usize> = (0..mesh.n_elements()).filter(|_| rng.gen_bool(0.15)).collect();
            let next = Arc::new(refine(&mesh, &marked).unwrap());
            next.check_conformity().unwrap();
            assert!((next.total_area() - 1.0).abs() < 1e-12);
            assert!(next.min_angle() >= 0.4 * min0);
            let lin = next.lineage().unwrap();
            for (t, &c) in lin.carried().iter().enumerate() {
                let p = lin.element_parent()[t];
                if c {
                    assert_eq!(next.elements()[t], mesh.elements()[p]);
                    assert_eq!(next.element_points(t), mesh.element_points(p));
                }
            }
            for &t in &marked {
                let children = lin.element_parent().iter().filter(|&&p| p == t).count();
                assert!(children >= 2);
            }
            assert!(next.descends_from(&mesh));
            mesh = next;
        }
        for v in mesh.vertices() {
            let geo = v.x == 0.0 || v.x == 1.0 || v.y == 0.0 || v.y == 1.0;
            assert_eq!(v.on_boundary, geo);
        }
    }

    #[test]
    fn uniform_level_quarters_elements() {
        let m = unit(2);
        let r = uniform_refine(&m).unwrap();
        assert_eq!(r.n_elements(), 4 * m.n_elements());
        assert_eq!(r.chain_from(&m).unwrap().len(), 2);
    }
}
