//! Lagrange finite element spaces of degree 1 and 2 on a [`Mesh`].
//!
//! Local dof ordering is the three vertices followed, for degree 2, by the
//! three edge midpoints; local edge dof `3 + i` sits on the edge opposite
//! local vertex `i`. Global edge dofs are numbered `n_vertices + edge_id`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::real::{Point, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    Linear,
    Quadratic,
}

impl Degree {
    pub fn from_order(order: u32) -> Result<Self> {
        match order {
            1 => Ok(Degree::Linear),
            2 => Ok(Degree::Quadratic),
            other => Err(Error::UnsupportedDegree(other)),
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Degree::Linear => 1,
            Degree::Quadratic => 2,
        }
    }

    pub fn local_dofs(self) -> usize {
        match self {
            Degree::Linear => 3,
            Degree::Quadratic => 6,
        }
    }
}

/// Affine data of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry<T> {
    pub points: [Point<T>; 3],
    pub area: T,
    /// Constant gradients of the barycentric coordinates.
    pub grad_lambda: [[T; 2]; 3],
}

impl<T: Real> ElementGeometry<T> {
    pub fn new(mesh: &Mesh<T>, element: usize) -> Self {
        Self::from_points(mesh.element_points(element))
    }

    pub fn from_points(points: [Point<T>; 3]) -> Self {
        let two_area = (points[1][0] - points[0][0]) * (points[2][1] - points[0][1])
            - (points[2][0] - points[0][0]) * (points[1][1] - points[0][1]);
        let mut grad_lambda = [[T::zero(); 2]; 3];
        for (i, g) in grad_lambda.iter_mut().enumerate() {
            let a = points[(i + 1) % 3];
            let b = points[(i + 2) % 3];
            *g = [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area];
        }
        ElementGeometry {
            points,
            area: T::lit(0.5) * two_area,
            grad_lambda,
        }
    }

    pub fn map(&self, lambda: [T; 3]) -> Point<T> {
        let p = &self.points;
        [
            lambda[0] * p[0][0] + lambda[1] * p[1][0] + lambda[2] * p[2][0],
            lambda[0] * p[0][1] + lambda[1] * p[1][1] + lambda[2] * p[2][1],
        ]
    }

    pub fn size(&self) -> T {
        self.area.sqrt()
    }
}

/// Shape function values and physical gradients at one point.
#[derive(Debug, Clone, Copy)]
pub struct ShapeValues<T> {
    pub n: usize,
    pub values: [T; 6],
    pub grads: [[T; 2]; 6],
}

pub fn shape_functions<T: Real>(degree: Degree, lambda: [T; 3], geo: &ElementGeometry<T>) -> ShapeValues<T> {
    let gl = &geo.grad_lambda;
    let mut values = [T::zero(); 6];
    let mut grads = [[T::zero(); 2]; 6];
    match degree {
        Degree::Linear => {
            values[..3].copy_from_slice(&lambda);
            grads[..3].copy_from_slice(gl);
            ShapeValues { n: 3, values, grads }
        }
        Degree::Quadratic => {
            let one = T::one();
            let two = T::lit(2.0);
            let four = T::lit(4.0);
            for i in 0..3 {
                values[i] = lambda[i] * (two * lambda[i] - one);
                let s = four * lambda[i] - one;
                grads[i] = [s * gl[i][0], s * gl[i][1]];
                let j = (i + 1) % 3;
                let k = (i + 2) % 3;
                values[3 + i] = four * lambda[j] * lambda[k];
                grads[3 + i] = [
                    four * (lambda[j] * gl[k][0] + lambda[k] * gl[j][0]),
                    four * (lambda[j] * gl[k][1] + lambda[k] * gl[j][1]),
                ];
            }
            ShapeValues { n: 6, values, grads }
        }
    }
}

#[derive(Debug)]
pub struct FESpace<T: Real> {
    mesh: Arc<Mesh<T>>,
    degree: Degree,
    dof_count: usize,
    element_dofs: Vec<[usize; 6]>,
    boundary: Vec<bool>,
    free_index: Vec<Option<usize>>,
    n_free: usize,
}

/// Builds the Lagrange space of the given polynomial order on `mesh`.
pub fn build_space<T: Real>(mesh: &Arc<Mesh<T>>, order: u32) -> Result<Arc<FESpace<T>>> {
    Ok(Arc::new(FESpace::new(mesh, Degree::from_order(order)?)))
}

impl<T: Real> FESpace<T> {
    pub fn new(mesh: &Arc<Mesh<T>>, degree: Degree) -> Self {
        let nv = mesh.n_vertices();
        let dof_count = match degree {
            Degree::Linear => nv,
            Degree::Quadratic => nv + mesh.n_edges(),
        };
        let element_dofs = mesh
            .elements()
            .iter()
            .zip(mesh.element_edges())
            .map(|(el, edges)| {
                let mut d = [0usize; 6];
                d[..3].copy_from_slice(&el.vertices);
                if degree == Degree::Quadratic {
                    for i in 0..3 {
                        d[3 + i] = nv + edges[i];
                    }
                }
                d
            })
            .collect();
        let mut boundary: Vec<bool> = mesh.vertices().iter().map(|v| v.on_boundary).collect();
        if degree == Degree::Quadratic {
            boundary.extend((0..mesh.n_edges()).map(|e| mesh.is_boundary_edge(e)));
        }
        let mut n_free = 0;
        let free_index = boundary
            .iter()
            .map(|&b| {
                if b {
                    None
                } else {
                    n_free += 1;
                    Some(n_free - 1)
                }
            })
            .collect();
        FESpace {
            mesh: Arc::clone(mesh),
            degree,
            dof_count,
            element_dofs,
            boundary,
            free_index,
            n_free,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn dof_count(&self) -> usize {
        self.dof_count
    }

    /// Global dofs of an element in local order.
    pub fn element_dofs(&self, element: usize) -> &[usize] {
        &self.element_dofs[element][..self.degree.local_dofs()]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Index of a dof among the unconstrained (interior) dofs.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn n_free(&self) -> usize {
        self.n_free
    }

    /// Coordinates of the nodal point of every dof.
    pub fn dof_points(&self) -> Vec<Point<T>> {
        let mut pts: Vec<Point<T>> = self.mesh.vertices().iter().map(|v| v.point()).collect();
        if self.degree == Degree::Quadratic {
            let half = T::lit(0.5);
            for e in self.mesh.edges() {
                let a = self.mesh.vertices()[e[0]];
                let b = self.mesh.vertices()[e[1]];
                pts.push([half * (a.x + b.x), half * (a.y + b.y)]);
            }
        }
        pts
    }

    pub fn same_mesh(&self, other: &FESpace<T>) -> bool {
        self.mesh.id() == other.mesh.id()
    }
}

/// A finite element function: coefficients with respect to a space's basis.
#[derive(Debug, Clone)]
pub struct DiscreteField<T: Real> {
    space: Arc<FESpace<T>>,
    coeffs: Vec<T>,
}

impl<T: Real> DiscreteField<T> {
    pub fn zeros(space: &Arc<FESpace<T>>) -> Self {
        DiscreteField {
            space: Arc::clone(space),
            coeffs: vec![T::zero(); space.dof_count()],
        }
    }

    pub fn from_coefficients(space: &Arc<FESpace<T>>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != space.dof_count() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a space with {} dofs",
                coeffs.len(),
                space.dof_count()
            )));
        }
        Ok(DiscreteField {
            space: Arc::clone(space),
            coeffs,
        })
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(space: &Arc<FESpace<T>>, f: impl Fn(Point<T>) -> T) -> Self {
        DiscreteField {
            space: Arc::clone(space),
            coeffs: space.dof_points().into_iter().map(f).collect(),
        }
    }

    pub fn space(&self) -> &Arc<FESpace<T>> {
        &self.space
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        self.space.mesh()
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coefficients_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coefficients(self) -> Vec<T> {
        self.coeffs
    }

    /// Coefficients of the unconstrained dofs, in free-index order.
    pub fn free_coefficients(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.space.n_free()];
        for (dof, &c) in self.coeffs.iter().enumerate() {
            if let Some(i) = self.space.free_index(dof) {
                out[i] = c;
            }
        }
        out
    }

    pub fn boundary_is_zero(&self) -> bool {
        self.coeffs
            .iter()
            .zip(self.space.boundary_mask())
            .all(|(&c, &b)| !b || c == T::zero())
    }

    /// Sets boundary coefficients to zero.
    pub fn clear_boundary(&mut self) {
        for (c, &b) in self.coeffs.iter_mut().zip(self.space.boundary_mask()) {
            if b {
                *c = T::zero();
            }
        }
    }

    #[inline]
    pub fn value_at_shape(&self, element: usize, shape: &ShapeValues<T>) -> (T, [T; 2]) {
        let dofs = self.space.element_dofs(element);
        let mut v = T::zero();
        let mut g = [T::zero(); 2];
        for (k, &d) in dofs.iter().enumerate() {
            let c = self.coeffs[d];
            v += c * shape.values[k];
            g[0] += c * shape.grads[k][0];
            g[1] += c * shape.grads[k][1];
        }
        (v, g)
    }

    /// `u_h` and `grad u_h` at a barycentric point of an element.
    pub fn evaluate(&self, element: usize, lambda: [T; 3]) -> Result<(T, [T; 2])> {
        if element >= self.mesh().n_elements() {
            return Err(Error::InvalidInput(format!("element {element} out of range")));
        }
        let tol = T::lit(1e-12);
        let sum: T = lambda.iter().copied().sum();
        if (sum - T::one()).abs() > tol || lambda.iter().any(|&l| l < -tol || l > T::one() + tol) {
            return Err(Error::InvalidInput(format!("{lambda:?} is not a barycentric point")));
        }
        let geo = ElementGeometry::new(self.mesh(), element);
        let shape = shape_functions(self.space.degree(), lambda, &geo);
        Ok(self.value_at_shape(element, &shape))
    }

    /// `\int_\Omega u_h w` for a pointwise weight.
    pub fn integrate_weighted(&self, weight: impl Fn(Point<T>) -> T) -> T {
        let rule = QuadratureRule::<T>::degree6();
        let mut total = T::zero();
        for t in 0..self.mesh().n_elements() {
            let geo = ElementGeometry::new(self.mesh(), t);
            let mut local = T::zero();
            for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
                let shape = shape_functions(self.space.degree(), *lambda, &geo);
                let (v, _) = self.value_at_shape(t, &shape);
                local += w * v * weight(geo.map(*lambda));
            }
            total += local * geo.area;
        }
        total
    }

    pub fn l2_norm(&self) -> T {
        let rule = QuadratureRule::<T>::degree6();
        let mut total = T::zero();
        for t in 0..self.mesh().n_elements() {
            let geo = ElementGeometry::new(self.mesh(), t);
            let mut local = T::zero();
            for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
                let shape = shape_functions(self.space.degree(), *lambda, &geo);
                let (v, _) = self.value_at_shape(t, &shape);
                local += w * v * v;
            }
            total += local * geo.area;
        }
        total.sqrt()
    }

    /// `self - other` on a shared space.
    pub fn difference(&self, other: &DiscreteField<T>) -> Result<DiscreteField<T>> {
        if !Arc::ptr_eq(&self.space, &other.space)
            && !(self.space.same_mesh(&other.space) && self.space.degree() == other.space.degree())
        {
            return Err(Error::IncompatibleMesh("fields live on different spaces".into()));
        }
        Ok(DiscreteField {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| a - b).collect(),
        })
    }
}

/// Prolongs a P1 field to a P1 space on a mesh obtained from the field's
/// mesh by (possibly repeated) bisection. The result is the same
/// piecewise-linear function.
pub fn prolong<T: Real>(field: &DiscreteField<T>, fine_space: &Arc<FESpace<T>>) -> Result<DiscreteField<T>> {
    if field.space().degree() != Degree::Linear || fine_space.degree() != Degree::Linear {
        return Err(Error::IncompatibleMesh(
            "prolongation is defined for degree 1 only".into(),
        ));
    }
    let chain = fine_space
        .mesh()
        .chain_from(field.mesh())
        .ok_or_else(|| Error::IncompatibleMesh("target mesh is not a refinement of the field's mesh".into()))?;
    let half = T::lit(0.5);
    let mut coeffs = field.coefficients().to_vec();
    for level in chain {
        let lin = level.lineage().expect("refined mesh carries lineage");
        for &[a, b] in lin.new_vertex_parents() {
            let v = half * (coeffs[a] + coeffs[b]);
            coeffs.push(v);
        }
        debug_assert_eq!(coeffs.len(), level.n_vertices());
    }
    DiscreteField::from_coefficients(fine_space, coeffs)
}

/// Nodal interpolation of a P1 field onto a refinement of its mesh.
pub fn interpolate_to_refined<T: Real>(field: &DiscreteField<T>, fine_mesh: &Arc<Mesh<T>>) -> Result<DiscreteField<T>> {
    let space = Arc::new(FESpace::new(fine_mesh, Degree::Linear));
    prolong(field, &space)
}

/// Vertex interpolation of a P2 field into the P1 space on the same mesh.
pub fn project_p2_to_p1<T: Real>(field: &DiscreteField<T>, p1_space: &Arc<FESpace<T>>) -> Result<DiscreteField<T>> {
    if field.space().degree() != Degree::Quadratic || p1_space.degree() != Degree::Linear {
        return Err(Error::InvalidInput(
            "expected a degree 2 field and a degree 1 target".into(),
        ));
    }
    if !field.space().same_mesh(p1_space) {
        return Err(Error::IncompatibleMesh(
            "P2 field and P1 space use different meshes".into(),
        ));
    }
    let nv = p1_space.dof_count();
    DiscreteField::from_coefficients(p1_space, field.coefficients()[..nv].to_vec())
}
