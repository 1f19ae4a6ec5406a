//! Residual-based a posteriori indicators.
//!
//! Primal and dual indicators are stored squared:
//! `eta_T^2 = h_T^2 ||R||^2_T + h_T sum_{e in dT interior} ||[A grad v . n]||^2_e`.
//! Each interior edge counts in full on both sides. The weighted-residual
//! (DWR) kind stores signed values whose global estimator is `|sum|`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre_unit, QuadratureRule};
use crate::real::{dot, mat_vec, sym_norm, Point, Real};
use crate::space::{shape_functions, Degree, DiscreteField, ElementGeometry};
use crate::system::ProblemSpec;

/// Gauss points per edge; exact for the squared jump of P1 fields with
/// diffusion of degree up to 3.
const EDGE_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorKind {
    Primal,
    Dual,
    Dwr,
    Data,
}

#[derive(Debug, Clone)]
pub struct IndicatorField<T: Real> {
    mesh: Arc<Mesh<T>>,
    values: Vec<T>,
    kind: IndicatorKind,
}

impl<T: Real> IndicatorField<T> {
    pub fn new(mesh: &Arc<Mesh<T>>, values: Vec<T>, kind: IndicatorKind) -> Result<Self> {
        if values.len() != mesh.n_elements() {
            return Err(Error::InvalidInput(format!(
                "{} indicator values for {} elements",
                values.len(),
                mesh.n_elements()
            )));
        }
        if kind != IndicatorKind::Dwr && values.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::InvalidInput("squared indicators must be nonnegative".into()));
        }
        Ok(IndicatorField {
            mesh: Arc::clone(mesh),
            values,
            kind,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn kind(&self) -> IndicatorKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Weights used for bulk marking: squared values, or `|value|` for DWR.
    pub fn marking_weights(&self) -> Vec<T> {
        match self.kind {
            IndicatorKind::Dwr => self.values.iter().map(|v| v.abs()).collect(),
            _ => self.values.clone(),
        }
    }

    /// Squared estimator over all elements (or `|sum|` for DWR).
    pub fn total(&self) -> T {
        let s: T = self.values.iter().copied().sum();
        match self.kind {
            IndicatorKind::Dwr => s.abs(),
            _ => s,
        }
    }

    /// Same as [`total`](Self::total) restricted to a subset of element ids.
    pub fn total_on(&self, subset: &[usize]) -> Result<T> {
        let mut s = T::zero();
        for &t in subset {
            s += *self.values.get(t).ok_or_else(|| {
                Error::InvalidInput(format!("element {t} out of range ({} elements)", self.values.len()))
            })?;
        }
        Ok(match self.kind {
            IndicatorKind::Dwr => s.abs(),
            _ => s,
        })
    }

    /// `sum_T |eta_T^D|`; equals `total` for the squared kinds.
    pub fn absolute_sum(&self) -> T {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

/// Free-function form of [`IndicatorField::total`] / [`IndicatorField::total_on`].
pub fn total<T: Real>(indicators: &IndicatorField<T>, subset: Option<&[usize]>) -> Result<T> {
    match subset {
        Some(s) => indicators.total_on(s),
        None => Ok(indicators.total()),
    }
}

fn check_p1_on<T: Real>(field: &DiscreteField<T>, mesh: &Mesh<T>, what: &str) -> Result<()> {
    if field.space().degree() != Degree::Linear {
        return Err(Error::InvalidInput(format!("{what} must be degree 1")));
    }
    if field.mesh().id() != mesh.id() {
        return Err(Error::IncompatibleMesh(format!("{what} lives on a different mesh")));
    }
    Ok(())
}

/// Constant gradient of a P1 field on every element.
fn p1_gradients<T: Real>(field: &DiscreteField<T>) -> Vec<[T; 2]> {
    let mesh = field.mesh();
    let c = field.coefficients();
    (0..mesh.n_elements())
        .map(|t| {
            let geo = ElementGeometry::new(mesh, t);
            let d = field.space().element_dofs(t);
            let mut g = [T::zero(); 2];
            for k in 0..3 {
                g[0] += c[d[k]] * geo.grad_lambda[k][0];
                g[1] += c[d[k]] * geo.grad_lambda[k][1];
            }
            g
        })
        .collect()
}

/// Interior edge with its two elements, endpoints, length and unit normal
/// pointing out of the first element.
struct InteriorEdge<T> {
    elements: (usize, usize),
    vertices: [usize; 2],
    ends: [Point<T>; 2],
    length: T,
    normal: [T; 2],
}

fn interior_edges<T: Real>(mesh: &Mesh<T>) -> impl Iterator<Item = InteriorEdge<T>> + '_ {
    mesh.edges()
        .iter()
        .zip(mesh.edge_elements())
        .filter_map(move |(&[a, b], &(t0, t1))| {
            let t1 = t1?;
            let pa = mesh.vertices()[a].point();
            let pb = mesh.vertices()[b].point();
            let d = [pb[0] - pa[0], pb[1] - pa[1]];
            let length = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let mut normal = [d[1] / length, -d[0] / length];
            let opposite = mesh.elements()[t0]
                .vertices
                .iter()
                .copied()
                .find(|&v| v != a && v != b)
                .expect("triangle has a vertex off each edge");
            let po = mesh.vertices()[opposite].point();
            if dot(normal, [pa[0] - po[0], pa[1] - po[1]]) < T::zero() {
                normal = [-normal[0], -normal[1]];
            }
            Some(InteriorEdge {
                elements: (t0, t1),
                vertices: [a, b],
                ends: [pa, pb],
                length,
                normal,
            })
        })
}

/// Shared implementation of the primal and dual squared indicators. The
/// strong residual is `rhs(x) + div(A) . grad v - zero_order(e, x, v)`.
fn squared_residual_indicators<T: Real>(
    spec: &ProblemSpec<T>,
    v: &DiscreteField<T>,
    rhs: impl Fn(Point<T>) -> T,
    zero_order: impl Fn(usize, [T; 3], T) -> T,
) -> Vec<T> {
    let mesh = v.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let grads = p1_gradients(v);
    let coeffs = v.coefficients();
    let mut eta = vec![T::zero(); mesh.n_elements()];
    for (t, eta_t) in eta.iter_mut().enumerate() {
        let geo = ElementGeometry::new(mesh, t);
        let d = v.space().element_dofs(t);
        let mut r2 = T::zero();
        for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
            let x = geo.map(*lambda);
            let value = lambda[0] * coeffs[d[0]] + lambda[1] * coeffs[d[1]] + lambda[2] * coeffs[d[2]];
            let r = rhs(x) + dot(spec.divergence_at(x), grads[t]) - zero_order(t, *lambda, value);
            r2 += w * r * r;
        }
        *eta_t = geo.area * r2 * geo.area;
    }
    let (s, ws) = gauss_legendre_unit::<T>(EDGE_POINTS);
    for edge in interior_edges(mesh) {
        let (t0, t1) = edge.elements;
        let mut j2 = T::zero();
        for (&sq, &wq) in s.iter().zip(&ws) {
            let x = lerp(edge.ends, sq);
            let a = (spec.diffusion)(x);
            let jump = dot(mat_vec(&a, grads[t1]), edge.normal) - dot(mat_vec(&a, grads[t0]), edge.normal);
            j2 += wq * jump * jump;
        }
        j2 *= edge.length;
        eta[t0] += mesh.element_size(t0) * j2;
        eta[t1] += mesh.element_size(t1) * j2;
    }
    eta
}

#[inline]
fn lerp<T: Real>(ends: [Point<T>; 2], s: T) -> Point<T> {
    let r = T::one() - s;
    [r * ends[0][0] + s * ends[1][0], r * ends[0][1] + s * ends[1][1]]
}

/// Squared primal indicators for a P1 iterate.
pub fn primal_indicators<T: Real>(spec: &ProblemSpec<T>, u_h: &DiscreteField<T>) -> Result<IndicatorField<T>> {
    check_p1_on(u_h, u_h.mesh(), "primal field")?;
    let values = squared_residual_indicators(spec, u_h, |x| (spec.source)(x), |_, _, u| (spec.reaction)(u));
    IndicatorField::new(u_h.mesh(), values, IndicatorKind::Primal)
}

/// Squared indicators of the approximate dual residual `g - L_j^* z_h`,
/// linearized about the primal iterate `u_j` (same mesh).
pub fn dual_indicators<T: Real>(
    spec: &ProblemSpec<T>,
    u_j: &DiscreteField<T>,
    z_h: &DiscreteField<T>,
) -> Result<IndicatorField<T>> {
    check_p1_on(u_j, z_h.mesh(), "primal iterate")?;
    let uc = u_j.coefficients();
    dual_indicators_weighted(spec, z_h, |t, lambda| {
        let d = u_j.space().element_dofs(t);
        let u = lambda[0] * uc[d[0]] + lambda[1] * uc[d[1]] + lambda[2] * uc[d[2]];
        (spec.reaction_derivative)(u)
    })
}

/// Dual indicators for an explicit reaction weight `c(T, lambda)` in place
/// of `b'(u_j)`.
pub fn dual_indicators_weighted<T: Real>(
    spec: &ProblemSpec<T>,
    z_h: &DiscreteField<T>,
    weight: impl Fn(usize, [T; 3]) -> T,
) -> Result<IndicatorField<T>> {
    check_p1_on(z_h, z_h.mesh(), "dual field")?;
    let values = squared_residual_indicators(spec, z_h, |x| (spec.goal)(x), |t, lambda, z| weight(t, lambda) * z);
    IndicatorField::new(z_h.mesh(), values, IndicatorKind::Dual)
}

/// Edge coefficients of `z2 - I z2` on one element: `w = sum_i c_i 4 l_j l_k`.
fn bubble_coefficients<T: Real>(z2: &DiscreteField<T>, t: usize) -> [T; 3] {
    let d = z2.space().element_dofs(t);
    let c = z2.coefficients();
    let half = T::lit(0.5);
    std::array::from_fn(|i| {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        c[d[3 + i]] - half * (c[d[j]] + c[d[k]])
    })
}

#[inline]
fn bubble_value<T: Real>(b: &[T; 3], lambda: [T; 3]) -> T {
    let four = T::lit(4.0);
    four * (b[0] * lambda[1] * lambda[2] + b[1] * lambda[2] * lambda[0] + b[2] * lambda[0] * lambda[1])
}

/// Signed weighted-residual indicators
/// `<R(u_h), w>_T + 1/2 <J(u_h), w>_dT` with `w = z2 - I z2`.
pub fn dwr_indicators<T: Real>(
    spec: &ProblemSpec<T>,
    u_h: &DiscreteField<T>,
    z2: &DiscreteField<T>,
) -> Result<IndicatorField<T>> {
    if z2.space().degree() != Degree::Quadratic {
        return Err(Error::InvalidInput("weighting dual must be degree 2".into()));
    }
    check_p1_on(u_h, z2.mesh(), "primal field")?;
    let mesh = z2.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let grads = p1_gradients(u_h);
    let half = T::lit(0.5);
    let mut eta = vec![T::zero(); mesh.n_elements()];
    for (t, eta_t) in eta.iter_mut().enumerate() {
        let geo = ElementGeometry::new(mesh, t);
        let b = bubble_coefficients(z2, t);
        let shape = |lambda: [T; 3]| shape_functions(Degree::Linear, lambda, &geo);
        let mut acc = T::zero();
        for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
            let x = geo.map(*lambda);
            let (u, _) = u_h.value_at_shape(t, &shape(*lambda));
            let r = (spec.source)(x) + dot(spec.divergence_at(x), grads[t]) - (spec.reaction)(u);
            acc += w * r * bubble_value(&b, *lambda);
        }
        *eta_t = acc * geo.area;
    }
    let (s, ws) = gauss_legendre_unit::<T>(EDGE_POINTS);
    for edge in interior_edges(mesh) {
        let (t0, t1) = edge.elements;
        // w restricted to the edge is 4 c s (1 - s) for the edge's bubble coefficient c
        let c = edge_bubble(mesh, z2, t0, edge.ends);
        let mut acc = T::zero();
        for (&sq, &wq) in s.iter().zip(&ws) {
            let x = lerp(edge.ends, sq);
            let a = (spec.diffusion)(x);
            let jump = dot(mat_vec(&a, grads[t1]), edge.normal) - dot(mat_vec(&a, grads[t0]), edge.normal);
            acc += wq * jump * T::lit(4.0) * c * sq * (T::one() - sq);
        }
        // the jump is the same seen from either side; each side gets half
        let contribution = half * acc * edge.length;
        eta[t0] += contribution;
        eta[t1] += contribution;
    }
    IndicatorField::new(mesh, eta, IndicatorKind::Dwr)
}

fn edge_bubble<T: Real>(mesh: &Mesh<T>, z2: &DiscreteField<T>, t: usize, ends: [Point<T>; 2]) -> T {
    let b = bubble_coefficients(z2, t);
    let pts = mesh.element_points(t);
    for i in 0..3 {
        let p = pts[(i + 1) % 3];
        let q = pts[(i + 2) % 3];
        if (p == ends[0] && q == ends[1]) || (p == ends[1] && q == ends[0]) {
            return b[i];
        }
    }
    unreachable!("edge belongs to its adjacent element")
}

/// Per-element `<R(u_h), w>_T + 1/2 <J(u_h), w>_dT` for an arbitrary P1
/// or P2 weight `w` on the same mesh. Summed over the mesh this is the
/// strong-form split of `f(w) - a(u_h, w) - <b(u_h), w>`.
pub fn residual_weighted_by<T: Real>(
    spec: &ProblemSpec<T>,
    u_h: &DiscreteField<T>,
    weight: &DiscreteField<T>,
) -> Result<Vec<T>> {
    check_p1_on(u_h, weight.mesh(), "primal field")?;
    let mesh = weight.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let grads = p1_gradients(u_h);
    let mut out = vec![T::zero(); mesh.n_elements()];
    for (t, out_t) in out.iter_mut().enumerate() {
        let geo = ElementGeometry::new(mesh, t);
        let mut acc = T::zero();
        for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
            let x = geo.map(*lambda);
            let (u, _) = u_h.value_at_shape(t, &shape_functions(Degree::Linear, *lambda, &geo));
            let (wv, _) = weight.value_at_shape(t, &shape_functions(weight.space().degree(), *lambda, &geo));
            let r = (spec.source)(x) + dot(spec.divergence_at(x), grads[t]) - (spec.reaction)(u);
            acc += w * r * wv;
        }
        *out_t = acc * geo.area;
    }
    let (s, ws) = gauss_legendre_unit::<T>(EDGE_POINTS);
    let half = T::lit(0.5);
    for edge in interior_edges(mesh) {
        let (t0, t1) = edge.elements;
        let local = mesh.elements()[t0].vertices;
        let ia = local
            .iter()
            .position(|&v| v == edge.vertices[0])
            .expect("edge endpoint in element");
        let ib = local
            .iter()
            .position(|&v| v == edge.vertices[1])
            .expect("edge endpoint in element");
        let geo = ElementGeometry::new(mesh, t0);
        let mut acc = T::zero();
        for (&sq, &wq) in s.iter().zip(&ws) {
            let x = lerp(edge.ends, sq);
            let mut lambda = [T::zero(); 3];
            lambda[ia] = T::one() - sq;
            lambda[ib] = sq;
            let (wv, _) = weight.value_at_shape(t0, &shape_functions(weight.space().degree(), lambda, &geo));
            let a = (spec.diffusion)(x);
            let jump = dot(mat_vec(&a, grads[t1]), edge.normal) - dot(mat_vec(&a, grads[t0]), edge.normal);
            acc += wq * jump * wv;
        }
        let contribution = half * acc * edge.length;
        out[t0] += contribution;
        out[t1] += contribution;
    }
    Ok(out)
}

/// `max |b'(u_h)|` over the quadrature nodes of the mesh.
pub fn lipschitz_bound<T: Real>(spec: &ProblemSpec<T>, u_h: &DiscreteField<T>) -> T {
    let rule = QuadratureRule::<T>::degree6();
    let c = u_h.coefficients();
    let mut max = T::zero();
    for t in 0..u_h.mesh().n_elements() {
        let d = u_h.space().element_dofs(t);
        for lambda in &rule.barycentric {
            let u = lambda[0] * c[d[0]] + lambda[1] * c[d[1]] + lambda[2] * c[d[2]];
            max = max.max((spec.reaction_derivative)(u).abs());
        }
    }
    max
}

/// Diagnostic data estimator
/// `h_T^2 (||div A||^2_{T} + h_T^{-2} ||A||^2_{omega_T} + B^2)` with sup-norms
/// sampled at quadrature nodes.
pub fn data_estimator<T: Real>(
    spec: &ProblemSpec<T>,
    mesh: &Arc<Mesh<T>>,
    lipschitz_b: T,
) -> Result<IndicatorField<T>> {
    if !(lipschitz_b >= T::zero()) {
        return Err(Error::InvalidInput("Lipschitz bound must be nonnegative".into()));
    }
    let rule = QuadratureRule::<T>::degree6();
    let mut a_max = Vec::with_capacity(mesh.n_elements());
    let mut div_max = Vec::with_capacity(mesh.n_elements());
    for t in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let mut am = T::zero();
        let mut dm = T::zero();
        for lambda in &rule.barycentric {
            let x = geo.map(*lambda);
            am = am.max(sym_norm(&(spec.diffusion)(x)));
            let dv = spec.divergence_at(x);
            dm = dm.max(dot(dv, dv).sqrt());
        }
        a_max.push(am);
        div_max.push(dm);
    }
    let mut values = Vec::with_capacity(mesh.n_elements());
    for t in 0..mesh.n_elements() {
        let h2 = mesh.area(t);
        let a_patch = mesh.patch(t)?.iter().map(|&s| a_max[s]).fold(T::zero(), T::max);
        values.push(h2 * (div_max[t] * div_max[t] + lipschitz_b * lipschitz_b) + a_patch * a_patch);
    }
    IndicatorField::new(mesh, values, IndicatorKind::Data)
}
