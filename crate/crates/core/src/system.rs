//! Discrete semilinear primal problem and the linearized dual problems.
//!
//! The primal problem is `a(u, v) + <b(u), v> = f(v)` with
//! `a(u, v) = (A grad u, grad v)`; duals are `a(z, v) + <b'(u_j) z, v> = g(v)`.
//! The nonlinearity and its derivative are evaluated pointwise at quadrature
//! nodes.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::real::{dot, mat_vec, sym_eigenvalues, Mat2, Point, Real};
use crate::space::{prolong, shape_functions, Degree, DiscreteField, ElementGeometry, FESpace};
use crate::sparse::{solve_spd, CsrMatrix, TripletBuilder};

pub type ScalarField<T> = Arc<dyn Fn(Point<T>) -> T + Send + Sync>;
pub type VectorField<T> = Arc<dyn Fn(Point<T>) -> [T; 2] + Send + Sync>;
pub type MatrixField<T> = Arc<dyn Fn(Point<T>) -> Mat2<T> + Send + Sync>;
pub type ScalarMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Data of `-div(A grad u) + b(u) = f`, `u = 0` on the boundary, and the goal
/// functional `g(u) = \int g u`.
#[derive(Clone)]
pub struct ProblemSpec<T: Real> {
    pub diffusion: MatrixField<T>,
    /// Column divergence of `A`; `None` for constant `A`.
    pub diffusion_divergence: Option<VectorField<T>>,
    pub reaction: ScalarMap<T>,
    pub reaction_derivative: ScalarMap<T>,
    pub source: ScalarField<T>,
    pub goal: ScalarField<T>,
    pub exact_solution: Option<ScalarField<T>>,
}

impl<T: Real> fmt::Debug for ProblemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("variable_diffusion", &self.diffusion_divergence.is_some())
            .field("exact_solution", &self.exact_solution.is_some())
            .finish_non_exhaustive()
    }
}

impl<T: Real> Default for ProblemSpec<T> {
    /// `A = I`, `b = 0`, `f = 0`, `g = 0`.
    fn default() -> Self {
        ProblemSpec {
            diffusion: Arc::new(|_| [[T::one(), T::zero()], [T::zero(), T::one()]]),
            diffusion_divergence: None,
            reaction: Arc::new(|_| T::zero()),
            reaction_derivative: Arc::new(|_| T::zero()),
            source: Arc::new(|_| T::zero()),
            goal: Arc::new(|_| T::zero()),
            exact_solution: None,
        }
    }
}

impl<T: Real> ProblemSpec<T> {
    pub fn with_constant_diffusion(mut self, scale: T) -> Self {
        self.diffusion = Arc::new(move |_| [[scale, T::zero()], [T::zero(), scale]]);
        self.diffusion_divergence = None;
        self
    }

    pub fn with_diffusion(
        mut self,
        a: impl Fn(Point<T>) -> Mat2<T> + Send + Sync + 'static,
        divergence: impl Fn(Point<T>) -> [T; 2] + Send + Sync + 'static,
    ) -> Self {
        self.diffusion = Arc::new(a);
        self.diffusion_divergence = Some(Arc::new(divergence));
        self
    }

    pub fn with_reaction(
        mut self,
        b: impl Fn(T) -> T + Send + Sync + 'static,
        b_prime: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Self {
        self.reaction = Arc::new(b);
        self.reaction_derivative = Arc::new(b_prime);
        self
    }

    pub fn with_source(mut self, f: impl Fn(Point<T>) -> T + Send + Sync + 'static) -> Self {
        self.source = Arc::new(f);
        self
    }

    pub fn with_goal(mut self, g: impl Fn(Point<T>) -> T + Send + Sync + 'static) -> Self {
        self.goal = Arc::new(g);
        self
    }

    pub fn with_exact_solution(mut self, u: impl Fn(Point<T>) -> T + Send + Sync + 'static) -> Self {
        self.exact_solution = Some(Arc::new(u));
        self
    }

    #[inline]
    pub fn divergence_at(&self, x: Point<T>) -> [T; 2] {
        match &self.diffusion_divergence {
            Some(d) => d(x),
            None => [T::zero(); 2],
        }
    }

    /// Spot-checks the data assumptions on a grid of points of the unit
    /// square and on a range of reaction arguments: `A` symmetric and
    /// uniformly positive definite, `b'` nonnegative and consistent with `b`.
    pub fn validate(&self, reaction_range: (T, T)) -> Result<()> {
        let n = 11;
        for i in 0..n {
            for j in 0..n {
                let x = [T::lit(i as f64 / (n - 1) as f64), T::lit(j as f64 / (n - 1) as f64)];
                let a = (self.diffusion)(x);
                let scale = a[0][0].abs().max(a[1][1].abs()).max(T::min_positive_value());
                if (a[0][1] - a[1][0]).abs() > T::lit(1e-12) * scale {
                    return Err(Error::ProblemData(format!("A is not symmetric at {x:?}")));
                }
                let (lo, hi) = sym_eigenvalues(&a);
                if !(lo > T::zero()) || !hi.is_finite() {
                    return Err(Error::ProblemData(format!("A is not positive definite at {x:?}")));
                }
            }
        }
        let (lo, hi) = reaction_range;
        let m = 41;
        for k in 0..m {
            let s = lo + (hi - lo) * T::lit(k as f64 / (m - 1) as f64);
            let db = (self.reaction_derivative)(s);
            if db < T::zero() {
                return Err(Error::ProblemData(format!("b'({s}) = {db} is negative")));
            }
            // central differences must approach b' as the step shrinks
            let fd = |h: T| ((self.reaction)(s + h) - (self.reaction)(s - h)) / (h + h);
            let scale = db.abs().max(T::one());
            let h = T::lit(1e-3) * s.abs().max(T::one());
            let err = (fd(h) - db).abs();
            if err > T::lit(1e-3) * scale && (fd(h * T::lit(0.1)) - db).abs() >= err {
                return Err(Error::ProblemData(format!("b' is not the derivative of b at {s}")));
            }
        }
        Ok(())
    }
}

/// Assembled system over the free (interior) dofs.
#[derive(Debug, Clone)]
pub struct SparseSystem<T> {
    pub matrix: CsrMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonReport {
    /// Number of Newton updates applied.
    pub iterations: usize,
    /// Residual norm before the first update and after each update.
    pub residuals: Vec<f64>,
    pub converged: bool,
}

/// Reaction weight sampled at the quadrature nodes of one element.
trait PointWeight<T> {
    fn at(&self, element: usize, q: usize, lambda: [T; 3]) -> T;
}

struct NoWeight;

impl<T: Real> PointWeight<T> for NoWeight {
    fn at(&self, _: usize, _: usize, _: [T; 3]) -> T {
        T::zero()
    }
}

/// `b'(u(x))` for a P1 field on the same mesh.
struct DerivativeWeight<'a, T: Real> {
    spec: &'a ProblemSpec<T>,
    field: &'a DiscreteField<T>,
}

impl<T: Real> PointWeight<T> for DerivativeWeight<'_, T> {
    fn at(&self, element: usize, _: usize, lambda: [T; 3]) -> T {
        let d = self.field.space().element_dofs(element);
        let c = self.field.coefficients();
        let u = lambda[0] * c[d[0]] + lambda[1] * c[d[1]] + lambda[2] * c[d[2]];
        (self.spec.reaction_derivative)(u)
    }
}

fn assemble_bilinear<T: Real>(
    space: &FESpace<T>,
    spec: &ProblemSpec<T>,
    weight: &impl PointWeight<T>,
    constrained: bool,
) -> CsrMatrix<T> {
    let mesh = space.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let nl = space.degree().local_dofs();
    let n = if constrained { space.n_free() } else { space.dof_count() };
    let mut builder = TripletBuilder::with_capacity(n, mesh.n_elements() * nl * nl);
    let mut local = [[T::zero(); 6]; 6];
    for t in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, t);
        for row in local.iter_mut() {
            *row = [T::zero(); 6];
        }
        for (q, (lambda, &w)) in rule.barycentric.iter().zip(&rule.weights).enumerate() {
            let x = geo.map(*lambda);
            let a = (spec.diffusion)(x);
            let c = weight.at(t, q, *lambda);
            let s = shape_functions(space.degree(), *lambda, &geo);
            let wa = w * geo.area;
            for j in 0..nl {
                let agj = mat_vec(&a, s.grads[j]);
                for i in 0..=j {
                    local[i][j] += wa * (dot(agj, s.grads[i]) + c * s.values[j] * s.values[i]);
                }
            }
        }
        let dofs = space.element_dofs(t);
        for j in 0..nl {
            for i in 0..nl {
                let v = if i <= j { local[i][j] } else { local[j][i] };
                let (ri, cj) = if constrained {
                    match (space.free_index(dofs[i]), space.free_index(dofs[j])) {
                        (Some(r), Some(c)) => (r, c),
                        _ => continue,
                    }
                } else {
                    (dofs[i], dofs[j])
                };
                builder.push(ri, cj, v);
            }
        }
    }
    builder.build()
}

fn require_linear<T: Real>(u: &DiscreteField<T>) -> Result<()> {
    if u.space().degree() != Degree::Linear {
        return Err(Error::InvalidInput("primal fields must be degree 1".into()));
    }
    Ok(())
}

/// Full stiffness matrix `(A grad phi_j, grad phi_i)` over all dofs.
pub fn assemble_stiffness<T: Real>(space: &FESpace<T>, spec: &ProblemSpec<T>) -> CsrMatrix<T> {
    assemble_bilinear(space, spec, &NoWeight, false)
}

/// Consistent mass matrix over all dofs.
pub fn assemble_mass<T: Real>(space: &FESpace<T>) -> CsrMatrix<T> {
    let zero_diffusion: ProblemSpec<T> = ProblemSpec {
        diffusion: Arc::new(|_| [[T::zero(); 2]; 2]),
        ..ProblemSpec::default()
    };
    struct One;
    impl<T: Real> PointWeight<T> for One {
        fn at(&self, _: usize, _: usize, _: [T; 3]) -> T {
            T::one()
        }
    }
    assemble_bilinear(space, &zero_diffusion, &One, false)
}

/// Entries `\int A grad u.grad phi_i + b(u) phi_i - f phi_i` for every free dof.
pub fn assemble_primal_residual<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<Vec<T>> {
    require_linear(u)?;
    let space = u.space();
    let mesh = space.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let mut r = vec![T::zero(); space.n_free()];
    for t in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let mut local = [T::zero(); 3];
        for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
            let x = geo.map(*lambda);
            let s = shape_functions(Degree::Linear, *lambda, &geo);
            let (uv, ug) = u.value_at_shape(t, &s);
            let flux = mat_vec(&(spec.diffusion)(x), ug);
            let zero_order = (spec.reaction)(uv) - (spec.source)(x);
            for (i, li) in local.iter_mut().enumerate() {
                *li += w * (dot(flux, s.grads[i]) + zero_order * s.values[i]);
            }
        }
        for (i, &d) in space.element_dofs(t).iter().enumerate() {
            if let Some(k) = space.free_index(d) {
                r[k] += local[i] * geo.area;
            }
        }
    }
    Ok(r)
}

/// Jacobian of the discrete primal operator: stiffness plus `b'(u_h)`-weighted mass.
pub fn assemble_primal_jacobian<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> Result<SparseSystem<T>> {
    require_linear(u)?;
    Ok(SparseSystem {
        matrix: assemble_bilinear(u.space(), spec, &DerivativeWeight { spec, field: u }, true),
    })
}

/// Riesz-norm proxy of a residual vector, `sqrt(r^T diag(M)^{-1} r)`, using the
/// diagonal of the P1 mass matrix restricted to free dofs.
pub fn residual_norm<T: Real>(space: &FESpace<T>, mass_diagonal: &[T], r: &[T]) -> T {
    let mut s = T::zero();
    for (dof, &m) in mass_diagonal.iter().enumerate() {
        if let Some(k) = space.free_index(dof) {
            s += r[k] * r[k] / m;
        }
    }
    s.sqrt()
}

pub fn mass_diagonal<T: Real>(space: &FESpace<T>) -> Vec<T> {
    // \int phi_i^2 = |T| / 6 for P1
    let mut d = vec![T::zero(); space.dof_count()];
    let sixth = T::lit(1.0 / 6.0);
    let mesh = space.mesh();
    for t in 0..mesh.n_elements() {
        let a = mesh.area(t) * sixth;
        for &dof in space.element_dofs(t) {
            d[dof] += a;
        }
    }
    d
}

/// Newton's method with exact sparse solves. A full step is taken unless it
/// increases the residual norm, in which case the step is halved (at most 30
/// times).
pub fn newton_solve<T: Real>(
    spec: &ProblemSpec<T>,
    space: &Arc<FESpace<T>>,
    initial_guess: &DiscreteField<T>,
    tol: T,
    max_iters: usize,
) -> Result<(DiscreteField<T>, NewtonReport)> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("Newton tolerance must be positive".into()));
    }
    if space.degree() != Degree::Linear {
        return Err(Error::InvalidInput("primal space must be degree 1".into()));
    }
    let mut u = if Arc::ptr_eq(initial_guess.space(), space) {
        initial_guess.clone()
    } else if initial_guess.mesh().id() == space.mesh().id() {
        DiscreteField::from_coefficients(space, initial_guess.coefficients().to_vec())?
    } else {
        prolong(initial_guess, space)?
    };
    u.clear_boundary();
    let md = mass_diagonal(space);
    let mut r = assemble_primal_residual(spec, &u)?;
    let mut rn = residual_norm(space, &md, &r);
    let mut report = NewtonReport {
        iterations: 0,
        residuals: vec![rn.as_f64()],
        converged: rn <= tol,
    };
    while !report.converged && report.iterations < max_iters {
        let jac = assemble_primal_jacobian(spec, &u)?;
        let rhs: Vec<T> = r.iter().map(|&v| -v).collect();
        let delta = solve_spd(&jac.matrix, &rhs)?;
        let mut step = T::one();
        let base = u.clone();
        let mut halvings = 0;
        loop {
            let mut trial = base.clone();
            for (dof, c) in trial.coefficients_mut().iter_mut().enumerate() {
                if let Some(k) = space.free_index(dof) {
                    *c += step * delta[k];
                }
            }
            let tr = assemble_primal_residual(spec, &trial)?;
            let tn = residual_norm(space, &md, &tr);
            if (tn.is_finite() && tn <= rn) || halvings >= 30 {
                u = trial;
                r = tr;
                rn = tn;
                break;
            }
            step *= T::lit(0.5);
            halvings += 1;
        }
        report.iterations += 1;
        report.residuals.push(rn.as_f64());
        report.converged = rn <= tol;
    }
    Ok((u, report))
}

/// Solves `a(z, v) + <b'(u_j) z, v> = g(v)` in `dual_space`. `u_j` may live
/// on the dual space's mesh or on a coarser ancestor of it.
pub fn solve_dual<T: Real>(
    spec: &ProblemSpec<T>,
    u_j: &DiscreteField<T>,
    dual_space: &Arc<FESpace<T>>,
) -> Result<DiscreteField<T>> {
    let goal = Arc::clone(&spec.goal);
    solve_dual_with_rhs(spec, u_j, dual_space, move |x| goal(x))
}

/// Dual solve with an arbitrary right-hand side density.
pub fn solve_dual_with_rhs<T: Real>(
    spec: &ProblemSpec<T>,
    u_j: &DiscreteField<T>,
    dual_space: &Arc<FESpace<T>>,
    rhs_density: impl Fn(Point<T>) -> T,
) -> Result<DiscreteField<T>> {
    require_linear(u_j)?;
    let u_local = if u_j.mesh().id() == dual_space.mesh().id() {
        u_j.clone()
    } else {
        let p1 = Arc::new(FESpace::new(dual_space.mesh(), Degree::Linear));
        prolong(u_j, &p1)?
    };
    let matrix = assemble_bilinear(dual_space, spec, &DerivativeWeight { spec, field: &u_local }, true);
    let rhs = load_vector(dual_space, rhs_density);
    let z = solve_spd(&matrix, &rhs)?;
    let mut coeffs = vec![T::zero(); dual_space.dof_count()];
    for (dof, c) in coeffs.iter_mut().enumerate() {
        if let Some(k) = dual_space.free_index(dof) {
            *c = z[k];
        }
    }
    DiscreteField::from_coefficients(dual_space, coeffs)
}

struct FnWeight<F>(F);

impl<T: Real, F: Fn(usize, [T; 3]) -> T> PointWeight<T> for FnWeight<F> {
    fn at(&self, element: usize, _: usize, lambda: [T; 3]) -> T {
        (self.0)(element, lambda)
    }
}

/// Solves `a(z, v) + <c z, v> = g(v)` for a reaction weight `c >= 0` given
/// per element at barycentric points. Used for duals linearized about
/// fields that do not live on `dual_space`'s mesh.
pub fn solve_dual_weighted<T: Real>(
    spec: &ProblemSpec<T>,
    dual_space: &Arc<FESpace<T>>,
    weight: impl Fn(usize, [T; 3]) -> T,
) -> Result<DiscreteField<T>> {
    let matrix = assemble_bilinear(dual_space, spec, &FnWeight(weight), true);
    let goal = Arc::clone(&spec.goal);
    let rhs = load_vector(dual_space, move |x| goal(x));
    let z = solve_spd(&matrix, &rhs)?;
    let mut coeffs = vec![T::zero(); dual_space.dof_count()];
    for (dof, c) in coeffs.iter_mut().enumerate() {
        if let Some(k) = dual_space.free_index(dof) {
            *c = z[k];
        }
    }
    DiscreteField::from_coefficients(dual_space, coeffs)
}

/// `\int density phi_i` for every free dof.
pub fn load_vector<T: Real>(space: &FESpace<T>, density: impl Fn(Point<T>) -> T) -> Vec<T> {
    let mesh = space.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let nl = space.degree().local_dofs();
    let mut b = vec![T::zero(); space.n_free()];
    for t in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let mut local = [T::zero(); 6];
        for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
            let g = density(geo.map(*lambda));
            let s = shape_functions(space.degree(), *lambda, &geo);
            for (i, li) in local.iter_mut().enumerate().take(nl) {
                *li += w * g * s.values[i];
            }
        }
        for (i, &d) in space.element_dofs(t).iter().enumerate() {
            if let Some(k) = space.free_index(d) {
                b[k] += local[i] * geo.area;
            }
        }
    }
    b
}

/// `g(u_h) = \int g u_h`.
pub fn goal_value<T: Real>(spec: &ProblemSpec<T>, u: &DiscreteField<T>) -> T {
    let g = Arc::clone(&spec.goal);
    u.integrate_weighted(move |x| g(x))
}

/// Energy seminorm squared, `(A grad v, grad v)`.
pub fn energy_norm_sq<T: Real>(spec: &ProblemSpec<T>, v: &DiscreteField<T>) -> T {
    let mesh = v.mesh();
    let rule = QuadratureRule::<T>::degree6();
    let mut total = T::zero();
    for t in 0..mesh.n_elements() {
        let geo = ElementGeometry::new(mesh, t);
        let mut local = T::zero();
        for (lambda, &w) in rule.barycentric.iter().zip(&rule.weights) {
            let x = geo.map(*lambda);
            let s = shape_functions(v.space().degree(), *lambda, &geo);
            let (_, g) = v.value_at_shape(t, &s);
            local += w * dot(mat_vec(&(spec.diffusion)(x), g), g);
        }
        total += local * geo.area;
    }
    total
}
