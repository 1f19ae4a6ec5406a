//! Empirical checks of the convergence theory against a fine-mesh reference.
//!
//! The exact primal solution and the limiting dual (linearized about the
//! exact solution) are not computable; both are replaced by Galerkin
//! solutions on a mesh a few uniform levels finer than the finest run mesh.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::drive::IterationState;
use crate::error::{Error, Result};
use crate::estimate::{dual_indicators_weighted, primal_indicators, residual_weighted_by};
use crate::mesh::{uniform_refine, Mesh};
use crate::quadrature::gauss_legendre_unit;
use crate::real::Real;
use crate::space::{prolong, shape_functions, Degree, DiscreteField, ElementGeometry, FESpace};
use crate::system::{
    assemble_primal_residual, energy_norm_sq, goal_value, mass_diagonal, newton_solve, residual_norm, solve_dual,
    solve_dual_weighted, NewtonReport, ProblemSpec,
};

const REFERENCE_NEWTON_ITERS: usize = 25;

/// Burn-in iterations excluded when judging contraction ratios.
pub const BURN_IN: usize = 3;

/// Fine-mesh stand-ins for the exact primal and limiting dual solutions.
#[derive(Debug, Clone)]
pub struct ReferencePair<T: Real> {
    pub mesh: Arc<Mesh<T>>,
    pub u_ref: DiscreteField<T>,
    /// P1 dual about `u_ref` on the reference mesh.
    pub z_ref: DiscreteField<T>,
    pub goal: T,
    /// Primal estimator of `u_ref` on the reference mesh.
    pub eta_sq: T,
    pub newton: NewtonReport,
    geometry: Vec<ElementGeometry<T>>,
}

/// Refines the mesh of `finest` uniformly `refine_extra` times and solves
/// the primal (warm-started from `finest`) and dual problems there.
///
/// Newton stops at `newton_tol`, or at the rounding floor
/// `1e4 eps ||F(0)||` when that is larger.
pub fn build_reference<T: Real>(
    spec: &ProblemSpec<T>,
    finest: &DiscreteField<T>,
    refine_extra: usize,
    newton_tol: T,
) -> Result<ReferencePair<T>> {
    if refine_extra == 0 {
        return Err(Error::InvalidInput(
            "reference needs at least one extra uniform level".into(),
        ));
    }
    let mut mesh = Arc::clone(finest.mesh());
    for _ in 0..refine_extra {
        mesh = Arc::new(uniform_refine(&mesh)?);
    }
    let space = Arc::new(FESpace::new(&mesh, Degree::Linear));
    let guess = prolong(finest, &space)?;
    let (u_ref, newton) = newton_solve(spec, &space, &guess, newton_tol, REFERENCE_NEWTON_ITERS)?;
    // a tight absolute tolerance can sit below the rounding floor of large
    // solutions; a residual this far below the initial one is accepted
    let r0 = residual_norm(
        &space,
        &mass_diagonal(&space),
        &assemble_primal_residual(spec, &DiscreteField::zeros(&space))?,
    );
    let floor = T::lit(1e4) * T::epsilon() * r0;
    let last = newton.residuals.last().copied().unwrap_or(f64::NAN);
    if !newton.converged && !(last <= floor.as_f64()) {
        return Err(Error::NewtonFailure {
            iterations: newton.iterations,
            residual: last,
        });
    }
    let z_ref = solve_dual(spec, &u_ref, &space)?;
    let eta_sq = primal_indicators(spec, &u_ref)?.total();
    let geometry = (0..mesh.n_elements()).map(|t| ElementGeometry::new(&mesh, t)).collect();
    Ok(ReferencePair {
        goal: goal_value(spec, &u_ref),
        mesh,
        u_ref,
        z_ref,
        eta_sq,
        newton,
        geometry,
    })
}

impl<T: Real> ReferencePair<T> {
    /// Carries a P1 field from an ancestor mesh (or the reference mesh
    /// itself) onto the reference P1 space.
    pub fn lift(&self, field: &DiscreteField<T>) -> Result<DiscreteField<T>> {
        if field.mesh().id() == self.mesh.id() {
            return Ok(field.clone());
        }
        prolong(field, self.u_ref.space())
    }

    /// `||v - w||_E^2` for P1 fields on ancestors of the reference mesh.
    pub fn energy_distance_sq(&self, spec: &ProblemSpec<T>, v: &DiscreteField<T>, w: &DiscreteField<T>) -> Result<T> {
        let d = self.lift(v)?.difference(&self.lift(w)?)?;
        Ok(energy_norm_sq(spec, &d))
    }

    /// `b'(u_ref)` sampled on elements of an ancestor mesh.
    pub fn limiting_weight<'a>(&'a self, spec: &'a ProblemSpec<T>, coarse: &Mesh<T>) -> Result<LimitingWeight<'a, T>> {
        let map = self
            .mesh
            .ancestor_map(coarse)
            .ok_or_else(|| Error::IncompatibleMesh("reference mesh does not refine the given mesh".into()))?;
        let mut children = vec![Vec::new(); coarse.n_elements()];
        for (f, &c) in map.iter().enumerate() {
            children[c].push(f);
        }
        let geometry = (0..coarse.n_elements())
            .map(|t| ElementGeometry::new(coarse, t))
            .collect();
        Ok(LimitingWeight {
            reference: self,
            spec,
            children,
            geometry,
        })
    }
}

/// Point evaluation of `b'(u_ref)` at barycentric points of a coarse mesh.
pub struct LimitingWeight<'a, T: Real> {
    reference: &'a ReferencePair<T>,
    spec: &'a ProblemSpec<T>,
    children: Vec<Vec<usize>>,
    geometry: Vec<ElementGeometry<T>>,
}

impl<T: Real> LimitingWeight<'_, T> {
    pub fn at(&self, element: usize, lambda: [T; 3]) -> T {
        let x = self.geometry[element].map(lambda);
        // the descendant with the largest minimal barycentric coordinate contains x
        let mut best = (T::neg_infinity(), 0, [T::zero(); 3]);
        for &f in &self.children[element] {
            let geo = &self.reference.geometry[f];
            let third = T::lit(1.0 / 3.0);
            let c = geo.map([third; 3]);
            let d = [x[0] - c[0], x[1] - c[1]];
            let l: [T; 3] =
                std::array::from_fn(|i| third + geo.grad_lambda[i][0] * d[0] + geo.grad_lambda[i][1] * d[1]);
            let m = l[0].min(l[1]).min(l[2]);
            if m > best.0 {
                best = (m, f, l);
                if m >= T::zero() {
                    break;
                }
            }
        }
        let (_, f, mut l) = best;
        for v in &mut l {
            *v = v.max(T::zero());
        }
        let s = l[0] + l[1] + l[2];
        l = l.map(|v| v / s);
        let shape = shape_functions(Degree::Linear, l, &self.reference.geometry[f]);
        let (u, _) = self.reference.u_ref.value_at_shape(f, &shape);
        (self.spec.reaction_derivative)(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotonicityCheck {
    pub coarse_total: f64,
    pub fine_total: f64,
    pub passed: bool,
}

/// Primal estimator of `field` before and after prolongation to `fine_mesh`.
pub fn check_monotonicity<T: Real>(
    spec: &ProblemSpec<T>,
    field: &DiscreteField<T>,
    fine_mesh: &Arc<Mesh<T>>,
) -> Result<MonotonicityCheck> {
    if !fine_mesh.descends_from(field.mesh()) {
        return Err(Error::IncompatibleMesh(
            "fine mesh does not refine the field's mesh".into(),
        ));
    }
    let coarse_total = primal_indicators(spec, field)?.total().as_f64();
    let fine_space = Arc::new(FESpace::new(fine_mesh, Degree::Linear));
    let fine_total = primal_indicators(spec, &prolong(field, &fine_space)?)?.total().as_f64();
    Ok(MonotonicityCheck {
        coarse_total,
        fine_total,
        passed: fine_total <= coarse_total + 1e-10,
    })
}

/// Largest change of a primal indicator on elements that `fine_mesh`
/// (one refinement step) carries over unchanged from the field's mesh.
pub fn check_locality<T: Real>(
    spec: &ProblemSpec<T>,
    field: &DiscreteField<T>,
    fine_mesh: &Arc<Mesh<T>>,
) -> Result<f64> {
    let lineage = fine_mesh
        .lineage()
        .filter(|l| l.parent().id() == field.mesh().id())
        .ok_or_else(|| Error::IncompatibleMesh("fine mesh is not a one-step refinement of the field's mesh".into()))?;
    let before = primal_indicators(spec, field)?;
    let fine_space = Arc::new(FESpace::new(fine_mesh, Degree::Linear));
    let after = primal_indicators(spec, &prolong(field, &fine_space)?)?;
    let mut worst = 0.0f64;
    for (t, &carried) in lineage.carried().iter().enumerate() {
        if carried {
            let p = lineage.element_parent()[t];
            worst = worst.max((after.values()[t] - before.values()[p]).abs().as_f64());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalIdentity {
    /// `<R(u_j), z^j>` from element residuals and edge jumps, `z^j` the
    /// linearized dual with the secant operator between `u_j` and `u_ref`.
    pub strong: f64,
    /// The same pairing through the assembled weak residual.
    pub weak: f64,
    /// `<R(u_j), z_ref>` with the limiting dual about `u_ref`.
    pub limiting: f64,
    /// `g(u_ref) - g(u_j)`.
    pub goal_error: f64,
    /// `strong / goal_error`; 1 when both vanish to rounding.
    pub effectivity: f64,
    /// `limiting / goal_error`; only first-order accurate for nonlinear `b`.
    pub limiting_effectivity: f64,
}

/// Solves the dual problem on the reference mesh with the secant operator
/// `int_0^1 b'(u_j + s (u_ref - u_j)) ds` in place of `b'`.
pub fn linearized_dual<T: Real>(
    spec: &ProblemSpec<T>,
    u_j: &DiscreteField<T>,
    reference: &ReferencePair<T>,
) -> Result<DiscreteField<T>> {
    let u = reference.lift(u_j)?;
    let space = reference.u_ref.space();
    let (nodes, weights) = gauss_legendre_unit::<T>(5);
    let (cj, cr) = (u.coefficients(), reference.u_ref.coefficients());
    solve_dual_weighted(spec, space, |t, l| {
        let d = space.element_dofs(t);
        let at = |c: &[T]| l[0] * c[d[0]] + l[1] * c[d[1]] + l[2] * c[d[2]];
        let (a, b) = (at(cj), at(cr));
        nodes
            .iter()
            .zip(&weights)
            .map(|(&s, &w)| w * (spec.reaction_derivative)(a + s * (b - a)))
            .sum()
    })
}

/// Compares the residual representation of the goal error with the goal
/// error itself, both measured against the reference pair.
pub fn check_goal_identity<T: Real>(
    spec: &ProblemSpec<T>,
    u_j: &DiscreteField<T>,
    reference: &ReferencePair<T>,
) -> Result<GoalIdentity> {
    let u = reference.lift(u_j)?;
    let z = linearized_dual(spec, &u, reference)?;
    let pair = |w: &DiscreteField<T>| -> Result<f64> {
        Ok(residual_weighted_by(spec, &u, w)?.iter().map(|v| v.as_f64()).sum())
    };
    let strong = pair(&z)?;
    let limiting = pair(&reference.z_ref)?;
    let r = assemble_primal_residual(spec, &u)?;
    let weak = -r
        .iter()
        .zip(z.free_coefficients())
        .map(|(a, b)| (*a * b).as_f64())
        .sum::<f64>();
    let (g_ref, g_j) = (reference.goal.as_f64(), goal_value(spec, &u).as_f64());
    let goal_error = g_ref - g_j;
    // below this both sides are rounding noise
    let noise = 64.0 * T::epsilon().as_f64() * (g_ref.abs() + g_j.abs());
    let ratio = |x: f64| {
        if goal_error.abs() <= noise && x.abs() <= noise {
            1.0
        } else {
            x / goal_error
        }
    };
    Ok(GoalIdentity {
        strong,
        weak,
        limiting,
        goal_error,
        effectivity: ratio(strong),
        limiting_effectivity: ratio(limiting),
    })
}

/// Smallest `Lambda` with `||u - u2||^2 <= Lambda ||u - u1||^2 - ||u2 - u1||^2`
/// for every consecutive pair of iterates, `u_ref` standing in for `u`.
pub fn quasi_orthogonality_probe<T: Real>(
    spec: &ProblemSpec<T>,
    states: &[IterationState<T>],
    reference: &ReferencePair<T>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(states.len().saturating_sub(1));
    for pair in states.windows(2) {
        let (u1, u2) = (&pair[0].primal, &pair[1].primal);
        let e1 = reference.energy_distance_sq(spec, &reference.u_ref, u1)?.as_f64();
        let e2 = reference.energy_distance_sq(spec, &reference.u_ref, u2)?.as_f64();
        let d = reference.energy_distance_sq(spec, u2, u1)?.as_f64();
        out.push(lambda_estimate(e1, e2, d)?);
    }
    Ok(out)
}

/// `(e2 + d) / e1`, defined as 1 when nothing changed.
pub fn lambda_estimate(e1: f64, e2: f64, d: f64) -> Result<f64> {
    if e1 == 0.0 {
        if e2 == 0.0 && d == 0.0 {
            return Ok(1.0);
        }
        return Err(Error::InsufficientData(
            "coarse iterate coincides with the reference; quasi-orthogonality ratio undefined".into(),
        ));
    }
    Ok((e2 + d) / e1)
}

/// Ingredients of the combined quasi-error at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuasiErrorParts {
    /// `||z_hat - z_hat_j||_E^2`.
    pub dual_error_sq: f64,
    /// Limiting dual estimator `zeta^2(z_hat_j)`.
    pub zeta_sq: f64,
    /// `||u - u_j||_E^2`.
    pub primal_error_sq: f64,
    pub eta_sq: f64,
    /// `|g(u) - g(u_j)|`.
    pub goal_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractionReport {
    pub gamma: f64,
    pub gamma_p: f64,
    pub pi: f64,
    pub parts: Vec<QuasiErrorParts>,
    pub qbar_sq: Vec<f64>,
    /// `qbar_sq[j] / qbar_sq[j - 1]` for `j >= 1`.
    pub ratios: Vec<f64>,
    pub goal_over_qbar: Vec<f64>,
}

impl ContractionReport {
    pub fn from_parts(parts: Vec<QuasiErrorParts>, gamma: f64, gamma_p: f64, pi: f64) -> Result<Self> {
        for w in [gamma, gamma_p, pi] {
            if !(w > 0.0) {
                return Err(Error::InvalidInput(format!("quasi-error weight {w} must be positive")));
            }
        }
        let qbar_sq: Vec<f64> = parts
            .iter()
            .map(|p| p.dual_error_sq + gamma * p.zeta_sq + pi * p.primal_error_sq + pi * gamma_p * p.eta_sq)
            .collect();
        let ratios = qbar_sq.windows(2).map(|w| w[1] / w[0]).collect();
        let goal_over_qbar = parts.iter().zip(&qbar_sq).map(|(p, q)| p.goal_error / q).collect();
        Ok(ContractionReport {
            gamma,
            gamma_p,
            pi,
            parts,
            qbar_sq,
            ratios,
            goal_over_qbar,
        })
    }

    /// Largest ratio `qbar_sq[j] / qbar_sq[j-1]` with `j > BURN_IN`.
    pub fn max_ratio_after_burn_in(&self) -> Option<f64> {
        self.ratios.iter().skip(BURN_IN).copied().reduce(f64::max)
    }

    /// Spread `max / min` of the goal-error to quasi-error ratios.
    pub fn goal_ratio_spread(&self) -> Option<f64> {
        let positive: Vec<f64> = self.goal_over_qbar.iter().copied().filter(|r| *r > 0.0).collect();
        let max = positive.iter().copied().reduce(f64::max)?;
        let min = positive.iter().copied().reduce(f64::min)?;
        Some(max / min)
    }
}

/// Combined quasi-error per iteration from stored run states.
pub fn contraction_report<T: Real>(
    spec: &ProblemSpec<T>,
    states: &[IterationState<T>],
    reference: &ReferencePair<T>,
    gamma: f64,
    gamma_p: f64,
    pi: f64,
) -> Result<ContractionReport> {
    if states.is_empty() {
        return Err(Error::InsufficientData(
            "contraction report needs stored iterates".into(),
        ));
    }
    let mut parts = Vec::with_capacity(states.len());
    for s in states {
        let weight = reference.limiting_weight(spec, &s.mesh)?;
        let space = s.primal.space();
        let z_hat = solve_dual_weighted(spec, space, |t, l| weight.at(t, l))?;
        let zeta = dual_indicators_weighted(spec, &z_hat, |t, l| weight.at(t, l))?;
        parts.push(QuasiErrorParts {
            dual_error_sq: reference.energy_distance_sq(spec, &reference.z_ref, &z_hat)?.as_f64(),
            zeta_sq: zeta.total().as_f64(),
            primal_error_sq: reference
                .energy_distance_sq(spec, &reference.u_ref, &s.primal)?
                .as_f64(),
            eta_sq: s.primal_indicators.total().as_f64(),
            goal_error: (reference.goal - s.goal_value).abs().as_f64(),
        });
    }
    ContractionReport::from_parts(parts, gamma, gamma_p, pi)
}

/// One row of `verify.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub iter: usize,
    #[serde(rename = "Qbar_sq")]
    pub qbar_sq: f64,
    pub ratio: Option<f64>,
    pub lambda_g_est: Option<f64>,
    #[serde(rename = "goal_over_Qbar")]
    pub goal_over_qbar: f64,
    pub effectivity: f64,
}

pub const VERIFY_HEADER: [&str; 6] = [
    "iter",
    "Qbar_sq",
    "ratio",
    "lambda_g_est",
    "goal_over_Qbar",
    "effectivity",
];

/// Runs every probe over a stored run and collects the `verify.csv` rows.
pub fn verify_rows<T: Real>(
    spec: &ProblemSpec<T>,
    states: &[IterationState<T>],
    reference: &ReferencePair<T>,
    weights: (f64, f64, f64),
) -> Result<(Vec<VerifyRow>, ContractionReport)> {
    let report = contraction_report(spec, states, reference, weights.0, weights.1, weights.2)?;
    let lambdas = quasi_orthogonality_probe(spec, states, reference)?;
    let mut rows = Vec::with_capacity(states.len());
    for (j, s) in states.iter().enumerate() {
        let identity = check_goal_identity(spec, &s.primal, reference)?;
        rows.push(VerifyRow {
            iter: j,
            qbar_sq: report.qbar_sq[j],
            ratio: j.checked_sub(1).map(|i| report.ratios[i]),
            lambda_g_est: j.checked_sub(1).map(|i| lambdas[i]),
            goal_over_qbar: report.goal_over_qbar[j],
            effectivity: identity.effectivity,
        });
    }
    Ok((rows, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drive::{run, RunConfig};
    use crate::mesh::{build_initial_mesh, refine};
    use crate::space::build_space;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(space: &Arc<FESpace<f64>>, seed: u64) -> DiscreteField<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = DiscreteField::from_coefficients(
            space,
            (0..space.dof_count()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        u.clear_boundary();
        u
    }

    #[test]
    fn synthetic_geometric_decay() {
        let parts: Vec<QuasiErrorParts> = (0..6)
            .map(|k| {
                let s = 0.25f64.powi(k);
                QuasiErrorParts {
                    dual_error_sq: s,
                    zeta_sq: 2.0 * s,
                    primal_error_sq: 3.0 * s,
                    eta_sq: 4.0 * s,
                    goal_error: 0.1 * s,
                }
            })
            .collect();
        let r = ContractionReport::from_parts(parts, 1.0, 1.0, 1.0).unwrap();
        assert!(r.ratios.iter().all(|q| (q - 0.25).abs() < 1e-15));
        assert!((r.goal_ratio_spread().unwrap() - 1.0).abs() < 1e-12);
        assert!(r.max_ratio_after_burn_in().unwrap() < 1.0);
        assert!(ContractionReport::from_parts(vec![], 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn lambda_conventions() {
        assert_eq!(lambda_estimate(0.0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(lambda_estimate(2.0, 2.0, 0.0).unwrap(), 1.0);
        assert!(lambda_estimate(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn monotonicity_and_locality() {
        let coarse = Arc::new(build_initial_mesh::<f64>(4).unwrap());
        let space = build_space(&coarse, 1).unwrap();
        let spec = ProblemSpec::default().with_source(|x: [f64; 2]| x[0]);
        let u = random_field(&space, 1);
        let fine = Arc::new(refine(&coarse, &[3, 9]).unwrap());
        let check = check_monotonicity(&spec, &u, &fine).unwrap();
        assert!(check.passed && check.fine_total <= check.coarse_total);
        assert!(check_locality(&spec, &u, &fine).unwrap() <= 1e-12);
        let zero = check_monotonicity(&ProblemSpec::default(), &DiscreteField::zeros(&space), &fine).unwrap();
        assert_eq!((zero.coarse_total, zero.fine_total), (0.0, 0.0));
        let other = Arc::new(build_initial_mesh::<f64>(4).unwrap());
        assert!(check_monotonicity(&spec, &u, &other).is_err());
    }

    #[test]
    fn energy_norm_is_positive() {
        let mesh = Arc::new(build_initial_mesh::<f64>(5).unwrap());
        let space = build_space(&mesh, 1).unwrap();
        let spec = ProblemSpec::default().with_constant_diffusion(1e-3);
        for seed in 0..10 {
            assert!(energy_norm_sq(&spec, &random_field(&space, seed)) > 0.0);
        }
    }

    #[test]
    fn linear_goal_identity_is_exact() {
        let spec = ProblemSpec::default()
            .with_source(|x: [f64; 2]| 10.0 * (-(x[0] - 0.3).powi(2) * 40.0 - (x[1] - 0.6).powi(2) * 40.0).exp())
            .with_goal(|x: [f64; 2]| (-(x[0] - 0.7).powi(2) * 30.0 - (x[1] - 0.4).powi(2) * 30.0).exp());
        let config = RunConfig {
            max_iterations: 4,
            initial_elements: 32,
            ..RunConfig::default()
        };
        let out = run(&spec, &config, None).unwrap();
        let last = out.states.last().unwrap();
        let reference = build_reference(&spec, &last.primal, 2, 1e-12).unwrap();
        for s in &out.states {
            let id = check_goal_identity(&spec, &s.primal, &reference).unwrap();
            assert!((id.effectivity - 1.0).abs() < 1e-8, "{id:?}");
            assert!((id.limiting - id.strong).abs() <= 1e-12 * id.strong.abs());
            assert!((id.strong - id.weak).abs() <= 1e-10 * id.weak.abs());
        }
        let same = check_goal_identity(&spec, &reference.u_ref, &reference).unwrap();
        assert_eq!(same.effectivity, 1.0);
        // Pythagoras for the symmetric linear problem, up to the quadrature
        // error of the load vectors
        for l in quasi_orthogonality_probe(&spec, &out.states, &reference).unwrap() {
            assert!((l - 1.0).abs() < 1e-5, "{l}");
        }
        assert!(out
            .states
            .iter()
            .all(|s| reference.eta_sq < s.primal_indicators.total()));
    }

    #[test]
    fn secant_dual_represents_semilinear_goal_error() {
        let spec = ProblemSpec::default()
            .with_constant_diffusion(1e-2)
            .with_reaction(|s: f64| 3.0 * s * s * s, |s: f64| 9.0 * s * s)
            .with_source(|x: [f64; 2]| 40.0 * (-(x[0] - 0.4).powi(2) * 20.0 - (x[1] - 0.5).powi(2) * 20.0).exp())
            .with_goal(|x: [f64; 2]| (-(x[0] - 0.6).powi(2) * 20.0 - (x[1] - 0.5).powi(2) * 20.0).exp());
        let config = RunConfig {
            max_iterations: 3,
            initial_elements: 32,
            ..RunConfig::default()
        };
        let out = run(&spec, &config, None).unwrap();
        let reference = build_reference(&spec, &out.states.last().unwrap().primal, 1, 1e-12).unwrap();
        for s in &out.states {
            let id = check_goal_identity(&spec, &s.primal, &reference).unwrap();
            assert!((id.effectivity - 1.0).abs() < 1e-6, "{id:?}");
            assert!(id.limiting != id.strong);
        }
    }

    #[test]
    fn limiting_weight_matches_reference_on_its_own_mesh() {
        let spec = ProblemSpec::default()
            .with_constant_diffusion(1e-2)
            .with_reaction(|s: f64| s * s * s, |s: f64| 3.0 * s * s)
            .with_source(|x: [f64; 2]| 5.0 + x[0])
            .with_goal(|_| 1.0);
        let mesh = Arc::new(build_initial_mesh::<f64>(3).unwrap());
        let space = build_space(&mesh, 1).unwrap();
        let (u, _) = newton_solve(&spec, &space, &DiscreteField::zeros(&space), 1e-10, 50).unwrap();
        let reference = build_reference(&spec, &u, 1, 1e-10).unwrap();
        let w = reference.limiting_weight(&spec, &mesh).unwrap();
        // a coarse point maps to the reference value at the same location
        let lambda = [0.2, 0.3, 0.5];
        for t in [0, 7, 17] {
            let x = ElementGeometry::new(&mesh, t).map(lambda);
            let fine = (0..reference.mesh.n_elements())
                .find_map(|f| {
                    let g = ElementGeometry::new(&reference.mesh, f);
                    let p = g.points;
                    let l: [f64; 3] = std::array::from_fn(|i| {
                        let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
                        ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / (2.0 * g.area)
                    });
                    l.iter().all(|&v| v >= -1e-14).then_some((f, l))
                })
                .unwrap();
            let expected = 3.0
                * reference
                    .u_ref
                    .evaluate(fine.0, fine.1.map(|v| v.max(0.0)))
                    .unwrap()
                    .0
                    .powi(2);
            assert!((w.at(t, lambda) - expected).abs() < 1e-12);
        }
    }
}
