//! Benchmark problems with manufactured solutions, the reference goal
//! oracle and convergence-slope fitting.
//!
//! Both examples share `A = I/1000`, `b(s) = 3 s^3` on the unit square. The
//! source is `f = -Laplace(u)/1000 + 3 u^3`, with the Laplacian of the exact
//! solution taken numerically (see [`fd_laplacian`]).

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::drive::ConvergenceRow;
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_unit;
use crate::real::{Point, Real};
use crate::system::ProblemSpec;

pub const DIFFUSION: f64 = 1e-3;
/// Step of the finite-difference Laplacian used for manufactured sources.
pub const FD_STEP: f64 = 1e-4;

type Exact = Arc<dyn Fn(Point<f64>) -> f64 + Send + Sync>;

/// Single Gaussian goal at (0.7, 0.7); primal bumps at (0.7, 0.7) and `(x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub a: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Example1Params {
    pub const X0: f64 = 0.7;
    pub const Y0: f64 = 0.7;
    pub const XD: f64 = 0.7;
    pub const YD: f64 = 0.7;

    pub const PRESETS: [&'static str; 4] = ["266", "466", "233", "433"];

    /// Named parameter sets: `<a/100><x1*10><y1*10>`.
    pub fn preset(name: &str) -> Result<Self> {
        let (a, c) = match name {
            "266" => (200.0, 0.6),
            "466" => (400.0, 0.6),
            "233" => (200.0, 0.3),
            "433" => (400.0, 0.3),
            _ => return Err(unknown_preset(name, &Self::PRESETS)),
        };
        Ok(Example1Params { a, x1: c, y1: c })
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Gaussian intensity a = {} must be positive",
                self.a
            )));
        }
        check_center(self.x1, self.y1)
    }
}

/// Two-Gaussian goal at (0.7, 0.7) and `(x1, y1)`; one primal spike at
/// (0.3, 0.3) modulated by `sin(omega pi x) sin(omega pi y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Example2Params {
    pub a: f64,
    pub x1: f64,
    pub y1: f64,
    pub omega: f64,
}

impl Example2Params {
    pub const X0: f64 = 0.7;
    pub const Y0: f64 = 0.7;
    pub const XP: f64 = 0.3;
    pub const YP: f64 = 0.3;

    pub const PRESETS: [&'static str; 6] = ["w1x7", "w2x7", "w1x5", "w2x5", "w1x4", "w2x4"];

    pub fn preset(name: &str) -> Result<Self> {
        let (x1, omega) = match name {
            "w1x7" => (0.7, 1.0),
            "w2x7" => (0.7, 2.0),
            "w1x5" => (0.55, 1.0),
            "w2x5" => (0.55, 2.0),
            "w1x4" => (0.4, 1.0),
            "w2x4" => (0.4, 2.0),
            _ => return Err(unknown_preset(name, &Self::PRESETS)),
        };
        Ok(Example2Params {
            a: 400.0,
            x1,
            y1: 0.3,
            omega,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::InvalidInput(format!(
                "Gaussian intensity a = {} must be positive",
                self.a
            )));
        }
        if !(self.omega.is_finite() && self.omega.fract() == 0.0 && self.omega != 0.0) {
            return Err(Error::InvalidInput(format!(
                "omega = {} must be a nonzero integer for the boundary condition to hold",
                self.omega
            )));
        }
        check_center(self.x1, self.y1)
    }
}

fn unknown_preset(name: &str, known: &[&str]) -> Error {
    Error::InvalidInput(format!(
        "unknown preset `{name}` (expected one of {})",
        known.join(", ")
    ))
}

fn check_center(x: f64, y: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0) {
        return Err(Error::InvalidInput(format!(
            "center ({x}, {y}) outside the unit square"
        )));
    }
    Ok(())
}

#[inline]
fn r2(x: Point<f64>, cx: f64, cy: f64) -> f64 {
    (x[0] - cx).powi(2) + (x[1] - cy).powi(2)
}

pub fn example1_exact(p: Example1Params) -> impl Fn(Point<f64>) -> f64 + Send + Sync + Copy {
    move |x| {
        let s = (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
        let bumps =
            1.0 / (2.0 * r2(x, Example1Params::X0, Example1Params::Y0) + 1e-2) + 1.0 / (2.0 * r2(x, p.x1, p.y1) + 1e-2);
        s * bumps
    }
}

pub fn example1_goal(p: Example1Params) -> impl Fn(Point<f64>) -> f64 + Send + Sync + Copy {
    move |x| p.a * (-p.a * r2(x, Example1Params::XD, Example1Params::YD)).exp()
}

pub fn example2_exact(p: Example2Params) -> impl Fn(Point<f64>) -> f64 + Send + Sync + Copy {
    move |x| {
        let s = (p.omega * PI * x[0]).sin() * (p.omega * PI * x[1]).sin();
        s / (2.0 * r2(x, Example2Params::XP, Example2Params::YP) + 1e-3)
    }
}

pub fn example2_goal(p: Example2Params) -> impl Fn(Point<f64>) -> f64 + Send + Sync + Copy {
    move |x| p.a * (-p.a * r2(x, Example2Params::X0, Example2Params::Y0)).exp() + p.a * (-p.a * r2(x, p.x1, p.y1)).exp()
}

/// Laplacian by the fourth-order five-point stencil per axis, improved by
/// one Richardson step `(16 D(h/2) - D(h)) / 15`.
pub fn fd_laplacian(u: impl Fn(Point<f64>) -> f64, x: Point<f64>, h: f64) -> f64 {
    let stencil = |h: f64| {
        let c = u(x);
        let axis = |k: usize| {
            let at = |s: f64| {
                let mut p = x;
                p[k] += s;
                u(p)
            };
            -at(2.0 * h) + 16.0 * at(h) - 30.0 * c + 16.0 * at(-h) - at(-2.0 * h)
        };
        (axis(0) + axis(1)) / (12.0 * h * h)
    };
    (16.0 * stencil(0.5 * h) - stencil(h)) / 15.0
}

/// Builds the semilinear benchmark spec from an exact solution and a goal
/// density given in `f64`.
fn semilinear_spec<T: Real>(exact: Exact, goal: Exact) -> ProblemSpec<T> {
    let u_src = Arc::clone(&exact);
    let source = move |x: Point<T>| {
        let xf = [x[0].as_f64(), x[1].as_f64()];
        let u = u_src(xf);
        T::lit(-DIFFUSION * fd_laplacian(&*u_src, xf, FD_STEP) + 3.0 * u * u * u)
    };
    let to_t = |f: Exact| move |x: Point<T>| T::lit(f([x[0].as_f64(), x[1].as_f64()]));
    let three = T::lit(3.0);
    let nine = T::lit(9.0);
    ProblemSpec::default()
        .with_constant_diffusion(T::lit(DIFFUSION))
        .with_reaction(move |s| three * s * s * s, move |s| nine * s * s)
        .with_source(source)
        .with_goal(to_t(goal))
        .with_exact_solution(to_t(exact))
}

pub fn make_example1<T: Real>(params: Example1Params) -> Result<ProblemSpec<T>> {
    params.validate()?;
    Ok(semilinear_spec(
        Arc::new(example1_exact(params)),
        Arc::new(example1_goal(params)),
    ))
}

pub fn make_example2<T: Real>(params: Example2Params) -> Result<ProblemSpec<T>> {
    params.validate()?;
    Ok(semilinear_spec(
        Arc::new(example2_exact(params)),
        Arc::new(example2_goal(params)),
    ))
}

/// Which benchmark family a preset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleId {
    Ex1,
    Ex2,
}

/// Spec for a named preset of either example.
pub fn make_preset<T: Real>(example: ExampleId, preset: &str) -> Result<ProblemSpec<T>> {
    match example {
        ExampleId::Ex1 => make_example1(Example1Params::preset(preset)?),
        ExampleId::Ex2 => make_example2(Example2Params::preset(preset)?),
    }
}

const REFERENCE_RTOL: f64 = 1e-9;
const REFERENCE_NODES: usize = 8;
const REFERENCE_MAX_CELLS: usize = 1024;

/// `\int g u` for the spec's exact solution, by tensor Gauss-Legendre
/// quadrature on uniform grids of `n x n` cells, doubling `n` until two
/// successive values agree to relative `1e-9`.
pub fn reference_goal<T: Real>(spec: &ProblemSpec<T>) -> Result<f64> {
    reference_goal_with_tolerance(spec, REFERENCE_RTOL)
}

pub fn reference_goal_with_tolerance<T: Real>(spec: &ProblemSpec<T>, rtol: f64) -> Result<f64> {
    let exact = spec
        .exact_solution
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("reference goal needs an exact solution".into()))?;
    let integrand = |x: Point<f64>| {
        let p = [T::lit(x[0]), T::lit(x[1])];
        (spec.goal)(p).as_f64() * exact(p).as_f64()
    };
    let mut previous = tensor_gauss(&integrand, 4);
    let mut n = 8;
    while n <= REFERENCE_MAX_CELLS {
        let value = tensor_gauss(&integrand, n);
        let change = (value - previous).abs();
        if change <= rtol * value.abs() || change <= f64::MIN_POSITIVE {
            return Ok(value);
        }
        previous = value;
        n *= 2;
    }
    Err(Error::OracleFailure(format!(
        "goal quadrature did not settle to relative {rtol:e} on {REFERENCE_MAX_CELLS}^2 cells"
    )))
}

fn tensor_gauss(f: &impl Fn(Point<f64>) -> f64, cells: usize) -> f64 {
    let (x, w) = gauss_legendre_unit::<f64>(REFERENCE_NODES);
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    for i in 0..cells {
        let mut row = 0.0;
        for j in 0..cells {
            let mut cell = 0.0;
            for (xa, wa) in x.iter().zip(&w) {
                for (xb, wb) in x.iter().zip(&w) {
                    cell += wa * wb * f([(i as f64 + xa) * h, (j as f64 + xb) * h]);
                }
            }
            row += cell;
        }
        total += row;
    }
    total * h * h
}

/// Least-squares slope of `log(goal_error)` against `log(n_elements)` over
/// the last `window` rows.
pub fn fit_slope(rows: &[ConvergenceRow], window: usize) -> Result<f64> {
    let start = rows.len().saturating_sub(window);
    let points: Vec<(f64, f64)> = rows[start..]
        .iter()
        .filter_map(|r| r.goal_error.map(|e| (r.n_elements as f64, e)))
        .collect();
    fit_power_law(&points)
}

/// Slope of the log-log least-squares line through `(n, error)` pairs.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 3 || points.iter().any(|&(n, e)| !(n > 0.0 && e > 0.0)) {
        return Err(Error::InsufficientData(format!(
            "slope fit needs at least 3 rows with positive error, got {}",
            points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).count()
        )));
    }
    let m = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(n, e)| (a + n.ln(), b + e.ln()));
    let (mx, my) = (sx / m, sy / m);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(n, e) in points {
        let dx = n.ln() - mx;
        sxy += dx * (e.ln() - my);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all rows have the same element count".into()));
    }
    Ok(sxy / sxx)
}
