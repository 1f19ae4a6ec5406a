//! The manufactured sources rely on a finite-difference Laplacian. Here it is
//! checked against exact second derivatives from hyper-dual arithmetic.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use goafem::bench::{example1_exact, example2_exact, fd_laplacian, Example1Params, Example2Params, FD_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a + b e1 + c e2 + d e1 e2` with `e1^2 = e2^2 = 0`.
#[derive(Clone, Copy, Debug)]
struct HyperDual {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl HyperDual {
    fn constant(a: f64) -> Self {
        HyperDual {
            a,
            b: 0.0,
            c: 0.0,
            d: 0.0,
        }
    }

    fn variable(a: f64) -> Self {
        HyperDual {
            a,
            b: 1.0,
            c: 1.0,
            d: 0.0,
        }
    }

    /// Applies a scalar function with derivatives `f0, f1, f2` at `self.a`.
    fn apply(self, f0: f64, f1: f64, f2: f64) -> Self {
        HyperDual {
            a: f0,
            b: f1 * self.b,
            c: f1 * self.c,
            d: f1 * self.d + f2 * self.b * self.c,
        }
    }

    fn sin(self) -> Self {
        self.apply(self.a.sin(), self.a.cos(), -self.a.sin())
    }

    fn recip(self) -> Self {
        let r = 1.0 / self.a;
        self.apply(r, -r * r, 2.0 * r * r * r)
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        HyperDual {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
            d: self.d + o.d,
        }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        HyperDual {
            a: self.a - o.a,
            b: self.b - o.b,
            c: self.c - o.c,
            d: self.d - o.d,
        }
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        HyperDual {
            a: self.a * o.a,
            b: self.a * o.b + self.b * o.a,
            c: self.a * o.c + self.c * o.a,
            d: self.a * o.d + self.b * o.c + self.c * o.b + self.d * o.a,
        }
    }
}

fn k(v: f64) -> HyperDual {
    HyperDual::constant(v)
}

/// `1 / (2 |x - c|^2 + eps)`
fn bump(x: HyperDual, y: HyperDual, cx: f64, cy: f64, eps: f64) -> HyperDual {
    let (dx, dy) = (x - k(cx), y - k(cy));
    (k(2.0) * (dx * dx + dy * dy) + k(eps)).recip()
}

fn u1(p: Example1Params, x: HyperDual, y: HyperDual) -> HyperDual {
    (k(2.0 * PI) * x).sin()
        * (k(2.0 * PI) * y).sin()
        * (bump(x, y, Example1Params::X0, Example1Params::Y0, 1e-2) + bump(x, y, p.x1, p.y1, 1e-2))
}

fn u2(p: Example2Params, x: HyperDual, y: HyperDual) -> HyperDual {
    let w = k(p.omega * PI);
    (w * x).sin() * (w * y).sin() * bump(x, y, Example2Params::XP, Example2Params::YP, 1e-3)
}

fn exact_laplacian(u: impl Fn(HyperDual, HyperDual) -> HyperDual, x: [f64; 2]) -> f64 {
    let uxx = u(HyperDual::variable(x[0]), k(x[1])).d;
    let uyy = u(k(x[0]), HyperDual::variable(x[1])).d;
    uxx + uyy
}

fn random_points(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)])
        .collect()
}

#[test]
fn hyper_dual_matches_closed_form_on_polynomial() {
    // u = x^2 y^3: u_xx + u_yy = 2 y^3 + 6 x^2 y
    let u = |x: HyperDual, y: HyperDual| x * x * y * y * y;
    let lap = exact_laplacian(u, [0.3, 0.7]);
    assert!((lap - (2.0 * 0.343 + 6.0 * 0.09 * 0.7)).abs() < 1e-13);
}

/// Exact Laplacian, step-1e-4 and step-1e-5 differences at a point.
type Probe = Box<dyn Fn([f64; 2]) -> (f64, f64, f64)>;

#[test]
fn fd_laplacian_agrees_with_exact_derivatives() {
    let cases: Vec<(String, Probe)> = Example1Params::PRESETS
        .iter()
        .map(|&name| {
            let p = Example1Params::preset(name).unwrap();
            let u = example1_exact(p);
            (
                name.to_string(),
                Box::new(move |x: [f64; 2]| {
                    (
                        exact_laplacian(|a, b| u1(p, a, b), x),
                        fd_laplacian(u, x, FD_STEP),
                        fd_laplacian(u, x, 1e-5),
                    )
                }) as Probe,
            )
        })
        .chain(Example2Params::PRESETS.iter().map(|&name| {
            let p = Example2Params::preset(name).unwrap();
            let u = example2_exact(p);
            (
                name.to_string(),
                Box::new(move |x: [f64; 2]| {
                    (
                        exact_laplacian(|a, b| u2(p, a, b), x),
                        fd_laplacian(u, x, FD_STEP),
                        fd_laplacian(u, x, 1e-5),
                    )
                }) as Probe,
            )
        }))
        .collect();

    for (seed, (name, eval)) in cases.iter().enumerate() {
        let samples: Vec<_> = random_points(seed as u64, 100)
            .into_iter()
            .map(|x| (x, eval(x)))
            .collect();
        let sup = samples.iter().fold(1.0f64, |m, (_, (e, _, _))| m.max(e.abs()));
        // both stencils carry a rounding floor of about eps |u| / h^2, which
        // rules out pointwise relative checks where the Laplacian vanishes
        for (x, (exact, fd, fd_small)) in samples {
            assert!(
                (fd - exact).abs() <= 1e-6 * sup,
                "{name} at {x:?}: fd {fd} exact {exact}"
            );
            assert!(
                (fd_small - fd).abs() <= 1e-5 * sup,
                "{name} at {x:?}: {fd_small} vs {fd}"
            );
        }
    }
}
