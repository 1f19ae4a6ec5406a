//! Quadrature on the reference triangle, on edges and on tensor grids.

// tabulated rule constants are kept as published
#![allow(clippy::excessive_precision)]

use crate::real::Real;

/// Symmetric rule on a triangle. Weights are normalized to sum to one and
/// must be scaled by the element area.
#[derive(Debug, Clone)]
pub struct QuadratureRule<T> {
    pub barycentric: Vec<[T; 3]>,
    pub weights: Vec<T>,
    /// Highest total polynomial degree integrated exactly.
    pub exactness: u32,
}

impl<T: Real> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// 12-point rule exact for polynomials of degree 6 (Dunavant).
    pub fn degree6() -> Self {
        const ORBIT_A: (f64, f64) = (0.501_426_509_658_179_157_4, 0.116_786_275_726_379_366_0);
        const ORBIT_B: (f64, f64) = (0.873_821_971_016_995_543_3, 0.050_844_906_370_206_816_92);
        const ORBIT_C: (f64, f64, f64) = (
            0.053_145_049_844_816_947_35,
            0.310_352_451_033_784_405_4,
            0.082_851_075_618_373_575_19,
        );
        let mut barycentric = Vec::with_capacity(12);
        let mut weights = Vec::with_capacity(12);
        for (a, w) in [ORBIT_A, ORBIT_B] {
            let b = 0.5 * (1.0 - a);
            for p in [[a, b, b], [b, a, b], [b, b, a]] {
                barycentric.push(p.map(T::lit));
                weights.push(T::lit(w));
            }
        }
        let (c, d, w) = ORBIT_C;
        let e = 1.0 - c - d;
        for p in [[c, d, e], [c, e, d], [d, c, e], [d, e, c], [e, c, d], [e, d, c]] {
            barycentric.push(p.map(T::lit));
            weights.push(T::lit(w));
        }
        QuadratureRule {
            barycentric,
            weights,
            exactness: 6,
        }
    }
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w) = gauss_legendre(n);
    (
        x.iter().map(|&xi| T::lit(0.5 * (xi + 1.0))).collect(),
        w.iter().map(|&wi| T::lit(0.5 * wi)).collect(),
    )
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn weights_positive_and_normalized() {
        let q = QuadratureRule::<f64>::degree6();
        assert_eq!(q.len(), 12);
        assert!(q.weights.iter().all(|&w| w > 0.0));
        let s: f64 = q.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        for p in &q.barycentric {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_for_all_monomials_up_to_degree_six() {
        let q = QuadratureRule::<f64>::degree6();
        for a in 0..=6u32 {
            for b in 0..=(6 - a) {
                for c in 0..=(6 - a - b) {
                    // normalized: a! b! c! 2 / (a+b+c+2)!
                    let exact = factorial(a) * factorial(b) * factorial(c) * 2.0 / factorial(a + b + c + 2);
                    let approx: f64 = q
                        .barycentric
                        .iter()
                        .zip(&q.weights)
                        .map(|(l, w)| w * l[0].powi(a as i32) * l[1].powi(b as i32) * l[2].powi(c as i32))
                        .sum();
                    assert!(
                        ((approx - exact) / exact).abs() < 1e-14,
                        "monomial ({a},{b},{c}): {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..=10 {
            let (x, w) = gauss_legendre(n);
            for k in 0..(2 * n) {
                let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((approx - exact).abs() < 1e-14, "n={n} k={k}");
            }
        }
    }
}
