//! Compressed sparse rows and a direct SPD solver.
//!
//! The solver reorders the matrix with reverse Cuthill-McKee and factors the
//! resulting variable-band (skyline) profile with a row-oriented Cholesky.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::real::Real;

/// Collects `(row, col, value)` contributions and sums duplicates after
/// sorting by `(row, col)`, so the result does not depend on hashing.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Real> TripletBuilder<T> {
    pub fn new(n: usize) -> Self {
        TripletBuilder { n, entries: Vec::new() }
    }

    pub fn with_capacity(n: usize, capacity: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(capacity),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix<T> {
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut cols = Vec::with_capacity(self.entries.len());
        let mut vals: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *vals.last_mut().expect("entry exists") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.n {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            cols,
            vals,
        }
    }
}

/// Square matrix in compressed sparse row format with sorted columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).fold(T::zero(), |a, b| a + b))
            .collect()
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn max_abs(&self) -> T {
        self.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        self.mul_vec(y).iter().zip(x).map(|(&a, &b)| a * b).sum()
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity graph.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee<T: Real>(a: &CsrMatrix<T>) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut neighbors = Vec::new();
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited node remains");
        let start = pseudo_peripheral(a, seed, &degree, &visited);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            neighbors.clear();
            neighbors.extend(a.row(v).map(|(j, _)| j).filter(|&j| !visited[j]));
            neighbors.sort_by_key(|&j| (degree[j], j));
            for &j in &neighbors {
                visited[j] = true;
                queue.push_back(j);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral<T: Real>(a: &CsrMatrix<T>, seed: usize, degree: &[usize], blocked: &[bool]) -> usize {
    let mut current = seed;
    let mut current_ecc = 0;
    for _ in 0..8 {
        let (ecc, last_level) = bfs_levels(a, current, blocked);
        if ecc <= current_ecc && current != seed {
            break;
        }
        current_ecc = ecc;
        let next = *last_level
            .iter()
            .min_by_key(|&&j| (degree[j], j))
            .expect("last level is nonempty");
        if next == current {
            break;
        }
        current = next;
    }
    current
}

fn bfs_levels<T: Real>(a: &CsrMatrix<T>, start: usize, blocked: &[bool]) -> (usize, Vec<usize>) {
    let n = a.dim();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut frontier = vec![start];
    let mut depth = 0;
    loop {
        let mut next = Vec::new();
        for &v in &frontier {
            for (j, _) in a.row(v) {
                if level[j] == usize::MAX && !blocked[j] {
                    level[j] = depth + 1;
                    next.push(j);
                }
            }
        }
        if next.is_empty() {
            return (depth, frontier);
        }
        frontier = next;
        depth += 1;
    }
}

/// Cholesky factor of a symmetrically permuted matrix in skyline storage.
#[derive(Debug, Clone)]
pub struct SkylineCholesky<T> {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SkylineCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inverse = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        // first nonzero column of each permuted row (lower triangle)
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inverse[old];
            for (j_old, _) in a.row(old) {
                let j = inverse[j_old];
                if j < i {
                    first[i] = first[i].min(j);
                } else if i < j {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut values = vec![T::zero(); start[n]];
        for old in 0..n {
            let i = inverse[old];
            for (j_old, v) in a.row(old) {
                let j = inverse[j_old];
                if j <= i {
                    values[start[i] + (j - first[i])] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let si = start[i];
            for j in fi..i {
                let fj = first[j];
                let sj = start[j];
                let k0 = fi.max(fj);
                let len = j - k0;
                let li = &values[si + (k0 - fi)..si + (k0 - fi) + len];
                let lj = &values[sj + (k0 - fj)..sj + (k0 - fj) + len];
                let s: T = li.iter().zip(lj).fold(T::zero(), |acc, (&x, &y)| acc + x * y);
                let diag_j = values[sj + (j - fj)];
                let idx = si + (j - fi);
                values[idx] = (values[idx] - s) / diag_j;
            }
            let row = &values[si..si + (i - fi)];
            let s: T = row.iter().fold(T::zero(), |acc, &x| acc + x * x);
            let idx = si + (i - fi);
            let d = values[idx] - s;
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::IndefiniteSystem {
                    pivot: perm[i],
                    value: d.as_f64(),
                });
            }
            values[idx] = d.sqrt();
        }
        Ok(SkylineCholesky {
            perm,
            first,
            start,
            values,
        })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.perm.len();
        let mut y: Vec<T> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let si = self.start[i];
            let row = &self.values[si..si + (i - fi)];
            let s: T = row.iter().zip(&y[fi..i]).fold(T::zero(), |acc, (&l, &v)| acc + l * v);
            y[i] = (y[i] - s) / self.values[si + (i - fi)];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let si = self.start[i];
            y[i] /= self.values[si + (i - fi)];
            let yi = y[i];
            for (k, &l) in self.values[si..si + (i - fi)].iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![T::zero(); n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn profile_size(&self) -> usize {
        self.values.len()
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Solves an SPD system with a skyline Cholesky factorization followed by
/// iterative refinement until the relative residual is at most `1e-12`
/// (or stops improving).
pub fn solve_spd<T: Real>(a: &CsrMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    if a.dim() == 0 {
        return Ok(Vec::new());
    }
    let chol = SkylineCholesky::factor(a)?;
    let mut x = chol.solve(b);
    let bn = norm(b);
    if bn == T::zero() {
        return Ok(x);
    }
    let target = T::lit(1e-12) * bn;
    let mut prev = T::infinity();
    for _ in 0..4 {
        let ax = a.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let rn = norm(&r);
        if rn <= target || rn >= prev {
            break;
        }
        prev = rn;
        let dx = chol.solve(&r);
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi += d;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplace_1d(n: usize) -> CsrMatrix<f64> {
        let mut t = TripletBuilder::new(n);
        for i in 0..n {
            t.push(i, i, 2.0);
            if i > 0 {
                t.push(i, i - 1, -1.0);
                t.push(i - 1, i, -1.0);
            }
        }
        t.build()
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = TripletBuilder::new(2);
        t.push(1, 0, 1.0);
        t.push(0, 0, 1.0);
        t.push(1, 0, 2.5);
        let a = t.build();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(1, 0), 3.5);
        assert_eq!(a.get(0, 1), 0.0);
    }

    #[test]
    fn tridiagonal_solve() {
        let a = laplace_1d(50);
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.mul_vec(&x_true);
        let x = solve_spd(&a, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_is_reported() {
        let mut t = TripletBuilder::new(2);
        t.push(0, 0, 1.0);
        t.push(1, 1, -1.0);
        assert!(matches!(
            solve_spd(&t.build(), &[1.0, 1.0]),
            Err(Error::IndefiniteSystem { .. })
        ));
    }

    #[test]
    fn rcm_is_a_permutation() {
        let a = laplace_1d(17);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..17).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn random_spd_systems_solve_accurately(
            n in 1usize..30,
            seed_vals in proptest::collection::vec(-1.0f64..1.0, 900),
            rhs in proptest::collection::vec(-1.0f64..1.0, 30),
        ) {
            // sparse B, A = B^T B + I
            let mut b = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let v = seed_vals[i * 30 + j];
                    if v.abs() > 0.7 || i == j {
                        b[i][j] = v;
                    }
                }
            }
            let mut t = TripletBuilder::new(n);
            for i in 0..n {
                for j in 0..n {
                    let mut s = if i == j { 1.0 } else { 0.0 };
                    for k in 0..n {
                        s += b[k][i] * b[k][j];
                    }
                    if s != 0.0 {
                        t.push(i, j, s);
                    }
                }
            }
            let a = t.build();
            let rhs = &rhs[..n];
            let x = solve_spd(&a, rhs).unwrap();
            let r: Vec<f64> = a.mul_vec(&x).iter().zip(rhs).map(|(ax, b)| ax - b).collect();
            prop_assert!(norm(&r) <= 1e-12 * norm(rhs).max(1e-300) * 10.0);
        }
    }
}
