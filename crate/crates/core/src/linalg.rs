//! Exact integer and rational matrix algebra.
//!
//! Everything here works over arbitrary-precision integers, so no entry can
//! overflow. The Smith and Hermite normal forms carry their unimodular
//! transforms; the resonance machinery downstream relies on those transforms
//! being exact.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Dense row-major matrix.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

pub type IntMatrix = Matrix<BigInt>;
pub type RatMatrix = Matrix<BigRational>;

impl<T: Clone + Zero> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    /// Builds a matrix from explicit rows. Panics if the rows are ragged.
    pub fn from_rows(rows: Vec<Vec<T>>, cols: usize) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged matrix rows");
            data.extend(r);
        }
        Matrix {
            rows: n,
            cols,
            data,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }
}

impl<T> Matrix<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

impl IntMatrix {
    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: &[Vec<i64>], cols: usize) -> Self {
        Self::from_rows(
            rows.iter()
                .map(|r| r.iter().map(|&x| BigInt::from(x)).collect())
                .collect(),
            cols,
        )
    }

    /// Converts to `i64` rows, or `None` if some entry does not fit.
    pub fn to_i64(&self) -> Option<Vec<Vec<i64>>> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|x| x.to_i64()).collect())
            .collect()
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * &other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> Vec<BigInt> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    /// Determinant by fraction-free (Bareiss) elimination.
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut m = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if m[(k, k)].is_zero() {
                match (k + 1..n).find(|&i| !m[(i, k)].is_zero()) {
                    Some(i) => {
                        m.swap_rows(i, k);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = &m[(i, j)] * &m[(k, k)] - &m[(i, k)] * &m[(k, j)];
                    m[(i, j)] = v / &prev;
                }
            }
            prev = m[(k, k)].clone();
        }
        sign * m[(n - 1, n - 1)].clone()
    }

    pub fn rank(&self) -> usize {
        self.to_rational().rank()
    }

    pub fn to_rational(&self) -> RatMatrix {
        RatMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|x| BigRational::from_integer(x.clone()))
                .collect(),
        }
    }

    /// Inverse of a unimodular matrix, `None` when `|det| != 1`.
    pub fn inverse_unimodular(&self) -> Option<IntMatrix> {
        if self.rows != self.cols || !self.det().abs().is_one() {
            return None;
        }
        let inv = self.to_rational().inverse()?;
        let data = inv
            .data
            .into_iter()
            .map(|q| q.is_integer().then(|| q.to_integer()))
            .collect::<Option<Vec<_>>>()?;
        Some(IntMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    fn add_row_multiple(&mut self, target: usize, source: usize, factor: &BigInt) {
        if factor.is_zero() {
            return;
        }
        for j in 0..self.cols {
            let v = &self[(source, j)] * factor;
            self[(target, j)] += v;
        }
    }

    fn add_col_multiple(&mut self, target: usize, source: usize, factor: &BigInt) {
        if factor.is_zero() {
            return;
        }
        for i in 0..self.rows {
            let v = &self[(i, source)] * factor;
            self[(i, target)] += v;
        }
    }

    fn negate_col(&mut self, j: usize) {
        for i in 0..self.rows {
            let v = -self[(i, j)].clone();
            self[(i, j)] = v;
        }
    }

    fn negate_row(&mut self, i: usize) {
        for j in 0..self.cols {
            let v = -self[(i, j)].clone();
            self[(i, j)] = v;
        }
    }

    /// Replaces columns `a`, `b` by `x·a + y·b` and `z·a + w·b`.
    fn combine_cols(&mut self, a: usize, b: usize, [x, y, z, w]: [&BigInt; 4]) {
        for i in 0..self.rows {
            let ca = self[(i, a)].clone();
            let cb = self[(i, b)].clone();
            self[(i, a)] = x * &ca + y * &cb;
            self[(i, b)] = z * &ca + w * &cb;
        }
    }

    fn combine_rows(&mut self, a: usize, b: usize, [x, y, z, w]: [&BigInt; 4]) {
        for j in 0..self.cols {
            let ra = self[(a, j)].clone();
            let rb = self[(b, j)].clone();
            self[(a, j)] = x * &ra + y * &rb;
            self[(b, j)] = z * &ra + w * &rb;
        }
    }
}

impl fmt::Display for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = self.row(i).iter().map(|x| x.to_string()).collect();
            writeln!(f, "[{}]", row.join(" "))?;
        }
        Ok(())
    }
}

impl RatMatrix {
    /// Reduced row echelon form and the pivot columns.
    pub fn rref(&self) -> (RatMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m[(i, c)].is_zero()) else {
                continue;
            };
            m.swap_rows(p, r);
            let inv = m[(r, c)].recip();
            for j in 0..m.cols {
                let v = &m[(r, j)] * &inv;
                m[(r, j)] = v;
            }
            for i in 0..m.rows {
                if i != r && !m[(i, c)].is_zero() {
                    let factor = m[(i, c)].clone();
                    for j in 0..m.cols {
                        let v = &m[(r, j)] * &factor;
                        m[(i, j)] -= v;
                    }
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    pub fn rank(&self) -> usize {
        self.rref().1.len()
    }

    pub fn inverse(&self) -> Option<RatMatrix> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        if n == 0 {
            return Some(RatMatrix::zeros(0, 0));
        }
        let mut aug = RatMatrix::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, n + i)] = BigRational::one();
        }
        let (red, pivots) = aug.rref();
        if pivots.len() < n || pivots[n - 1] != n - 1 {
            return None;
        }
        let mut inv = RatMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                inv[(i, j)] = red[(i, n + j)].clone();
            }
        }
        Some(inv)
    }

    /// Solves `self · x = b` when the system is consistent with a unique
    /// solution.
    pub fn solve(&self, b: &[BigRational]) -> Option<Vec<BigRational>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = RatMatrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug[(i, j)] = self[(i, j)].clone();
            }
            aug[(i, self.cols)] = b[i].clone();
        }
        let (red, pivots) = aug.rref();
        if pivots.contains(&self.cols) || pivots.len() < self.cols {
            return None;
        }
        Some((0..self.cols).map(|i| red[(i, self.cols)].clone()).collect())
    }
}

/// Smith normal form `U·A·V = D` with unimodular `U`, `V`.
#[derive(Clone, Debug)]
pub struct SnfDecomposition {
    pub u: IntMatrix,
    pub d: IntMatrix,
    pub v: IntMatrix,
}

impl SnfDecomposition {
    /// Diagonal entries of `D`, including trailing zeros, up to `min(rows, cols)`.
    pub fn diagonal(&self) -> Vec<BigInt> {
        (0..self.d.rows.min(self.d.cols))
            .map(|i| self.d[(i, i)].clone())
            .collect()
    }

    /// The nonzero invariant factors `r₁ | r₂ | … | r_s`.
    pub fn invariant_factors(&self) -> Vec<BigInt> {
        self.diagonal().into_iter().filter(|x| !x.is_zero()).collect()
    }

    pub fn rank(&self) -> usize {
        self.invariant_factors().len()
    }
}

fn min_abs_nonzero(d: &IntMatrix, t: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for i in t..d.rows {
        for j in t..d.cols {
            let x = &d[(i, j)];
            if x.is_zero() {
                continue;
            }
            if best.is_none_or(|(bi, bj)| x.abs() < d[(bi, bj)].abs()) {
                best = Some((i, j));
            }
        }
    }
    best
}

/// Smith normal form with transforms.
///
/// Pivots on the entry of least absolute value, clears its row and column by
/// Euclidean steps and then restores the divisibility chain by folding any
/// offending row into the pivot row. The diagonal is made nonnegative by
/// negating columns of `V`.
pub fn snf(a: &IntMatrix) -> SnfDecomposition {
    let (m, n) = (a.rows, a.cols);
    let mut d = a.clone();
    let mut u = IntMatrix::identity(m);
    let mut v = IntMatrix::identity(n);

    for t in 0..m.min(n) {
        let Some((pi, pj)) = min_abs_nonzero(&d, t) else {
            break;
        };
        d.swap_rows(t, pi);
        u.swap_rows(t, pi);
        d.swap_cols(t, pj);
        v.swap_cols(t, pj);

        loop {
            let pivot = d[(t, t)].clone();
            let mut clean = true;
            for i in t + 1..m {
                if d[(i, t)].is_zero() {
                    continue;
                }
                let q = -(&d[(i, t)] / &pivot);
                d.add_row_multiple(i, t, &q);
                u.add_row_multiple(i, t, &q);
                clean &= d[(i, t)].is_zero();
            }
            for j in t + 1..n {
                if d[(t, j)].is_zero() {
                    continue;
                }
                let q = -(&d[(t, j)] / &pivot);
                d.add_col_multiple(j, t, &q);
                v.add_col_multiple(j, t, &q);
                clean &= d[(t, j)].is_zero();
            }
            if !clean {
                // A remainder smaller than the pivot survived; promote it.
                let mut best = (t, t);
                for i in t + 1..m {
                    if !d[(i, t)].is_zero() && d[(i, t)].abs() < d[best].abs() {
                        best = (i, t);
                    }
                }
                for j in t + 1..n {
                    if !d[(t, j)].is_zero() && d[(t, j)].abs() < d[best].abs() {
                        best = (t, j);
                    }
                }
                d.swap_rows(t, best.0);
                u.swap_rows(t, best.0);
                d.swap_cols(t, best.1);
                v.swap_cols(t, best.1);
                continue;
            }
            let offending = (t + 1..m).find(|&i| {
                (t + 1..n).any(|j| !(&d[(i, j)] % &pivot).is_zero())
            });
            match offending {
                Some(i) => {
                    let one = BigInt::one();
                    d.add_row_multiple(t, i, &one);
                    u.add_row_multiple(t, i, &one);
                }
                None => break,
            }
        }
        if d[(t, t)].is_negative() {
            d.negate_col(t);
            v.negate_col(t);
        }
    }
    SnfDecomposition { u, d, v }
}

/// Extended gcd with `g = a·x + b·y ≥ 0`.
fn ext_gcd(a: &BigInt, b: &BigInt) -> (BigInt, BigInt, BigInt) {
    let e = a.extended_gcd(b);
    if e.gcd.is_negative() {
        (-e.gcd, -e.x, -e.y)
    } else {
        (e.gcd, e.x, e.y)
    }
}

/// Row-style Hermite normal form of the row lattice of `m`; zero rows dropped.
pub fn hnf_rows(m: &IntMatrix) -> IntMatrix {
    let mut h = m.clone();
    let mut r = 0;
    for c in 0..h.cols {
        if r == h.rows {
            break;
        }
        for i in r + 1..h.rows {
            if h[(i, c)].is_zero() {
                continue;
            }
            let a = h[(r, c)].clone();
            let b = h[(i, c)].clone();
            let (g, x, y) = ext_gcd(&a, &b);
            let (ag, bg) = (&a / &g, &b / &g);
            h.combine_rows(r, i, [&x, &y, &(-bg), &ag]);
        }
        if h[(r, c)].is_zero() {
            continue;
        }
        if h[(r, c)].is_negative() {
            h.negate_row(r);
        }
        let pivot = h[(r, c)].clone();
        for i in 0..r {
            let q = -h[(i, c)].div_floor(&pivot);
            h.add_row_multiple(i, r, &q);
        }
        r += 1;
    }
    let rows: Vec<Vec<BigInt>> = (0..r).map(|i| h.row(i).to_vec()).collect();
    IntMatrix::from_rows(rows, h.cols)
}

/// ℤ-basis of `{x ∈ ℤⁿ : A·x = 0}`, in row Hermite normal form.
///
/// Column-echelon reduction of `A` by unimodular column operations; the
/// transform columns that end up multiplying zero columns span the kernel.
pub fn hnf_kernel(a: &IntMatrix) -> Vec<Vec<BigInt>> {
    let n = a.cols;
    let mut w = a.clone();
    let mut t = IntMatrix::identity(n);
    let mut col = 0;
    for row in 0..a.rows {
        if col == n {
            break;
        }
        for j in col + 1..n {
            if w[(row, j)].is_zero() {
                continue;
            }
            let x0 = w[(row, col)].clone();
            let x1 = w[(row, j)].clone();
            let (g, x, y) = ext_gcd(&x0, &x1);
            let (ag, bg) = (&x0 / &g, &x1 / &g);
            let coeffs = [&x, &y, &(-bg), &ag];
            w.combine_cols(col, j, coeffs);
            t.combine_cols(col, j, coeffs);
        }
        if !w[(row, col)].is_zero() {
            col += 1;
        }
    }
    if col == n {
        return Vec::new();
    }
    let basis: Vec<Vec<BigInt>> = (col..n).map(|j| t.column(j)).collect();
    let h = hnf_rows(&IntMatrix::from_rows(basis, n));
    (0..h.rows).map(|i| h.row(i).to_vec()).collect()
}

/// Integer kernel lattice of a rational matrix (denominators cleared row by row).
pub fn rational_kernel_lattice(a: &RatMatrix) -> Vec<Vec<BigInt>> {
    let mut int = IntMatrix::zeros(a.rows, a.cols);
    for i in 0..a.rows {
        let lcm = a
            .row(i)
            .iter()
            .fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
        for j in 0..a.cols {
            let q = &a[(i, j)];
            int[(i, j)] = q.numer() * (&lcm / q.denom());
        }
    }
    hnf_kernel(&int)
}

/// Saturation `ℤⁿ ∩ ℚ·L` of the lattice spanned by `rows`.
pub fn saturate(rows: &[Vec<BigInt>], n: usize) -> Vec<Vec<BigInt>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let m = IntMatrix::from_rows(rows.to_vec(), n);
    let perp = hnf_kernel(&m);
    if perp.is_empty() {
        return (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { BigInt::one() } else { BigInt::zero() })
                    .collect()
            })
            .collect();
    }
    hnf_kernel(&IntMatrix::from_rows(perp, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(rows: &[Vec<i64>]) -> IntMatrix {
        let cols = rows.first().map_or(0, Vec::len);
        IntMatrix::from_i64(rows, cols)
    }

    fn check_snf(a: &IntMatrix) -> SnfDecomposition {
        let s = snf(a);
        assert_eq!(s.u.mul(a).mul(&s.v), s.d);
        assert!(s.u.det().abs().is_one());
        assert!(s.v.det().abs().is_one());
        for i in 0..s.d.rows() {
            for j in 0..s.d.cols() {
                if i != j {
                    assert!(s.d[(i, j)].is_zero());
                }
            }
        }
        s
    }

    #[test]
    fn snf_identity() {
        let s = check_snf(&IntMatrix::identity(3));
        assert_eq!(s.d, IntMatrix::identity(3));
    }

    #[test]
    fn snf_two_by_two() {
        let s = check_snf(&big(&[vec![2, 4], vec![6, 8]]));
        assert_eq!(s.invariant_factors(), vec![BigInt::from(2), BigInt::from(4)]);
    }

    #[test]
    fn snf_column_and_negative() {
        let s = check_snf(&big(&[vec![2]]));
        assert_eq!(s.invariant_factors(), vec![BigInt::from(2)]);
        let s = check_snf(&big(&[vec![-2]]));
        assert_eq!(s.invariant_factors(), vec![BigInt::from(2)]);
        // Sign is absorbed by V, so U stays the identity.
        assert_eq!(s.u, IntMatrix::identity(1));
    }

    #[test]
    fn snf_needs_divisibility_fix() {
        let s = check_snf(&big(&[vec![2, 0], vec![0, 3]]));
        assert_eq!(s.invariant_factors(), vec![BigInt::from(1), BigInt::from(6)]);
    }

    #[test]
    fn snf_zero_and_empty() {
        let s = check_snf(&IntMatrix::zeros(2, 3));
        assert!(s.invariant_factors().is_empty());
        let s = snf(&IntMatrix::zeros(0, 2));
        assert_eq!(s.v, IntMatrix::identity(2));
    }

    #[test]
    fn kernel_examples() {
        assert!(hnf_kernel(&IntMatrix::identity(3)).is_empty());
        let k = hnf_kernel(&big(&[vec![1, 1]]));
        assert_eq!(k, vec![vec![BigInt::from(1), BigInt::from(-1)]]);
        let k = hnf_kernel(&big(&[vec![2, 0, -1], vec![0, 1, 0]]));
        assert_eq!(
            k,
            vec![vec![BigInt::from(1), BigInt::from(0), BigInt::from(2)]]
        );
    }

    #[test]
    fn rational_kernel_examples() {
        let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        let a = RatMatrix::from_rows(vec![vec![q(1, 2), q(-1, 4)]], 2);
        assert_eq!(
            rational_kernel_lattice(&a),
            vec![vec![BigInt::from(1), BigInt::from(2)]]
        );
        let z = RatMatrix::zeros(1, 2);
        assert_eq!(
            rational_kernel_lattice(&z),
            vec![
                vec![BigInt::from(1), BigInt::from(0)],
                vec![BigInt::from(0), BigInt::from(1)]
            ]
        );
        let i = RatMatrix::from_rows(vec![vec![q(1, 1), q(0, 1)], vec![q(0, 1), q(1, 1)]], 2);
        assert!(rational_kernel_lattice(&i).is_empty());
    }

    #[test]
    fn det_and_inverse() {
        let m = big(&[vec![2, 1], vec![1, 1]]);
        assert_eq!(m.det(), BigInt::from(1));
        let inv = m.inverse_unimodular().unwrap();
        assert_eq!(m.mul(&inv), IntMatrix::identity(2));
        assert!(big(&[vec![2, 0], vec![0, 1]]).inverse_unimodular().is_none());
        assert_eq!(big(&[vec![0, 1], vec![1, 0]]).det(), BigInt::from(-1));
    }

    #[test]
    fn saturation_divides_out_common_factor() {
        let rows = vec![vec![BigInt::from(2), BigInt::from(-4)]];
        assert_eq!(
            saturate(&rows, 2),
            vec![vec![BigInt::from(1), BigInt::from(-2)]]
        );
    }

    #[test]
    fn rational_solve() {
        let q = |n: i64| BigRational::from_integer(n.into());
        let a = RatMatrix::from_rows(vec![vec![q(1)], vec![q(2)]], 1);
        assert_eq!(a.solve(&[q(3), q(6)]), Some(vec![q(3)]));
        assert_eq!(a.solve(&[q(3), q(5)]), None);
    }
}
