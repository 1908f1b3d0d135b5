//! Integer lattices over arbitrary-precision integers.
//!
//! Column conventions throughout: a lattice is the column span of a matrix,
//! Hermite form is `H = M·U` with `U` unimodular, and lattice equality is
//! equality of Hermite bases.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Integer vector.
pub type IntVec = Vec<BigInt>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DiophError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is singular (infinite index)")]
    Singular,
    #[error("vector is not primitive")]
    NotPrimitive,
}

/// Dense row-major integer matrix.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for c in 0..self.cols {
                if c > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{}", self[(r, c)])?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = BigInt;
    fn index(&self, (r, c): (usize, usize)) -> &BigInt {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut BigInt {
        &mut self.data[r * self.cols + c]
    }
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![BigInt::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = BigInt::one();
        }
        m
    }

    /// From rows of `i64`; all rows must have equal length.
    pub fn from_rows<R: AsRef<[i64]>>(rows: &[R]) -> Self {
        let r = rows.len();
        let c = rows.first().map(|x| x.as_ref().len()).unwrap_or(0);
        let mut m = Self::zeros(r, c);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.as_ref().len(), c, "ragged rows");
            for (j, &v) in row.as_ref().iter().enumerate() {
                m[(i, j)] = BigInt::from(v);
            }
        }
        m
    }

    /// From column vectors of length `rows`.
    pub fn from_cols(rows: usize, cols: &[IntVec]) -> Self {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows);
            for i in 0..rows {
                m[(i, j)] = c[i].clone();
            }
        }
        m
    }

    pub fn diagonal(d: &[i64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = BigInt::from(v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn col(&self, j: usize) -> IntVec {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    pub fn row(&self, i: usize) -> IntVec {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn columns(&self) -> Vec<IntVec> {
        (0..self.cols).map(|j| self.col(j)).collect()
    }

    /// The first `k` columns.
    pub fn take_cols(&self, k: usize) -> Self {
        let cols: Vec<IntVec> = (0..k).map(|j| self.col(j)).collect();
        Self::from_cols(self.rows, &cols)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)].clone();
            }
        }
        t
    }

    pub fn mul(&self, o: &IntMatrix) -> IntMatrix {
        assert_eq!(self.cols, o.rows, "matrix product dimensions");
        let mut out = Self::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self[(i, k)];
                if a.is_zero() {
                    continue;
                }
                for j in 0..o.cols {
                    let p = a * &o[(k, j)];
                    out[(i, j)] += p;
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[BigInt]) -> IntVec {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| &self[(i, j)] * &v[j]).sum())
            .collect()
    }

    /// Horizontal concatenation `[self | o]`.
    pub fn hcat(&self, o: &IntMatrix) -> IntMatrix {
        assert_eq!(self.rows, o.rows);
        let mut cols = self.columns();
        cols.extend(o.columns());
        Self::from_cols(self.rows, &cols)
    }

    pub fn neg(&self) -> IntMatrix {
        IntMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| -x).collect() }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    /// Determinant by fraction-free elimination (Bareiss).
    pub fn det(&self) -> BigInt {
        assert_eq!(self.rows, self.cols, "determinant of a non-square matrix");
        let n = self.rows;
        if n == 0 {
            return BigInt::one();
        }
        let mut a = self.clone();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n - 1 {
            if a[(k, k)].is_zero() {
                match (k + 1..n).find(|&i| !a[(i, k)].is_zero()) {
                    Some(i) => {
                        a.swap_rows(i, k);
                        sign = -sign;
                    }
                    None => return BigInt::zero(),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let v = (&a[(i, j)] * &a[(k, k)] - &a[(i, k)] * &a[(k, j)]) / &prev;
                    a[(i, j)] = v;
                }
            }
            prev = a[(k, k)].clone();
        }
        sign * &a[(n - 1, n - 1)]
    }

    pub fn is_unimodular(&self) -> bool {
        self.rows == self.cols && self.det().abs().is_one()
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for j in 0..self.cols {
                self.data.swap(a * self.cols + j, b * self.cols + j);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for i in 0..self.rows {
                self.data.swap(i * self.cols + a, i * self.cols + b);
            }
        }
    }

    /// col_dst += q · col_src
    fn add_col(&mut self, dst: usize, src: usize, q: &BigInt) {
        if q.is_zero() {
            return;
        }
        for i in 0..self.rows {
            let v = &self[(i, src)] * q;
            self[(i, dst)] += v;
        }
    }

    /// row_dst += q · row_src
    fn add_row(&mut self, dst: usize, src: usize, q: &BigInt) {
        if q.is_zero() {
            return;
        }
        for j in 0..self.cols {
            let v = &self[(src, j)] * q;
            self[(dst, j)] += v;
        }
    }

    fn neg_col(&mut self, j: usize) {
        for i in 0..self.rows {
            let v = -&self[(i, j)];
            self[(i, j)] = v;
        }
    }

    fn neg_row(&mut self, i: usize) {
        for j in 0..self.cols {
            let v = -&self[(i, j)];
            self[(i, j)] = v;
        }
    }

    /// Replaces columns (a, b) by (x·a + y·b, u·a + v·b).
    fn combine_cols(&mut self, a: usize, b: usize, x: &BigInt, y: &BigInt, u: &BigInt, v: &BigInt) {
        for i in 0..self.rows {
            let ca = self[(i, a)].clone();
            let cb = self[(i, b)].clone();
            self[(i, a)] = x * &ca + y * &cb;
            self[(i, b)] = u * &ca + v * &cb;
        }
    }
}

/// Column Hermite form: `H = M·U`, `U` unimodular.
#[derive(Clone, Debug)]
pub struct Hermite {
    pub h: IntMatrix,
    pub u: IntMatrix,
    /// `(row, col)` of each pivot; pivot columns are `0..rank`.
    pub pivots: Vec<(usize, usize)>,
}

impl Hermite {
    pub fn rank(&self) -> usize {
        self.pivots.len()
    }
}

/// Column-style Hermite normal form.
///
/// The nonzero columns `0..rank` are in echelon form with positive pivots;
/// entries left of a pivot in its row lie in `[0, pivot)`; remaining columns
/// are zero and the matching columns of `U` span the kernel of `M`.
pub fn hnf(m: &IntMatrix) -> Hermite {
    let mut h = m.clone();
    let n = m.cols;
    let mut u = IntMatrix::identity(n);
    let mut pivots = Vec::new();
    let mut c = 0;
    for r in 0..m.rows {
        if c == n {
            break;
        }
        for j in c + 1..n {
            if h[(r, j)].is_zero() {
                continue;
            }
            let a = h[(r, c)].clone();
            let b = h[(r, j)].clone();
            let eg = a.extended_gcd(&b);
            let (g, x, y) = (eg.gcd, eg.x, eg.y);
            let u2 = -(&b / &g);
            let v2 = &a / &g;
            h.combine_cols(c, j, &x, &y, &u2, &v2);
            u.combine_cols(c, j, &x, &y, &u2, &v2);
        }
        if h[(r, c)].is_zero() {
            continue;
        }
        if h[(r, c)].is_negative() {
            h.neg_col(c);
            u.neg_col(c);
        }
        let p = h[(r, c)].clone();
        for j in 0..c {
            let q = -h[(r, j)].div_floor(&p);
            h.add_col(j, c, &q);
            u.add_col(j, c, &q);
        }
        pivots.push((r, c));
        c += 1;
    }
    Hermite { h, u, pivots }
}

/// Smith form: `S = L·M·R` with `L`, `R` unimodular; `linv = L⁻¹`.
#[derive(Clone, Debug)]
pub struct Smith {
    pub s: IntMatrix,
    pub l: IntMatrix,
    pub r: IntMatrix,
    pub linv: IntMatrix,
}

impl Smith {
    /// Nonzero diagonal entries, each dividing the next.
    pub fn invariants(&self) -> Vec<BigInt> {
        (0..self.s.rows.min(self.s.cols))
            .map(|i| self.s[(i, i)].clone())
            .take_while(|d| !d.is_zero())
            .collect()
    }
}

/// Smith normal form with transforms.
pub fn snf(m: &IntMatrix) -> Smith {
    let (rows, cols) = (m.rows, m.cols);
    let mut s = m.clone();
    let mut l = IntMatrix::identity(rows);
    let mut linv = IntMatrix::identity(rows);
    let mut r = IntMatrix::identity(cols);
    // row op: row_dst += q row_src on S and L; inverse column op on L⁻¹.
    let row_add = |s: &mut IntMatrix, l: &mut IntMatrix, linv: &mut IntMatrix, dst, src, q: &BigInt| {
        s.add_row(dst, src, q);
        l.add_row(dst, src, q);
        linv.add_col(src, dst, &-q);
    };
    for t in 0..rows.min(cols) {
        loop {
            // smallest nonzero |entry| in the trailing block
            let mut best: Option<(usize, usize)> = None;
            for i in t..rows {
                for j in t..cols {
                    if !s[(i, j)].is_zero() && best.map_or(true, |(bi, bj)| s[(i, j)].abs() < s[(bi, bj)].abs()) {
                        best = Some((i, j));
                    }
                }
            }
            let Some((pi, pj)) = best else {
                return Smith { s, l, r, linv };
            };
            s.swap_rows(t, pi);
            l.swap_rows(t, pi);
            linv.swap_cols(t, pi);
            s.swap_cols(t, pj);
            r.swap_cols(t, pj);
            let mut clean = true;
            for i in t + 1..rows {
                if !s[(i, t)].is_zero() {
                    let q = -s[(i, t)].div_floor(&s[(t, t)]);
                    row_add(&mut s, &mut l, &mut linv, i, t, &q);
                    clean &= s[(i, t)].is_zero();
                }
            }
            for j in t + 1..cols {
                if !s[(t, j)].is_zero() {
                    let q = -s[(t, j)].div_floor(&s[(t, t)]);
                    s.add_col(j, t, &q);
                    r.add_col(j, t, &q);
                    clean &= s[(t, j)].is_zero();
                }
            }
            if !clean {
                continue;
            }
            // enforce divisibility of the trailing block by the pivot
            let p = s[(t, t)].clone();
            let bad = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !s[(i, j)].is_multiple_of(&p)));
            match bad {
                Some(i) => row_add(&mut s, &mut l, &mut linv, t, i, &BigInt::one()),
                None => break,
            }
        }
        if s[(t, t)].is_negative() {
            s.neg_row(t);
            l.neg_row(t);
            linv.neg_col(t);
        }
    }
    Smith { s, l, r, linv }
}

/// Inverse of a unimodular matrix.
pub fn unimodular_inverse(u: &IntMatrix) -> Result<IntMatrix, DiophError> {
    if !u.is_unimodular() {
        return Err(DiophError::Singular);
    }
    // U·W = HNF(U) = I.
    Ok(hnf(u).u)
}

/// Unimodular matrix whose first column is the primitive vector `v`.
pub fn complete_to_unimodular(v: &[BigInt]) -> Result<IntMatrix, DiophError> {
    let row = IntMatrix::from_cols(1, &v.iter().map(|x| vec![x.clone()]).collect::<Vec<_>>());
    let hf = hnf(&row);
    if hf.rank() != 1 || !hf.h[(0, 0)].is_one() {
        return Err(DiophError::NotPrimitive);
    }
    // vᵀ U = e₁ᵀ, so the first row of U⁻¹ is vᵀ and (U⁻¹)ᵀ has first column v.
    Ok(unimodular_inverse(&hf.u)?.transpose())
}

/// Sublattice of `ℤ^dim` in canonical Hermite basis.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct Lattice {
    basis: IntMatrix,
}

impl Lattice {
    /// Column span of `gens` (a `dim × k` matrix).
    pub fn span(gens: &IntMatrix) -> Self {
        let hf = hnf(gens);
        Lattice { basis: hf.h.take_cols(hf.rank()) }
    }

    pub fn full(dim: usize) -> Self {
        Lattice { basis: IntMatrix::identity(dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Lattice { basis: IntMatrix::zeros(dim, 0) }
    }

    pub fn dim(&self) -> usize {
        self.basis.rows
    }

    pub fn rank(&self) -> usize {
        self.basis.cols
    }

    pub fn basis(&self) -> &IntMatrix {
        &self.basis
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank() == self.dim()
    }

    /// Index in `ℤ^dim`; `None` when infinite.
    pub fn index(&self) -> Option<BigInt> {
        if !self.is_full_rank() {
            return None;
        }
        Some((0..self.dim()).map(|i| self.basis[(i, i)].clone()).product())
    }

    /// Coordinates `y` with `basis·y = v`, if `v` lies in the lattice.
    pub fn coordinates(&self, v: &[BigInt]) -> Option<IntVec> {
        solve_hermite(&self.basis, &pivots_of(&self.basis), v)
    }

    pub fn contains(&self, v: &[BigInt]) -> bool {
        self.coordinates(v).is_some()
    }

    pub fn is_sublattice_of(&self, o: &Lattice) -> bool {
        self.basis.columns().iter().all(|c| o.contains(c))
    }

    /// Reduces `v` modulo the lattice to a canonical representative.
    pub fn reduce(&self, v: &[BigInt]) -> IntVec {
        let mut out = v.to_vec();
        for (j, (r, _)) in pivots_of(&self.basis).into_iter().enumerate() {
            let q = out[r].div_floor(&self.basis[(r, j)]);
            for (i, o) in out.iter_mut().enumerate() {
                *o -= &q * &self.basis[(i, j)];
            }
        }
        out
    }

    pub fn intersect(&self, o: &Lattice) -> Lattice {
        intersect_lattices(self, o)
    }

    /// Saturation: all `v` with some nonzero multiple in the lattice.
    pub fn saturation(&self) -> Lattice {
        if self.rank() == 0 {
            return self.clone();
        }
        let sm = snf(&self.basis);
        let s = sm.invariants().len();
        Lattice::span(&sm.linv.take_cols(s))
    }
}

/// Pivot rows of a Hermite basis (column j has its pivot at row `p[j].0`).
fn pivots_of(basis: &IntMatrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut r = 0;
    for j in 0..basis.cols {
        while r < basis.rows && basis[(r, j)].is_zero() {
            r += 1;
        }
        out.push((r, j));
        r += 1;
    }
    out
}

/// Solves `H·y = d` for `H` in column echelon form.
fn solve_hermite(h: &IntMatrix, pivots: &[(usize, usize)], d: &[BigInt]) -> Option<IntVec> {
    if d.len() != h.rows {
        return None;
    }
    let mut y: IntVec = vec![BigInt::zero(); h.cols];
    for &(r, c) in pivots {
        let mut acc = d[r].clone();
        for j in 0..c {
            acc -= &h[(r, j)] * &y[j];
        }
        let (q, rem) = acc.div_rem(&h[(r, c)]);
        if !rem.is_zero() {
            return None;
        }
        y[c] = q;
    }
    if h.mul_vec(&y).as_slice() == d {
        Some(y)
    } else {
        None
    }
}

/// Hermite basis of `U ∩ V`.
pub fn intersect_lattices(u: &Lattice, v: &Lattice) -> Lattice {
    assert_eq!(u.dim(), v.dim(), "lattice dimensions");
    let (a, b) = (u.rank(), v.rank());
    if a == 0 || b == 0 {
        return Lattice::zero(u.dim());
    }
    let joint = u.basis.hcat(&v.basis.neg());
    let hf = hnf(&joint);
    // kernel columns of the transform: (α, β) with U α = V β
    let kernel: Vec<IntVec> = (hf.rank()..a + b).map(|j| hf.u.col(j)[..a].to_vec()).collect();
    if kernel.is_empty() {
        return Lattice::zero(u.dim());
    }
    let alphas = IntMatrix::from_cols(a, &kernel);
    Lattice::span(&u.basis.mul(&alphas))
}

/// Integer data of a closure embedding `E ⊕ ℤᵐ → E ⊕ Aᵐ`:
/// `zᵢ ↦ c^{peg_col[i]} · ∏ⱼ aⱼ^{k[i][j]}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureEmbedding {
    pub peg_col: IntVec,
    pub k: IntMatrix,
}

impl ClosureEmbedding {
    pub fn new(peg_col: IntVec, k: IntMatrix) -> Result<Self, DiophError> {
        let m = peg_col.len();
        if k.rows != m || k.cols != m {
            return Err(DiophError::Dimension(format!("peg column of length {m} with {}x{} matrix", k.rows, k.cols)));
        }
        if k.det().is_zero() {
            return Err(DiophError::Singular);
        }
        Ok(ClosureEmbedding { peg_col, k })
    }

    pub fn from_i64(peg_col: &[i64], k: &[Vec<i64>]) -> Result<Self, DiophError> {
        Self::new(peg_col.iter().map(|&x| BigInt::from(x)).collect(), IntMatrix::from_rows(k))
    }

    pub fn identity(m: usize) -> Self {
        ClosureEmbedding { peg_col: vec![BigInt::zero(); m], k: IntMatrix::identity(m) }
    }

    pub fn rank(&self) -> usize {
        self.peg_col.len()
    }

    /// Index of the image of `ℤᵐ` in `Aᵐ`.
    pub fn index(&self) -> BigInt {
        self.k.det().abs()
    }

    pub fn to_system(&self) -> LinearSystem {
        LinearSystem { offset: self.peg_col.clone(), coeff: self.k.clone() }
    }
}

/// The system `xᵢ = offsetᵢ + Σⱼ coeff[i][j]·yⱼ`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearSystem {
    pub offset: IntVec,
    pub coeff: IntMatrix,
}

impl fmt::Display for LinearSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.offset.len();
        let single = m == 1;
        for i in 0..m {
            if i > 0 {
                write!(f, "; ")?;
            }
            let x = if single { "x".to_string() } else { format!("x{}", i + 1) };
            write!(f, "{x} = ")?;
            let mut terms: Vec<String> = Vec::new();
            if !self.offset[i].is_zero() {
                terms.push(self.offset[i].to_string());
            }
            for j in 0..m {
                let c = &self.coeff[(i, j)];
                if c.is_zero() {
                    continue;
                }
                let y = if single { "y".to_string() } else { format!("y{}", j + 1) };
                let body = if c.abs().is_one() { y } else { format!("{}{y}", c.abs()) };
                if terms.is_empty() {
                    terms.push(if c.is_negative() { format!("-{body}") } else { body });
                } else {
                    terms.push(format!("{} {body}", if c.is_negative() { "-" } else { "+" }));
                }
            }
            if terms.is_empty() {
                terms.push("0".into());
            }
            write!(f, "{}", terms.join(" "))?;
        }
        Ok(())
    }
}

/// `offset + lattice`, with the offset reduced modulo the lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Coset {
    pub offset: IntVec,
    pub lattice: Lattice,
}

impl Coset {
    pub fn new(offset: IntVec, lattice: Lattice) -> Self {
        let offset = lattice.reduce(&offset);
        Coset { offset, lattice }
    }

    pub fn contains(&self, p: &[BigInt]) -> bool {
        let d: IntVec = p.iter().zip(&self.offset).map(|(a, b)| a - b).collect();
        self.lattice.contains(&d)
    }
}

impl fmt::Display for Coset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.offset.len() == 1 && self.lattice.rank() == 1 {
            let g = &self.lattice.basis[(0, 0)];
            return if g.is_one() { write!(f, "{}+ℤ", self.offset[0]) } else { write!(f, "{}+{}ℤ", self.offset[0], g) };
        }
        let off: Vec<String> = self.offset.iter().map(|x| x.to_string()).collect();
        let cols: Vec<String> = self
            .lattice
            .basis
            .columns()
            .iter()
            .map(|c| format!("({})", c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "({})+⟨{}⟩", off.join(","), cols.join(","))
    }
}

/// Coset `offset + span(coeff)` of values `x` for which the system is solvable.
pub fn system_to_coset(sys: &LinearSystem) -> Result<Coset, DiophError> {
    if sys.coeff.det().is_zero() {
        return Err(DiophError::Singular);
    }
    Ok(Coset::new(sys.offset.clone(), Lattice::span(&sys.coeff)))
}

/// Canonical embedding realizing a coset: offset as peg column, Hermite basis as matrix.
pub fn coset_to_embedding(c: &Coset) -> Result<ClosureEmbedding, DiophError> {
    ClosureEmbedding::new(c.offset.clone(), c.lattice.basis.clone())
}

/// Integer `y` with `p = offset + coeff·y`, if one exists.
pub fn solvable(sys: &LinearSystem, p: &[BigInt]) -> Option<IntVec> {
    if p.len() != sys.offset.len() {
        return None;
    }
    let d: IntVec = p.iter().zip(&sys.offset).map(|(a, b)| a - b).collect();
    let hf = hnf(&sys.coeff);
    let y1 = solve_hermite(&hf.h, &hf.pivots, &d)?;
    Some(hf.u.mul_vec(&y1))
}

/// Integers from `i64`s.
pub fn ints(v: &[i64]) -> IntVec {
    v.iter().map(|&x| BigInt::from(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, bound: i64) -> IntMatrix {
        let rows: Vec<Vec<i64>> = (0..r).map(|_| (0..c).map(|_| rng.gen_range(-bound..=bound)).collect()).collect();
        if r == 0 {
            IntMatrix::zeros(0, c)
        } else {
            IntMatrix::from_rows(&rows)
        }
    }

    fn check_hnf_shape(hf: &Hermite) {
        let h = &hf.h;
        for (k, &(r, c)) in hf.pivots.iter().enumerate() {
            assert_eq!(c, k);
            assert!(h[(r, c)].is_positive());
            for i in 0..r {
                assert!(h[(i, c)].is_zero(), "entries above pivot vanish");
            }
            for j in 0..c {
                assert!(!h[(r, j)].is_negative() && h[(r, j)] < h[(r, c)], "reduced left of pivot");
            }
            if k > 0 {
                assert!(r > hf.pivots[k - 1].0);
            }
        }
        for j in hf.rank()..h.cols {
            assert!(h.col(j).iter().all(Zero::is_zero));
        }
    }

    /// gcd of all k×k minors, by brute-force enumeration.
    fn determinantal_divisor(m: &IntMatrix, k: usize) -> BigInt {
        fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
            if k == 0 {
                return vec![vec![]];
            }
            if n < k {
                return vec![];
            }
            let mut out = subsets(n - 1, k);
            for mut s in subsets(n - 1, k - 1) {
                s.push(n - 1);
                out.push(s);
            }
            out
        }
        let mut g = BigInt::zero();
        for rs in subsets(m.rows, k) {
            for cs in subsets(m.cols, k) {
                let mut sub = IntMatrix::zeros(k, k);
                for (a, &i) in rs.iter().enumerate() {
                    for (b, &j) in cs.iter().enumerate() {
                        sub[(a, b)] = m[(i, j)].clone();
                    }
                }
                g = g.gcd(&sub.det());
            }
        }
        g
    }

    #[test]
    fn identity_forms() {
        let i3 = IntMatrix::identity(3);
        assert_eq!(hnf(&i3).h, i3);
        assert_eq!(snf(&i3).s, i3);
    }

    #[test]
    fn smith_of_diag_2_3() {
        let sm = snf(&IntMatrix::diagonal(&[2, 3]));
        assert_eq!(sm.invariants(), ints(&[1, 6]));
    }

    #[test]
    fn random_recomposition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = random_matrix(&mut rng, 3, 3, 3);
            let hf = hnf(&m);
            assert!(hf.u.is_unimodular());
            assert_eq!(m.mul(&hf.u), hf.h);
            check_hnf_shape(&hf);
            let sm = snf(&m);
            assert!(sm.l.is_unimodular() && sm.r.is_unimodular());
            assert_eq!(sm.l.mul(&m).mul(&sm.r), sm.s);
            assert_eq!(sm.l.mul(&sm.linv), IntMatrix::identity(3));
            // invariant factors from determinantal divisors
            let inv = sm.invariants();
            let mut prev = BigInt::one();
            for (k, d) in inv.iter().enumerate() {
                let dk = determinantal_divisor(&m, k + 1);
                assert_eq!(&dk / &prev, *d);
                prev = dk;
            }
            assert!(determinantal_divisor(&m, inv.len() + 1).is_zero() || inv.len() == 3);
        }
    }

    #[test]
    fn rectangular_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..300 {
            let (r, c) = (rng.gen_range(1..5), rng.gen_range(1..5));
            let m = random_matrix(&mut rng, r, c, 5);
            let hf = hnf(&m);
            assert_eq!(m.mul(&hf.u), hf.h);
            check_hnf_shape(&hf);
            let sm = snf(&m);
            assert_eq!(sm.l.mul(&m).mul(&sm.r), sm.s);
            let inv = sm.invariants();
            for w in inv.windows(2) {
                assert!(w[1].is_multiple_of(&w[0]));
            }
            for i in 0..r {
                for j in 0..c {
                    if i != j {
                        assert!(sm.s[(i, j)].is_zero());
                    }
                }
            }
        }
    }

    #[test]
    fn system_and_coset_single() {
        let f = ClosureEmbedding::from_i64(&[2], &[vec![3]]).unwrap();
        let sys = f.to_system();
        assert_eq!(sys.to_string(), "x = 2 + 3y");
        let c = system_to_coset(&sys).unwrap();
        assert_eq!(c.to_string(), "2+3ℤ");
        assert_eq!(solvable(&sys, &ints(&[5])), Some(ints(&[1])));
        assert_eq!(solvable(&sys, &ints(&[4])), None);
        for p in -9i64..=9 {
            let brute = (-20i64..=20).any(|y| p == 2 + 3 * y);
            assert_eq!(solvable(&sys, &ints(&[p])).is_some(), brute, "p={p}");
            assert_eq!(c.contains(&ints(&[p])), brute);
        }
    }

    #[test]
    fn system_display() {
        let f = ClosureEmbedding::from_i64(&[1, 0], &[vec![2, 0], vec![0, 3]]).unwrap();
        assert_eq!(f.to_system().to_string(), "x1 = 1 + 2y1; x2 = 3y2");
        assert_eq!(ClosureEmbedding::identity(1).to_system().to_string(), "x = y");
    }

    #[test]
    fn identity_embedding_coset_is_everything() {
        let c = system_to_coset(&ClosureEmbedding::identity(2).to_system()).unwrap();
        assert_eq!(c.lattice, Lattice::full(2));
        assert_eq!(c.offset, ints(&[0, 0]));
    }

    #[test]
    fn diag_coset_matches_residues() {
        let f = ClosureEmbedding::from_i64(&[1, 0], &[vec![2, 0], vec![0, 3]]).unwrap();
        let sys = f.to_system();
        let c = system_to_coset(&sys).unwrap();
        for p1 in -6i64..=6 {
            for p2 in -6i64..=6 {
                let brute = (p1 - 1).rem_euclid(2) == 0 && p2.rem_euclid(3) == 0;
                assert_eq!(c.contains(&ints(&[p1, p2])), brute);
                if let Some(y) = solvable(&sys, &ints(&[p1, p2])) {
                    let back: IntVec = sys.coeff.mul_vec(&y).iter().zip(&sys.offset).map(|(a, b)| a + b).collect();
                    assert_eq!(back, ints(&[p1, p2]));
                }
            }
        }
    }

    #[test]
    fn round_trip_preserves_coset() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut seen = 0;
        while seen < 100 {
            let m = rng.gen_range(1..4);
            let k = random_matrix(&mut rng, m, m, 4);
            let off: Vec<i64> = (0..m).map(|_| rng.gen_range(-9..=9)).collect();
            let Ok(f) = ClosureEmbedding::new(ints(&off), k) else { continue };
            seen += 1;
            let c = system_to_coset(&f.to_system()).unwrap();
            let f2 = coset_to_embedding(&c).unwrap();
            assert_eq!(system_to_coset(&f2.to_system()).unwrap(), c);
        }
        assert_eq!(ClosureEmbedding::from_i64(&[0], &[vec![0]]), Err(DiophError::Singular));
    }

    #[test]
    fn intersections() {
        let l2 = Lattice::span(&IntMatrix::from_rows(&[[2]]));
        let l3 = Lattice::span(&IntMatrix::from_rows(&[[3]]));
        assert_eq!(intersect_lattices(&l2, &l3), Lattice::span(&IntMatrix::from_rows(&[[6]])));
        assert_eq!(intersect_lattices(&l2, &l2), l2);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let mut seen = 0;
        while seen < 60 {
            let a = random_matrix(&mut rng, 2, 2, 4);
            let b = random_matrix(&mut rng, 2, 2, 4);
            if a.det().is_zero() || b.det().is_zero() {
                continue;
            }
            seen += 1;
            let (la, lb) = (Lattice::span(&a), Lattice::span(&b));
            let li = intersect_lattices(&la, &lb);
            assert!(li.is_full_rank());
            assert!(li.index().unwrap() >= la.index().unwrap().max(lb.index().unwrap()));
            for x in -12i64..=12 {
                for y in -12i64..=12 {
                    let v = ints(&[x, y]);
                    assert_eq!(li.contains(&v), la.contains(&v) && lb.contains(&v));
                }
            }
        }
    }

    #[test]
    fn saturation_and_index() {
        let p = Lattice::span(&IntMatrix::from_rows(&[[2], [0]]));
        assert_eq!(p.saturation(), Lattice::span(&IntMatrix::from_rows(&[[1], [0]])));
        let q = Lattice::span(&IntMatrix::from_rows(&[[2, 0], [0, 3]]));
        assert_eq!(q.index(), Some(BigInt::from(6)));
        assert_eq!(q.saturation(), Lattice::full(2));
        assert_eq!(Lattice::zero(2).saturation(), Lattice::zero(2));
        let diag = Lattice::span(&IntMatrix::from_rows(&[[2], [4]]));
        assert_eq!(diag.saturation(), Lattice::span(&IntMatrix::from_rows(&[[1], [2]])));
    }

    #[test]
    fn primitive_completion() {
        let m = complete_to_unimodular(&ints(&[3, 5])).unwrap();
        assert!(m.is_unimodular());
        assert_eq!(m.col(0), ints(&[3, 5]));
        assert_eq!(complete_to_unimodular(&ints(&[2, 4])), Err(DiophError::NotPrimitive));
        let inv = unimodular_inverse(&m).unwrap();
        assert_eq!(m.mul(&inv), IntMatrix::identity(2));
    }

    proptest! {
        #[test]
        fn reduce_is_canonical(a in 1i64..8, b in -5i64..5, c in 1i64..8, x in -30i64..30, y in -30i64..30) {
            let l = Lattice::span(&IntMatrix::from_rows(&[[a, 0], [b, c]]));
            let v = ints(&[x, y]);
            let r = l.reduce(&v);
            let d: IntVec = v.iter().zip(&r).map(|(p, q)| p - q).collect();
            prop_assert!(l.contains(&d));
            let shifted: IntVec = v.iter().zip(l.basis().col(0)).map(|(p, q)| p + q).collect();
            prop_assert_eq!(l.reduce(&shifted), r);
        }
    }
}
