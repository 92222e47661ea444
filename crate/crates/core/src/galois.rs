//! GF(2^8) arithmetic and dense linear algebra over it.
//!
//! The field uses the reduction polynomial x^8 + x^4 + x^3 + x + 1 (0x11B).
//! With this polynomial `x` (0x02) is not primitive, so the log/antilog
//! tables are generated by 0x03, which has order 255.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Sub};

/// Low byte of the reduction polynomial 0x11B.
const POLY: u16 = 0x1B;

const GENERATOR: u8 = 0x03;

/// Carry-less multiply with reduction. Used to build the tables and as an
/// independent reference in tests.
pub const fn mul_schoolbook(a: u8, b: u8) -> u8 {
    let mut a = a as u16;
    let mut b = b;
    let mut acc: u16 = 0;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a <<= 1;
        if a & 0x100 != 0 {
            a ^= 0x100 | POLY;
        }
        b >>= 1;
    }
    acc as u8
}

const fn build_exp() -> [u8; 512] {
    let mut table = [0u8; 512];
    let mut val: u8 = 1;
    let mut i = 0;
    while i < 255 {
        table[i] = val;
        table[i + 255] = val;
        val = mul_schoolbook(val, GENERATOR);
        i += 1;
    }
    table[510] = table[0];
    table[511] = table[1];
    table
}

const fn build_log(exp: &[u8; 512]) -> [u8; 256] {
    let mut table = [0u8; 256];
    let mut i = 0;
    while i < 255 {
        table[exp[i] as usize] = i as u8;
        i += 1;
    }
    table
}

static EXP: [u8; 512] = build_exp();
static LOG: [u8; 256] = build_log(&EXP);

/// An element of GF(2^8).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct Gf256(pub u8);

impl Gf256 {
    pub const ZERO: Gf256 = Gf256(0);
    pub const ONE: Gf256 = Gf256(1);

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Multiplicative inverse. Returns `None` for zero.
    #[inline]
    pub fn inv(self) -> Option<Gf256> {
        if self.0 == 0 {
            None
        } else {
            Some(Gf256(EXP[255 - LOG[self.0 as usize] as usize]))
        }
    }

    pub fn pow(self, mut e: u32) -> Gf256 {
        let mut base = self;
        let mut acc = Gf256::ONE;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

impl fmt::Debug for Gf256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#04x}", self.0)
    }
}

impl From<u8> for Gf256 {
    fn from(v: u8) -> Self {
        Gf256(v)
    }
}

/// Field addition (XOR).
#[inline]
pub fn add(a: u8, b: u8) -> u8 {
    a ^ b
}

/// Field multiplication through the log/antilog tables.
#[inline]
pub fn mul(a: u8, b: u8) -> u8 {
    if a == 0 || b == 0 {
        0
    } else {
        EXP[LOG[a as usize] as usize + LOG[b as usize] as usize]
    }
}

#[inline]
pub fn inv(a: u8) -> Option<u8> {
    Gf256(a).inv().map(|x| x.0)
}

impl Add for Gf256 {
    type Output = Gf256;
    #[inline]
    fn add(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl AddAssign for Gf256 {
    #[inline]
    fn add_assign(&mut self, rhs: Gf256) {
        self.0 ^= rhs.0;
    }
}

impl Sub for Gf256 {
    type Output = Gf256;
    #[inline]
    fn sub(self, rhs: Gf256) -> Gf256 {
        Gf256(self.0 ^ rhs.0)
    }
}

impl Mul for Gf256 {
    type Output = Gf256;
    #[inline]
    fn mul(self, rhs: Gf256) -> Gf256 {
        Gf256(mul(self.0, rhs.0))
    }
}

impl MulAssign for Gf256 {
    #[inline]
    fn mul_assign(&mut self, rhs: Gf256) {
        self.0 = mul(self.0, rhs.0);
    }
}

impl Div for Gf256 {
    type Output = Gf256;
    /// Panics on division by zero.
    #[inline]
    fn div(self, rhs: Gf256) -> Gf256 {
        self * rhs.inv().expect("division by zero in GF(256)")
    }
}

/// `dst[i] += c * src[i]` over the field.
#[inline]
pub fn axpy(dst: &mut [u8], c: u8, src: &[u8]) {
    debug_assert_eq!(dst.len(), src.len());
    match c {
        0 => {}
        1 => {
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= *s;
            }
        }
        _ => {
            let lc = LOG[c as usize] as usize;
            for (d, &s) in dst.iter_mut().zip(src) {
                if s != 0 {
                    *d ^= EXP[lc + LOG[s as usize] as usize];
                }
            }
        }
    }
}

/// `row[i] *= c` over the field.
#[inline]
pub fn scale(row: &mut [u8], c: u8) {
    match c {
        0 => row.iter_mut().for_each(|x| *x = 0),
        1 => {}
        _ => {
            let lc = LOG[c as usize] as usize;
            for x in row.iter_mut() {
                if *x != 0 {
                    *x = EXP[lc + LOG[*x as usize] as usize];
                }
            }
        }
    }
}

/// Inner product of two equal-length vectors.
#[inline]
pub fn dot(a: &[u8], b: &[u8]) -> u8 {
    a.iter().zip(b).fold(0u8, |acc, (&x, &y)| acc ^ mul(x, y))
}

/// Dense row-major matrix over GF(2^8).
#[derive(Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:02x?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Builds a matrix from row-major bytes. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<u8>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_rows<R: AsRef<[u8]>>(cols: usize, rows: &[R]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn random<R: rand::Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let mut data = vec![0u8; rows * cols];
        rng.fill_bytes(&mut data);
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u8) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u8] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [u8] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn push_row(&mut self, row: &[u8]) {
        assert_eq!(row.len(), self.cols);
        self.data.extend_from_slice(row);
        self.rows += 1;
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (head, tail) = self.data.split_at_mut(hi * self.cols);
        head[lo * self.cols..(lo + 1) * self.cols].swap_with_slice(&mut tail[..self.cols]);
    }

    /// `row[dst] += c * row[src]`.
    fn row_axpy(&mut self, dst: usize, c: u8, src: usize) {
        debug_assert_ne!(dst, src);
        let cols = self.cols;
        if dst < src {
            let (head, tail) = self.data.split_at_mut(src * cols);
            axpy(&mut head[dst * cols..(dst + 1) * cols], c, &tail[..cols]);
        } else {
            let (head, tail) = self.data.split_at_mut(dst * cols);
            axpy(&mut tail[..cols], c, &head[src * cols..(src + 1) * cols]);
        }
    }

    /// Matrix product `self * rhs`.
    pub fn mul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "dimension mismatch");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a != 0 {
                    let cols = rhs.cols;
                    axpy(
                        &mut out.data[r * cols..(r + 1) * cols],
                        a,
                        &rhs.data[k * cols..(k + 1) * cols],
                    );
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Reduced row-echelon form and the pivot columns, in order.
    pub fn row_reduce(&self) -> (Matrix, Vec<usize>) {
        let mut m = self.clone();
        let pivots = m.reduce_in_place();
        (m, pivots)
    }

    fn reduce_in_place(&mut self) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut lead = 0;
        for col in 0..self.cols {
            if lead == self.rows {
                break;
            }
            let Some(p) = (lead..self.rows).find(|&r| self.get(r, col) != 0) else {
                continue;
            };
            self.swap_rows(lead, p);
            let inv = inv(self.get(lead, col)).expect("nonzero pivot");
            scale(self.row_mut(lead), inv);
            for r in 0..self.rows {
                if r != lead {
                    let f = self.get(r, col);
                    if f != 0 {
                        self.row_axpy(r, f, lead);
                    }
                }
            }
            pivots.push(col);
            lead += 1;
        }
        pivots
    }

    /// Row rank over GF(2^8).
    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        let mut rank = 0;
        for col in 0..m.cols {
            if rank == m.rows {
                break;
            }
            let Some(p) = (rank..m.rows).find(|&r| m.get(r, col) != 0) else {
                continue;
            };
            m.swap_rows(rank, p);
            let inv = inv(m.get(rank, col)).expect("nonzero pivot");
            for r in rank + 1..m.rows {
                let f = m.get(r, col);
                if f != 0 {
                    m.row_axpy(r, mul(f, inv), rank);
                }
            }
            rank += 1;
        }
        rank
    }
}

/// Incrementally maintained row-echelon basis of a subspace of GF(2^8)^n.
///
/// Each stored row has a leading 1 at its pivot column and zeros in every
/// other pivot column, so membership tests are a single pass.
#[derive(Clone, Debug, Default)]
pub struct EchelonBasis {
    width: usize,
    rows: Vec<Vec<u8>>,
    pivots: Vec<usize>,
}

impl EchelonBasis {
    pub fn new(width: usize) -> Self {
        EchelonBasis {
            width,
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// Reduces `v` against the basis, returning the residual.
    pub fn reduce(&self, v: &[u8]) -> Vec<u8> {
        let mut r = v.to_vec();
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let c = r[p];
            if c != 0 {
                axpy(&mut r, c, row);
            }
        }
        r
    }

    /// Whether `v` lies outside the current span.
    pub fn is_independent(&self, v: &[u8]) -> bool {
        assert_eq!(v.len(), self.width);
        self.reduce(v).iter().any(|&x| x != 0)
    }

    /// Adds `v` if it is independent. Returns whether the rank grew.
    pub fn insert(&mut self, v: &[u8]) -> bool {
        assert_eq!(v.len(), self.width);
        let mut r = self.reduce(v);
        let Some(p) = r.iter().position(|&x| x != 0) else {
            return false;
        };
        let inv = inv(r[p]).expect("nonzero pivot");
        scale(&mut r, inv);
        for row in &mut self.rows {
            let c = row[p];
            if c != 0 {
                axpy(row, c, &r);
            }
        }
        self.rows.push(r);
        self.pivots.push(p);
        true
    }
}
