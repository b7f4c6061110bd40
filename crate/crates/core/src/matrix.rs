//! Dense square matrices over an exact or floating scalar field.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use serde::ser::{Serialize, SerializeSeq, Serializer};
use std::fmt;

#[derive(Clone, PartialEq)]
pub struct SquareMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(dim: usize) -> Self {
        SquareMatrix { dim, data: vec![T::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {dim}x{dim} matrix",
                data.len()
            )));
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != dim {
                return Err(Error::DimensionMismatch(format!("row {i} has {} entries, expected {dim}", r.len())));
            }
            data.extend(r);
        }
        Ok(SquareMatrix { dim, data })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        SquareMatrix { dim, data }
    }

    pub fn diag(entries: &[T]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, e) in entries.iter().enumerate() {
            m.set(i, i, e.clone());
        }
        m
    }

    /// Rank-one matrix `u vᵗ`.
    pub fn outer(u: &[T], v: &[T]) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::DimensionMismatch(format!("outer product of {} and {} vectors", u.len(), v.len())));
        }
        Ok(Self::from_fn(u.len(), |i, j| u[i].clone() * v[j].clone()))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.dim + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.dim).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn entries(&self) -> &[T] {
        &self.data
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", self.dim, self.dim, other.dim, other.dim)));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() + b.clone()).collect();
        Ok(SquareMatrix { dim: self.dim, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a.clone() - b.clone()).collect();
        Ok(SquareMatrix { dim: self.dim, data })
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let v = out.data[i * n + j].clone() + a.clone() * other.get(k, j).clone();
                    out.data[i * n + j] = v;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch(format!("{}-vector against {}x{}", v.len(), self.dim, self.dim)));
        }
        Ok((0..self.dim)
            .map(|i| self.row(i).iter().zip(v).fold(T::zero(), |s, (a, b)| s + a.clone() * b.clone()))
            .collect())
    }

    pub fn scale(&self, s: &T) -> Self {
        SquareMatrix { dim: self.dim, data: self.data.iter().map(|a| a.clone() * s.clone()).collect() }
    }

    pub fn neg(&self) -> Self {
        SquareMatrix { dim: self.dim, data: self.data.iter().map(|a| -a.clone()).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).clone())
    }

    pub fn trace(&self) -> T {
        (0..self.dim).fold(T::zero(), |s, i| s + self.get(i, i).clone())
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::identity(self.dim);
        for _ in 0..k {
            out = out.mul(self).expect("same dimension");
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| a.is_zero())
    }

    /// Determinant by Gaussian elimination (largest pivot for doubles, first nonzero for rationals).
    pub fn det(&self) -> T {
        let n = self.dim;
        let mut m = self.data.clone();
        let mut det = T::one();
        for col in 0..n {
            let mut piv = None;
            let mut best = 0.0;
            for r in col..n {
                let mag = m[r * n + col].magnitude();
                if mag > best {
                    best = mag;
                    piv = Some(r);
                    if T::EXACT {
                        break;
                    }
                }
            }
            let Some(p) = piv else { return T::zero() };
            if p != col {
                for j in 0..n {
                    m.swap(p * n + j, col * n + j);
                }
                det = -det;
            }
            let pv = m[col * n + col].clone();
            det = det * pv.clone();
            for r in col + 1..n {
                let f = m[r * n + col].clone() / pv.clone();
                if f.is_zero() {
                    continue;
                }
                for j in col..n {
                    let v = m[r * n + j].clone() - f.clone() * m[col * n + j].clone();
                    m[r * n + j] = v;
                }
            }
        }
        det
    }

    /// Inverse by Gauss–Jordan elimination; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        let n = self.dim;
        let mut m = self.data.clone();
        let mut inv = Self::identity(n).data;
        for col in 0..n {
            let mut piv = None;
            let mut best = 0.0;
            for r in col..n {
                let mag = m[r * n + col].magnitude();
                if mag > best {
                    best = mag;
                    piv = Some(r);
                    if T::EXACT {
                        break;
                    }
                }
            }
            let p = piv?;
            for j in 0..n {
                m.swap(p * n + j, col * n + j);
                inv.swap(p * n + j, col * n + j);
            }
            let pv = m[col * n + col].clone();
            for j in 0..n {
                m[col * n + j] = m[col * n + j].clone() / pv.clone();
                inv[col * n + j] = inv[col * n + j].clone() / pv.clone();
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = m[r * n + col].clone();
                if f.is_zero() {
                    continue;
                }
                for j in 0..n {
                    m[r * n + j] = m[r * n + j].clone() - f.clone() * m[col * n + j].clone();
                    inv[r * n + j] = inv[r * n + j].clone() - f.clone() * inv[col * n + j].clone();
                }
            }
        }
        Some(SquareMatrix { dim: n, data: inv })
    }

    /// True when every 2x2 minor vanishes (exactly for rationals, to `tol` relative for doubles).
    pub fn has_rank_at_most_one(&self, tol: f64) -> bool {
        let n = self.dim;
        let scale = self.data.iter().map(|a| a.magnitude()).fold(0.0, f64::max);
        for i in 0..n {
            for k in i + 1..n {
                for j in 0..n {
                    for l in j + 1..n {
                        let minor = self.get(i, j).clone() * self.get(k, l).clone()
                            - self.get(i, l).clone() * self.get(k, j).clone();
                        if T::EXACT {
                            if !minor.is_zero() {
                                return false;
                            }
                        } else if minor.magnitude() > tol * scale * scale {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    pub fn to_f64(&self) -> SquareMatrix<f64> {
        SquareMatrix { dim: self.dim, data: self.data.iter().map(|a| a.to_f64()).collect() }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.magnitude()).fold(0.0, f64::max)
    }
}

impl SquareMatrix<f64> {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|a| a.is_finite())
    }
}

impl<T: Scalar> fmt::Debug for SquareMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.dim {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.dim {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j).render())?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl<T: Scalar> fmt::Display for SquareMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Rows of rendered entries; rationals become "p/q" strings, doubles stay numbers.
impl<T: Scalar> Serialize for SquareMatrix<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.dim))?;
        for i in 0..self.dim {
            if T::EXACT {
                let row: Vec<String> = self.row(i).iter().map(|a| a.render()).collect();
                seq.serialize_element(&row)?;
            } else {
                let row: Vec<f64> = self.row(i).iter().map(|a| a.to_f64()).collect();
                seq.serialize_element(&row)?;
            }
        }
        seq.end()
    }
}
