//! Fixed-size dense linear algebra over any [`Real`].

use crate::real::Real;

pub type Vector<T, const D: usize> = [T; D];
pub type Mat<T, const D: usize> = [[T; D]; D];

pub fn zeros<T: Real, const D: usize>() -> Mat<T, D> {
    [[T::zero(); D]; D]
}

pub fn identity<T: Real, const D: usize>() -> Mat<T, D> {
    let mut m = zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = T::one();
    }
    m
}

pub fn dot<T: Real, const D: usize>(u: &[T; D], v: &[T; D]) -> T {
    let mut s = T::zero();
    for i in 0..D {
        s += u[i] * v[i];
    }
    s
}

pub fn mat_vec<T: Real, const D: usize>(m: &Mat<T, D>, v: &[T; D]) -> [T; D] {
    std::array::from_fn(|i| dot(&m[i], v))
}

/// vᵗ M, i.e. Mᵗ v.
pub fn vec_mat<T: Real, const D: usize>(v: &[T; D], m: &Mat<T, D>) -> [T; D] {
    std::array::from_fn(|j| {
        let mut s = T::zero();
        for i in 0..D {
            s += v[i] * m[i][j];
        }
        s
    })
}

pub fn mat_mul<T: Real, const D: usize>(a: &Mat<T, D>, b: &Mat<T, D>) -> Mat<T, D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut s = T::zero();
            for k in 0..D {
                s += a[i][k] * b[k][j];
            }
            s
        })
    })
}

pub fn transpose<T: Real, const D: usize>(a: &Mat<T, D>) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[j][i]))
}

pub fn mat_add<T: Real, const D: usize>(a: &Mat<T, D>, b: &Mat<T, D>) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] + b[i][j]))
}

pub fn mat_sub<T: Real, const D: usize>(a: &Mat<T, D>, b: &Mat<T, D>) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] - b[i][j]))
}

pub fn mat_scale<T: Real, const D: usize>(a: &Mat<T, D>, s: T) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] * s))
}

pub fn mat_neg<T: Real, const D: usize>(a: &Mat<T, D>) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| -a[i][j]))
}

pub fn outer<T: Real, const D: usize>(u: &[T; D], v: &[T; D]) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| u[i] * v[j]))
}

pub fn trace<T: Real, const D: usize>(a: &Mat<T, D>) -> T {
    let mut s = T::zero();
    for (i, row) in a.iter().enumerate() {
        s += row[i];
    }
    s
}

pub fn vadd<T: Real, const D: usize>(u: &[T; D], v: &[T; D]) -> [T; D] {
    std::array::from_fn(|i| u[i] + v[i])
}

pub fn vsub<T: Real, const D: usize>(u: &[T; D], v: &[T; D]) -> [T; D] {
    std::array::from_fn(|i| u[i] - v[i])
}

pub fn vscale<T: Real, const D: usize>(u: &[T; D], s: T) -> [T; D] {
    std::array::from_fn(|i| u[i] * s)
}

/// Bilinear form uᵗ M v.
pub fn form<T: Real, const D: usize>(m: &Mat<T, D>, u: &[T; D], v: &[T; D]) -> T {
    dot(u, &mat_vec(m, v))
}

/// Inverse by Gauss–Jordan with partial pivoting on the value parts.
pub fn inverse<T: Real, const D: usize>(a: &Mat<T, D>) -> Option<Mat<T, D>> {
    let mut m = *a;
    let mut inv = identity::<T, D>();
    for col in 0..D {
        let p = (col..D).max_by(|&r, &s| m[r][col].re().abs().total_cmp(&m[s][col].re().abs()))?;
        if m[p][col].re() == 0.0 || !m[p][col].re().is_finite() {
            return None;
        }
        m.swap(p, col);
        inv.swap(p, col);
        let pv = m[col][col].recip();
        for j in 0..D {
            m[col][j] *= pv;
            inv[col][j] *= pv;
        }
        for r in 0..D {
            if r == col {
                continue;
            }
            let f = m[r][col];
            for j in 0..D {
                let mj = m[col][j];
                let ij = inv[col][j];
                m[r][j] -= f * mj;
                inv[r][j] -= f * ij;
            }
        }
    }
    Some(inv)
}

/// Determinant by elimination with partial pivoting.
pub fn det<T: Real, const D: usize>(a: &Mat<T, D>) -> T {
    let mut m = *a;
    let mut d = T::one();
    for col in 0..D {
        let p = (col..D).max_by(|&r, &s| m[r][col].re().abs().total_cmp(&m[s][col].re().abs())).unwrap_or(col);
        if m[p][col].re() == 0.0 {
            return T::zero();
        }
        if p != col {
            m.swap(p, col);
            d = -d;
        }
        d *= m[col][col];
        let pv = m[col][col].recip();
        for r in col + 1..D {
            let f = m[r][col] * pv;
            for j in col..D {
                let cj = m[col][j];
                m[r][j] -= f * cj;
            }
        }
    }
    d
}

/// Cholesky test of positive definiteness on value parts.
pub fn is_positive_definite<const D: usize>(a: &Mat<f64, D>) -> bool {
    let mut l = [[0.0f64; D]; D];
    for i in 0..D {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return false;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    true
}

pub fn values<T: Real, const D: usize>(v: &[T; D]) -> [f64; D] {
    std::array::from_fn(|i| v[i].re())
}

pub fn mat_values<T: Real, const D: usize>(m: &Mat<T, D>) -> Mat<f64, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| m[i][j].re()))
}

pub fn lift<T: Real, const D: usize>(v: &[f64; D]) -> [T; D] {
    std::array::from_fn(|i| T::cst(v[i]))
}

pub fn max_abs<const D: usize>(v: &[f64; D]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn mat_max_abs<const D: usize>(m: &Mat<f64, D>) -> f64 {
    m.iter().flat_map(|r| r.iter()).fold(0.0, |a, x| a.max(x.abs()))
}
