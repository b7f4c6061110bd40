//! Pointwise Randers kernel: fundamental tensor, Cartan torsion, distortion, angular form,
//! F-normals and the g-dual solve on a leaf tangent space.
//!
//! Throughout, `D = m + 1` is the ambient dimension.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::real::Real;

pub const DEFAULT_MARGIN: f64 = 1e-6;
/// Largest |β(N)| accepted as tangent.
pub const TANGENT_TOL: f64 = 1e-12;

/// Scalar product `a`, one-form `beta` and derived data at one point.
#[derive(Clone, Copy, Debug)]
pub struct RandersPoint<T, const D: usize> {
    pub a: Mat<T, D>,
    pub a_inv: Mat<T, D>,
    pub beta: [T; D],
    /// a⁻¹β
    pub beta_sharp: [T; D],
    /// (1 − ‖β‖²)^{1/2}
    pub c: T,
}

/// Unit normal data: `n = cN − β♯`, `nu = n / F(n)`.
#[derive(Clone, Copy, Debug)]
pub struct FNormal<T, const D: usize> {
    pub n: [T; D],
    pub nu: [T; D],
    pub c: T,
}

/// One root of the general normal equation with `n = ĉN − β♯`.
#[derive(Clone, Copy, Debug)]
pub struct NormalRoot<T, const D: usize> {
    pub c_hat: T,
    pub n: [T; D],
    pub f_n: T,
    pub nu: [T; D],
}

impl<T: Real, const D: usize> RandersPoint<T, D> {
    pub fn new(a: Mat<T, D>, beta: [T; D]) -> Result<Self> {
        Self::with_margin(a, beta, DEFAULT_MARGIN)
    }

    pub fn with_margin(a: Mat<T, D>, beta: [T; D], margin: f64) -> Result<Self> {
        let av = linalg::mat_values(&a);
        let scale = linalg::mat_max_abs(&av).max(1.0);
        for i in 0..D {
            for j in 0..i {
                if (av[i][j] - av[j][i]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite(format!("a is not symmetric at ({i},{j})")));
                }
            }
        }
        if !linalg::is_positive_definite(&av) {
            return Err(Error::NotPositiveDefinite("a fails Cholesky factorization".into()));
        }
        let a_inv = linalg::inverse(&a).ok_or_else(|| Error::NotPositiveDefinite("a is singular".into()))?;
        let beta_sharp = linalg::mat_vec(&a_inv, &beta);
        let b2 = linalg::dot(&beta, &beta_sharp);
        let norm = b2.re().max(0.0).sqrt();
        if !(norm <= 1.0 - margin) {
            return Err(Error::Convexity(format!("|beta|_a = {norm} exceeds 1 - {margin}")));
        }
        let c = (T::one() - b2).sqrt();
        Ok(RandersPoint { a, a_inv, beta, beta_sharp, c })
    }

    pub fn inner(&self, u: &[T; D], v: &[T; D]) -> T {
        linalg::form(&self.a, u, v)
    }

    pub fn alpha(&self, y: &[T; D]) -> T {
        self.inner(y, y).sqrt()
    }

    pub fn beta_of(&self, y: &[T; D]) -> T {
        linalg::dot(&self.beta, y)
    }

    /// F(y) = α(y) + β(y).
    pub fn norm(&self, y: &[T; D]) -> T {
        self.alpha(y) + self.beta_of(y)
    }

    fn nonzero(&self, y: &[T; D]) -> Result<T> {
        let al = self.alpha(y);
        if al.re() == 0.0 || !al.re().is_finite() {
            return Err(Error::Degenerate("direction y must be nonzero".into()));
        }
        Ok(al)
    }

    /// g_y = (F/α)a + β⊗β − β(y)/α³·(ay)(ay)ᵗ + (β⊗ay + ay⊗β)/α.
    pub fn fundamental_tensor(&self, y: &[T; D]) -> Result<Mat<T, D>> {
        let al = self.nonzero(y)?;
        let by = self.beta_of(y);
        let f = al + by;
        let ay = linalg::mat_vec(&self.a, y);
        let r = f / al;
        let s = by / (al * al * al);
        let g = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                r * self.a[i][j] + self.beta[i] * self.beta[j] - s * ay[i] * ay[j]
                    + (self.beta[i] * ay[j] + ay[i] * self.beta[j]) / al
            })
        });
        Ok(g)
    }

    /// det g_y − (F/α)^{m+2} det a.
    pub fn fundamental_det_check(&self, y: &[T; D]) -> Result<T> {
        let g = self.fundamental_tensor(y)?;
        let al = self.alpha(y);
        let r = self.norm(y) / al;
        Ok(linalg::det(&g) - r.powi(D as i32 + 1) * linalg::det(&self.a))
    }

    /// I_y(v) = (m+2)/(2F)·(β(v) − ⟨v,y⟩β(y)/α²).
    pub fn mean_cartan(&self, y: &[T; D], v: &[T; D]) -> Result<T> {
        let al = self.nonzero(y)?;
        let f = self.norm(y);
        let k = T::cst((D + 1) as f64) / (f + f);
        Ok(k * (self.beta_of(v) - self.inner(v, y) * self.beta_of(y) / (al * al)))
    }

    /// h_y(u,v) = (F/α)(⟨u,v⟩ − ⟨y,u⟩⟨y,v⟩/α²).
    pub fn angular_form(&self, y: &[T; D], u: &[T; D], v: &[T; D]) -> Result<T> {
        let al = self.nonzero(y)?;
        let f = self.norm(y);
        Ok(f / al * (self.inner(u, v) - self.inner(y, u) * self.inner(y, v) / (al * al)))
    }

    /// Randers norms are C-reducible: C = (I⊗h + cyclic)/(m+2).
    pub fn cartan_torsion(&self, y: &[T; D], u: &[T; D], v: &[T; D], w: &[T; D]) -> Result<T> {
        let iu = self.mean_cartan(y, u)?;
        let iv = self.mean_cartan(y, v)?;
        let iw = self.mean_cartan(y, w)?;
        let s = iu * self.angular_form(y, v, w)? + iv * self.angular_form(y, u, w)? + iw * self.angular_form(y, u, v)?;
        Ok(s / T::cst((D + 1) as f64))
    }

    /// τ(y) = (m+2)·ln √((F/α)c⁻²).
    pub fn distortion(&self, y: &[T; D]) -> Result<T> {
        let al = self.nonzero(y)?;
        let r = self.norm(y) / (al * self.c * self.c);
        Ok(r.ln().scale((D + 1) as f64 * 0.5))
    }

    /// Busemann–Hausdorff density c^{m+2}√det a.
    pub fn volume_factor(&self) -> T {
        self.c.powi(D as i32 + 1) * linalg::det(&self.a).sqrt()
    }

    fn check_unit(&self, normal: &[T; D]) -> Result<()> {
        let l = self.alpha(normal).re();
        if (l - 1.0).abs() > 1e-10 {
            return Err(Error::Degenerate(format!("normal has |N|_a = {l}, expected 1")));
        }
        Ok(())
    }

    /// n = cN − β♯ for a unit normal N with β(N) = 0.
    pub fn f_normal(&self, normal: &[T; D]) -> Result<FNormal<T, D>> {
        self.check_unit(normal)?;
        let bn = self.beta_of(normal).re();
        if bn.abs() > TANGENT_TOL {
            return Err(Error::TangentBeta(format!("beta(N) = {bn:e}; the F-normal formula assumes beta(N) = 0")));
        }
        let c = self.c;
        let n = linalg::vsub(&linalg::vscale(normal, c), &self.beta_sharp);
        let nu = linalg::vscale(&n, (c * c).recip());
        Ok(FNormal { n, nu, c })
    }

    /// Both roots ĉ = β(N) ± (β(N)² + c²)^{1/2}, any β(N).
    pub fn f_normal_general(&self, normal: &[T; D]) -> Result<[NormalRoot<T, D>; 2]> {
        self.check_unit(normal)?;
        let bn = self.beta_of(normal);
        let disc = (bn * bn + self.c * self.c).sqrt();
        let b2 = T::one() - self.c * self.c;
        let root = |c_hat: T| {
            let n = linalg::vsub(&linalg::vscale(normal, c_hat), &self.beta_sharp);
            let f_n = T::one() + c_hat * bn - b2;
            NormalRoot { c_hat, n, f_n, nu: linalg::vscale(&n, f_n.recip()) }
        };
        Ok([root(bn + disc), root(bn - disc)])
    }

    /// Solves g_n(u, v) = ⟨U, v⟩ on W = N^⊥: c²u = U + c⁻²β(U)β♯.
    pub fn g_dual_solve(&self, normal: &[T; D], target: &[T; D]) -> Result<[T; D]> {
        let bn = self.beta_of(normal).re();
        if bn.abs() > TANGENT_TOL {
            return Err(Error::TangentBeta(format!("beta(N) = {bn:e}; the dual solve assumes beta(N) = 0")));
        }
        let off = self.inner(target, normal).re();
        let scale = self.alpha(target).re().max(1.0);
        if off.abs() > 1e-10 * scale {
            return Err(Error::OutOfRange(format!("U is not tangent to the leaf: <U,N> = {off:e}")));
        }
        let ic2 = (self.c * self.c).recip();
        let corr = linalg::vscale(&self.beta_sharp, ic2 * self.beta_of(target));
        Ok(linalg::vscale(&linalg::vadd(target, &corr), ic2))
    }
}

/// A positively homogeneous norm evaluated numerically.
pub trait MinkowskiNorm<const D: usize> {
    fn eval(&self, y: &[f64; D]) -> f64;
}

impl<const D: usize> MinkowskiNorm<D> for RandersPoint<f64, D> {
    fn eval(&self, y: &[f64; D]) -> f64 {
        self.norm(y)
    }
}

/// Any closure works as a norm.
impl<const D: usize, F: Fn(&[f64; D]) -> f64> MinkowskiNorm<D> for F {
    fn eval(&self, y: &[f64; D]) -> f64 {
        self(y)
    }
}

fn shifted<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut p = *y;
    for (s, d) in terms {
        for i in 0..D {
            p[i] += s * d[i];
        }
    }
    p
}

fn unit<const D: usize>(k: usize) -> [f64; D] {
    let mut e = [0.0; D];
    e[k] = 1.0;
    e
}

/// Hessian of F²/2 by central differences; rejects norms violating strong convexity.
pub fn fd_fundamental_tensor<N: MinkowskiNorm<D>, const D: usize>(norm: &N, y: &[f64; D]) -> Result<Mat<f64, D>> {
    let ny = linalg::max_abs(y);
    if ny == 0.0 {
        return Err(Error::Degenerate("direction y must be nonzero".into()));
    }
    let h = f64::EPSILON.powf(0.25) * ny.max(1.0);
    let q = |p: [f64; D]| {
        let f = norm.eval(&p);
        0.5 * f * f
    };
    let mut g = [[0.0; D]; D];
    for i in 0..D {
        for j in i..D {
            let (ei, ej) = (unit::<D>(i), unit::<D>(j));
            let v = (q(shifted(y, &[(h, &ei), (h, &ej)])) - q(shifted(y, &[(h, &ei), (-h, &ej)]))
                - q(shifted(y, &[(-h, &ei), (h, &ej)]))
                + q(shifted(y, &[(-h, &ei), (-h, &ej)])))
                / (4.0 * h * h);
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    if !linalg::is_positive_definite(&g) {
        return Err(Error::NotPositiveDefinite("Hessian of F^2/2 is not positive definite".into()));
    }
    Ok(g)
}

/// C_y(u,v,w) = ¼ ∂³F²(y + su + tv + rw)/∂s∂t∂r by an eight-point stencil.
pub fn fd_cartan_torsion<N: MinkowskiNorm<D>, const D: usize>(
    norm: &N,
    y: &[f64; D],
    u: &[f64; D],
    v: &[f64; D],
    w: &[f64; D],
) -> f64 {
    let h = f64::EPSILON.powf(0.2) * linalg::max_abs(y).max(1.0);
    let mut s = 0.0;
    for a in [-1.0, 1.0] {
        for b in [-1.0, 1.0] {
            for c in [-1.0, 1.0] {
                let f = norm.eval(&shifted(y, &[(a * h, u), (b * h, v), (c * h, w)]));
                s += a * b * c * f * f;
            }
        }
    }
    0.25 * s / (8.0 * h * h * h)
}

/// I_y(v) = g^{ij}C_y(e_i, e_j, v) from the closed-form tensors.
pub fn mean_cartan_by_trace<const D: usize>(p: &RandersPoint<f64, D>, y: &[f64; D], v: &[f64; D]) -> Result<f64> {
    let g = p.fundamental_tensor(y)?;
    let gi = linalg::inverse(&g).ok_or_else(|| Error::NotPositiveDefinite("g_y is singular".into()))?;
    let mut s = 0.0;
    for i in 0..D {
        for j in 0..D {
            s += gi[i][j] * p.cartan_torsion(y, &unit(i), &unit(j), v)?;
        }
    }
    Ok(s)
}
