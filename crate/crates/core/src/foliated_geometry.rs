//! Field geometry on foliated charts.
//!
//! Quantities are computed in three levels, each differentiating the previous one with dual
//! numbers: [`Basic`] (metric data, normals), [`FieldGeometry`] (shape operators, curvature
//! vectors, C♯) and [`DeepSample`] (curvature and derivatives of shape operators).
//!
//! Endomorphisms of the leaf tangent space W are stored as coordinate matrices `M` with
//! `M = M·P`, where `P` is the a-orthogonal projection onto W, so products and traces can be
//! taken directly on coordinates. [`LeafFrame::to_leaf`] gives the m×m form.

use crate::chart::FoliatedChart;
use crate::error::{Error, Result};
use crate::linalg::*;
use crate::matrix::SquareMatrix;
use crate::minkowski::RandersPoint;
use crate::real::{seed, Dual, Real};

pub type Gamma<T, const D: usize> = [[[T; D]; D]; D];
/// `r[i][j][k][l] = R^i_{jkl}`, with R(e_k, e_l)e_j = R^i_{jkl} e_i.
pub type Riemann<T, const D: usize> = [[[[T; D]; D]; D]; D];

fn map_v<T, U, F: Fn(&T) -> U, const D: usize>(v: &[T; D], f: &F) -> [U; D] {
    std::array::from_fn(|i| f(&v[i]))
}

fn map_m<T, U, F: Fn(&T) -> U, const D: usize>(m: &Mat<T, D>, f: &F) -> Mat<U, D> {
    std::array::from_fn(|i| map_v(&m[i], f))
}

fn map_g<T, U, F: Fn(&T) -> U, const D: usize>(g: &Gamma<T, D>, f: &F) -> Gamma<U, D> {
    std::array::from_fn(|i| map_m(&g[i], f))
}

/// `j[i][k] = ∂_k v^i`.
fn jacobian<T: Real, const D: usize>(v: &[Dual<T, D>; D]) -> Mat<T, D> {
    std::array::from_fn(|i| v[i].eps)
}

/// `d[k] = ∂_k m`.
fn mat_partials<T: Real, const D: usize>(m: &Mat<Dual<T, D>, D>) -> [Mat<T, D>; D] {
    std::array::from_fn(|k| map_m(m, &|x: &Dual<T, D>| x.eps[k]))
}

/// Γ^i_{jk} from a metric and its partials.
pub fn christoffel_from<T: Real, const D: usize>(inv: &Mat<T, D>, dm: &[Mat<T, D>; D]) -> Gamma<T, D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                let mut s = T::zero();
                for l in 0..D {
                    s += inv[i][l] * (dm[j][l][k] + dm[k][l][j] - dm[l][j][k]);
                }
                s.scale(0.5)
            })
        })
    })
}

/// `(∇V)[i][j] = ∇_j V^i`.
pub fn covariant_jacobian<T: Real, const D: usize>(jac: &Mat<T, D>, gamma: &Gamma<T, D>, v: &[T; D]) -> Mat<T, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| jac[i][j] + dot(&gamma[i][j], v)))
}

/// Riemann tensor from Γ and its partials `dg[k] = ∂_k Γ`.
pub fn riemann_from<T: Real, const D: usize>(g: &Gamma<T, D>, dg: &[Gamma<T, D>; D]) -> Riemann<T, D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            std::array::from_fn(|k| {
                std::array::from_fn(|l| {
                    let mut s = dg[k][i][l][j] - dg[l][i][k][j];
                    for p in 0..D {
                        s += g[i][k][p] * g[p][l][j] - g[i][l][p] * g[p][k][j];
                    }
                    s
                })
            })
        })
    })
}

/// Endomorphism u ↦ R(u, v)v.
pub fn jacobi_matrix<T: Real, const D: usize>(r: &Riemann<T, D>, v: &[T; D]) -> Mat<T, D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|k| {
            let mut s = T::zero();
            for j in 0..D {
                for l in 0..D {
                    s += r[i][j][k][l] * v[j] * v[l];
                }
            }
            s
        })
    })
}

/// Ric(v, v) = Σ R^i_{jil} v^j v^l.
pub fn ricci<T: Real, const D: usize>(r: &Riemann<T, D>, v: &[T; D]) -> T {
    trace(&jacobi_matrix(r, v))
}

/// Symmetrization ½(M + m⁻¹Mᵗm) of a covariant Jacobian with respect to metric `m`.
fn deformation<T: Real, const D: usize>(nab: &Mat<T, D>, m: &Mat<T, D>, m_inv: &Mat<T, D>) -> Mat<T, D> {
    let t = mat_mul(m_inv, &mat_mul(&transpose(nab), m));
    mat_scale(&mat_add(nab, &t), T::cst(0.5))
}

/// Metric data and normals at one point.
#[derive(Clone, Copy, Debug)]
pub struct Basic<T, const D: usize> {
    pub a: Mat<T, D>,
    pub a_inv: Mat<T, D>,
    pub beta: [T; D],
    pub beta_sharp: [T; D],
    pub c: T,
    /// df
    pub df: [T; D],
    /// a-unit normal N = ∇f/|∇f|
    pub normal: [T; D],
    pub n: [T; D],
    pub nu: [T; D],
    /// g = g_n
    pub g: Mat<T, D>,
}

impl<T: Real, const D: usize> Basic<T, D> {
    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> Basic<U, D> {
        Basic {
            a: map_m(&self.a, &f),
            a_inv: map_m(&self.a_inv, &f),
            beta: map_v(&self.beta, &f),
            beta_sharp: map_v(&self.beta_sharp, &f),
            c: f(&self.c),
            df: map_v(&self.df, &f),
            normal: map_v(&self.normal, &f),
            n: map_v(&self.n, &f),
            nu: map_v(&self.nu, &f),
            g: map_m(&self.g, &f),
        }
    }

    pub fn point(&self) -> RandersPoint<T, D> {
        RandersPoint { a: self.a, a_inv: self.a_inv, beta: self.beta, beta_sharp: self.beta_sharp, c: self.c }
    }

    /// a-orthogonal projection onto W.
    pub fn projection(&self) -> Mat<T, D> {
        mat_sub(&identity(), &outer(&self.normal, &mat_vec(&self.a, &self.normal)))
    }

    /// Mean Cartan torsion I_ν as a covector.
    pub fn mean_cartan_nu(&self) -> [T; D] {
        let p = self.point();
        let al2 = p.inner(&self.nu, &self.nu);
        let f = al2.sqrt() + p.beta_of(&self.nu);
        let k = T::cst((D + 1) as f64) / (f + f);
        let anu = mat_vec(&self.a, &self.nu);
        let bnu = p.beta_of(&self.nu);
        std::array::from_fn(|j| k * (self.beta[j] - anu[j] * bnu / al2))
    }
}

/// Metric data and normals; differentiates the level function once.
pub fn basic<T: Real, const D: usize>(chart: &FoliatedChart, x: &[T; D]) -> Result<Basic<T, D>> {
    let a = chart.metric(x);
    let beta = chart.beta(x);
    let point = RandersPoint::with_margin(a, beta, chart.margin)?;
    let df = chart.level(&seed(x)).eps;
    let grad = mat_vec(&point.a_inv, &df);
    let len2 = dot(&df, &grad);
    if !(len2.re() > 1e-24) {
        return Err(Error::Degenerate(format!("df vanishes at {:?}", map_v(x, &|t: &T| t.re()))));
    }
    let normal = vscale(&grad, len2.sqrt().recip());
    let fnormal = point.f_normal(&normal)?;
    let g = point.fundamental_tensor(&fnormal.n)?;
    Ok(Basic {
        a,
        a_inv: point.a_inv,
        beta,
        beta_sharp: point.beta_sharp,
        c: point.c,
        df,
        normal,
        n: fnormal.n,
        nu: fnormal.nu,
        g,
    })
}

/// Which assembly of c·A^g to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapePath {
    /// Arbitrary β with β(N) = 0.
    General,
    /// ‖β‖_a constant (dc = 0).
    ConstantNorm,
    /// ∇̄β = 0.
    Berwald,
}

/// Shape operators, curvature vectors and C♯ at one point.
#[derive(Clone, Copy, Debug)]
pub struct FieldGeometry<T, const D: usize> {
    pub basic: Basic<T, D>,
    pub proj: Mat<T, D>,
    /// g-orthogonal projection onto W (kernel ν).
    pub proj_g: Mat<T, D>,
    pub gamma_a: Gamma<T, D>,
    pub gamma_g: Gamma<T, D>,
    pub g_inv: Mat<T, D>,
    /// ∇̄N
    pub nab_normal: Mat<T, D>,
    /// Ā = −P∇̄N P
    pub abar: Mat<T, D>,
    /// Z̄ = ∇̄_N N
    pub zbar: [T; D],
    /// ∇̄β♯
    pub nab_beta: Mat<T, D>,
    /// Def_{β♯} in coordinates
    pub def: Mat<T, D>,
    pub dc: [T; D],
    pub u1: [T; D],
    pub u2: [T; D],
    pub ag: Mat<T, D>,
    pub ag_const_norm: Mat<T, D>,
    pub ag_berwald: Mat<T, D>,
    /// Y = Z̄ − c⁻¹(∇̄c)ᵀ
    pub y: [T; D],
    /// Z = ∇_ν ν
    pub z: [T; D],
    /// C♯_ν
    pub csharp: Mat<T, D>,
    /// A = A^g + C♯_ν
    pub finsler: Mat<T, D>,
    /// I_ν as covector
    pub iota: [T; D],
    /// (∇_ν I_ν) as covector
    pub nab_nu_iota: [T; D],
    pub dv_a: T,
    pub dv_f: T,
}

impl<T: Real, const D: usize> FieldGeometry<T, D> {
    pub fn map<U, F: Fn(&T) -> U>(&self, f: F) -> FieldGeometry<U, D> {
        FieldGeometry {
            basic: self.basic.map(&f),
            proj: map_m(&self.proj, &f),
            proj_g: map_m(&self.proj_g, &f),
            gamma_a: map_g(&self.gamma_a, &f),
            gamma_g: map_g(&self.gamma_g, &f),
            g_inv: map_m(&self.g_inv, &f),
            nab_normal: map_m(&self.nab_normal, &f),
            abar: map_m(&self.abar, &f),
            zbar: map_v(&self.zbar, &f),
            nab_beta: map_m(&self.nab_beta, &f),
            def: map_m(&self.def, &f),
            dc: map_v(&self.dc, &f),
            u1: map_v(&self.u1, &f),
            u2: map_v(&self.u2, &f),
            ag: map_m(&self.ag, &f),
            ag_const_norm: map_m(&self.ag_const_norm, &f),
            ag_berwald: map_m(&self.ag_berwald, &f),
            y: map_v(&self.y, &f),
            z: map_v(&self.z, &f),
            csharp: map_m(&self.csharp, &f),
            finsler: map_m(&self.finsler, &f),
            iota: map_v(&self.iota, &f),
            nab_nu_iota: map_v(&self.nab_nu_iota, &f),
            dv_a: f(&self.dv_a),
            dv_f: f(&self.dv_f),
        }
    }

    /// A^g by the requested assembly.
    pub fn ag_path(&self, path: ShapePath) -> Mat<T, D> {
        match path {
            ShapePath::General => self.ag,
            ShapePath::ConstantNorm => self.ag_const_norm,
            ShapePath::Berwald => self.ag_berwald,
        }
    }
}

struct ShapeInputs<T, const D: usize> {
    abar: Mat<T, D>,
    zbar: [T; D],
    nab_beta: Mat<T, D>,
    def: Mat<T, D>,
    nc: T,
}

/// c·A^g from Ā, Z̄, ∇̄β♯, Def and n(c); returns (c·A^g, U₁, U₂).
fn assemble_ag<T: Real, const D: usize>(b: &Basic<T, D>, proj: &Mat<T, D>, s: &ShapeInputs<T, D>) -> (Mat<T, D>, [T; D], [T; D]) {
    let c = b.c;
    let bs = &b.beta_sharp;
    let half = T::cst(0.5);
    let ab_perp = abar_perp(b, &s.abar);
    let bz = dot(&b.beta, &s.zbar);
    let w = vsub(&b.normal, &vscale(bs, c.recip()));
    let nab_w_b = mat_vec(proj, &mat_vec(&s.nab_beta, &w));
    let pdef_b = mat_vec(proj, &mat_vec(&s.def, bs));
    let mut inner = vscale(bs, s.nc);
    inner = vsub(&inner, &vscale(&pdef_b, T::cst(2.0) / c));
    inner = vsub(&inner, &nab_w_b);
    inner = vadd(&inner, &vscale(&s.zbar, c));
    inner = vadd(&inner, &vscale(bs, c * bz));
    inner = vsub(&inner, &ab_perp);
    let u1 = vscale(&inner, -half / (c * c));
    let u2 = vscale(&vsub(&vsub(&nab_w_b, &vscale(&s.zbar, c)), &ab_perp), half);
    let mut cag = mat_sub(&s.abar, &mat_scale(proj, s.nc / (c * c)));
    cag = mat_add(&cag, &mat_scale(&mat_mul(proj, &mat_mul(&s.def, proj)), c.recip()));
    cag = mat_add(&cag, &mat_mul(&outer(bs, &mat_vec(&b.a, &u1)), proj));
    cag = mat_add(&cag, &mat_mul(&outer(&u2, &b.beta), proj));
    (cag, u1, u2)
}

/// Āβ♯ with its a-component along β♯ removed.
fn abar_perp<T: Real, const D: usize>(b: &Basic<T, D>, abar: &Mat<T, D>) -> [T; D] {
    let bs = &b.beta_sharp;
    let ab = mat_vec(abar, bs);
    let bb = form(&b.a, bs, bs);
    if bb.re() == 0.0 {
        return ab;
    }
    vsub(&ab, &vscale(bs, form(&b.a, &ab, bs) / bb))
}

/// C♯_ν(u) = C̄(u) + c⁻²β(C̄(u))β♯, with 2C̄(u) = ⟨Y,u⟩β♯ + β(u)Y + c⁻²β(Y)(u − β(u)β♯).
fn assemble_csharp<T: Real, const D: usize>(b: &Basic<T, D>, proj: &Mat<T, D>, y: &[T; D]) -> Mat<T, D> {
    let c2 = b.c * b.c;
    let bs = &b.beta_sharp;
    let by = dot(&b.beta, y);
    let id = identity::<T, D>();
    let mut cbar = outer(bs, &mat_vec(&b.a, y));
    cbar = mat_add(&cbar, &outer(y, &b.beta));
    cbar = mat_add(&cbar, &mat_scale(&mat_sub(&id, &outer(bs, &b.beta)), by / c2));
    cbar = mat_scale(&cbar, T::cst(0.5));
    let lift = mat_add(&id, &mat_scale(&outer(bs, &b.beta), c2.recip()));
    mat_mul(&lift, &mat_mul(&cbar, proj))
}

/// Shape-level geometry; differentiates [`basic`] once.
pub fn shape<T: Real, const D: usize>(chart: &FoliatedChart, x: &[T; D]) -> Result<FieldGeometry<T, D>> {
    let bd = basic::<Dual<T, D>, D>(chart, &seed(x))?;
    let b = bd.map(|d| d.re);
    let proj = b.projection();
    let gnu = mat_vec(&b.g, &b.nu);
    let proj_g = mat_sub(&identity(), &mat_scale(&outer(&b.nu, &gnu), dot(&b.nu, &gnu).recip()));
    let gamma_a = christoffel_from(&b.a_inv, &mat_partials(&bd.a));
    let g_inv = inverse(&b.g).ok_or_else(|| Error::NotPositiveDefinite("g_n is singular".into()))?;
    let gamma_g = christoffel_from(&g_inv, &mat_partials(&bd.g));

    let nab_normal = covariant_jacobian(&jacobian(&bd.normal), &gamma_a, &b.normal);
    let abar = mat_neg(&mat_mul(&proj, &mat_mul(&nab_normal, &proj)));
    let zbar = mat_vec(&nab_normal, &b.normal);
    let nab_beta = covariant_jacobian(&jacobian(&bd.beta_sharp), &gamma_a, &b.beta_sharp);
    let def = deformation(&nab_beta, &b.a, &b.a_inv);
    let dc = bd.c.eps;
    let nc = dot(&dc, &b.n);
    let c = b.c;

    let inputs = ShapeInputs { abar, zbar, nab_beta, def, nc };
    let (cag, u1, u2) = assemble_ag(&b, &proj, &inputs);
    let ag = mat_scale(&cag, c.recip());
    let (cag_c, _, _) = assemble_ag(&b, &proj, &ShapeInputs { nc: T::zero(), ..inputs });
    let ag_const_norm = mat_scale(&cag_c, c.recip());

    let half = T::cst(0.5);
    let ab_perp = abar_perp(&b, &abar);
    let bz = dot(&b.beta, &zbar);
    let bs = &b.beta_sharp;
    let left = outer(&vadd(&ab_perp, &vscale(&zbar, c)), &b.beta);
    let rv = vsub(&vsub(&ab_perp, &vscale(&zbar, c)), &vscale(bs, c * bz));
    let right = outer(bs, &mat_vec(&b.a, &rv));
    let fin = mat_add(&mat_sub(&abar, &mat_scale(&left, half)), &mat_scale(&right, half / (c * c)));
    let ag_berwald = mat_scale(&mat_mul(&fin, &proj), c.recip());

    let grad_c_t = mat_vec(&proj, &mat_vec(&b.a_inv, &dc));
    let y = vsub(&zbar, &vscale(&grad_c_t, c.recip()));
    let c2 = c * c;
    let z = vadd(&vscale(&y, c2.recip()), &vscale(bs, dot(&b.beta, &y) / (c2 * c2)));
    let csharp = assemble_csharp(&b, &proj, &y);
    let finsler = mat_add(&ag, &csharp);

    let iota_d = bd.mean_cartan_nu();
    let iota = map_v(&iota_d, &|d: &Dual<T, D>| d.re);
    let nab_nu_iota = std::array::from_fn(|j| {
        let mut s = dot(&iota_d[j].eps, &b.nu);
        for k in 0..D {
            for l in 0..D {
                s -= gamma_g[l][k][j] * b.nu[k] * iota[l];
            }
        }
        s
    });

    let dv_a = det(&b.a).sqrt();
    let dv_f = c.powi(D as i32 + 1) * dv_a;
    Ok(FieldGeometry {
        basic: b,
        proj,
        proj_g,
        gamma_a,
        gamma_g,
        g_inv,
        nab_normal,
        abar,
        zbar,
        nab_beta,
        def,
        dc,
        u1,
        u2,
        ag,
        ag_const_norm,
        ag_berwald,
        y,
        z,
        csharp,
        finsler,
        iota,
        nab_nu_iota,
        dv_a,
        dv_f,
    })
}

pub type FieldSample<const D: usize> = FieldGeometry<f64, D>;

/// a-orthonormal basis of the leaf tangent space.
#[derive(Clone, Debug)]
pub struct LeafFrame<const D: usize> {
    pub normal: [f64; D],
    pub basis: Vec<[f64; D]>,
    a: Mat<f64, D>,
}

impl<const D: usize> LeafFrame<D> {
    /// Gram–Schmidt over projected coordinate axes, the axis most aligned with N dropped.
    pub fn new(a: &Mat<f64, D>, normal: &[f64; D]) -> LeafFrame<D> {
        let an = mat_vec(a, normal);
        let mut order: Vec<usize> = (0..D).collect();
        order.sort_by(|&i, &j| an[i].abs().total_cmp(&an[j].abs()).then(i.cmp(&j)));
        let mut basis: Vec<[f64; D]> = Vec::with_capacity(D - 1);
        for &k in &order[..D - 1] {
            let mut v = [0.0; D];
            v[k] = 1.0;
            v = vsub(&v, &vscale(normal, an[k]));
            for q in &basis {
                v = vsub(&v, &vscale(q, form(a, q, &v)));
            }
            let l = form(a, &v, &v).sqrt();
            basis.push(vscale(&v, 1.0 / l));
        }
        LeafFrame { normal: *normal, basis, a: *a }
    }

    pub fn leaf_dim(&self) -> usize {
        D - 1
    }

    /// m×m matrix of an endomorphism of W: entries ⟨e_i, M e_j⟩_a.
    pub fn to_leaf(&self, m: &Mat<f64, D>) -> SquareMatrix<f64> {
        let k = D - 1;
        SquareMatrix::from_fn(k, |i, j| form(&self.a, &self.basis[i], &mat_vec(m, &self.basis[j])))
    }

    /// Components of a leaf vector.
    pub fn leaf_vector(&self, v: &[f64; D]) -> Vec<f64> {
        self.basis.iter().map(|e| form(&self.a, e, v)).collect()
    }

    /// Gram matrix of a bilinear form on the basis.
    pub fn gram(&self, m: &Mat<f64, D>) -> SquareMatrix<f64> {
        SquareMatrix::from_fn(D - 1, |i, j| form(m, &self.basis[i], &self.basis[j]))
    }

    /// Largest deviation from orthonormality and tangency.
    pub fn defect(&self) -> f64 {
        let mut e: f64 = (form(&self.a, &self.normal, &self.normal) - 1.0).abs();
        for (i, u) in self.basis.iter().enumerate() {
            e = e.max(form(&self.a, u, &self.normal).abs());
            for (j, v) in self.basis.iter().enumerate() {
                let d = if i == j { 1.0 } else { 0.0 };
                e = e.max((form(&self.a, u, v) - d).abs());
            }
        }
        e
    }
}

impl<const D: usize> FieldGeometry<f64, D> {
    pub fn frame(&self) -> LeafFrame<D> {
        LeafFrame::new(&self.basic.a, &self.basic.normal)
    }
}

pub fn sample<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<FieldSample<D>> {
    let s = shape::<f64, D>(chart, x)?;
    let bad = !s.finsler.iter().flatten().all(|v| v.is_finite()) || !s.dv_f.is_finite();
    if bad {
        return Err(Error::NonFinite(format!("field geometry at {x:?}")));
    }
    Ok(s)
}

/// Curvature and derivatives of shape operators at one point.
#[derive(Clone, Debug)]
pub struct DeepSample<const D: usize> {
    pub geom: FieldSample<D>,
    pub riemann_a: Riemann<f64, D>,
    pub riemann_g: Riemann<f64, D>,
    /// ∇_ν Z
    pub nab_nu_z: [f64; D],
    /// R̄(·, N)N by contraction
    pub jacobi_a: Mat<f64, D>,
    /// Def_{Z̄} + ∇̄_N Ā − Ā² − Z̄♭⊗Z̄, projected
    pub jacobi_a_identity: Mat<f64, D>,
    /// R^g(·, ν)ν by contraction
    pub jacobi_g: Mat<f64, D>,
    /// Def_Z + ∇_ν A^g − (A^g)² − Z♭⊗Z, projected
    pub jacobi_g_identity: Mat<f64, D>,
    /// R̄(·, ν)ν, the Finsler Jacobi operator on Berwald charts
    pub jacobi_finsler: Mat<f64, D>,
    pub ric_a_nu: f64,
    pub ric_g_nu: f64,
    pub trace_qr: f64,
}

/// ∇_v of a (1,1)-tensor field with partials `dm[k]`.
fn cov_endo<const D: usize>(m: &Mat<f64, D>, dm: &[Mat<f64, D>; D], gamma: &Gamma<f64, D>, v: &[f64; D]) -> Mat<f64, D> {
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let mut s = 0.0;
            for k in 0..D {
                s += v[k] * dm[k][i][j];
                for l in 0..D {
                    s += gamma[i][k][l] * v[k] * m[l][j] - gamma[l][k][j] * v[k] * m[i][l];
                }
            }
            s
        })
    })
}

fn field_partials<const D: usize>(
    sd: &FieldGeometry<Dual<f64, D>, D>,
) -> [FieldGeometry<f64, D>; D] {
    std::array::from_fn(|k| sd.map(|d| d.eps[k]))
}

/// Riccati-type right side Def_V + ∇_w M − M² − V⊗V♭ for a unit field w with M = −∇w
/// (extended by zero along w) and V = ∇_w w, all with respect to `metric`.
#[allow(clippy::too_many_arguments)]
fn riccati_side<const D: usize>(
    m: &Mat<f64, D>,
    dm: &[Mat<f64, D>; D],
    v: &[f64; D],
    jac_v: &Mat<f64, D>,
    gamma: &Gamma<f64, D>,
    metric: &Mat<f64, D>,
    metric_inv: &Mat<f64, D>,
    dir: &[f64; D],
    proj: &Mat<f64, D>,
) -> Mat<f64, D> {
    let nab_v = covariant_jacobian(jac_v, gamma, v);
    let def_v = deformation(&nab_v, metric, metric_inv);
    let nab_m = cov_endo(m, dm, gamma, dir);
    let vv = outer(v, &mat_vec(metric, v));
    let s = mat_sub(&mat_sub(&mat_add(&def_v, &nab_m), &mat_mul(m, m)), &vv);
    mat_mul(proj, &mat_mul(&s, proj))
}

pub fn deep_sample<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<DeepSample<D>> {
    let sd = shape::<Dual<f64, D>, D>(chart, &seed(x))?;
    let s = sd.map(|d| d.re);
    let parts = field_partials(&sd);
    let b = &s.basic;
    let riemann_a = riemann_from(&s.gamma_a, &std::array::from_fn(|k| parts[k].gamma_a));
    let riemann_g = riemann_from(&s.gamma_g, &std::array::from_fn(|k| parts[k].gamma_g));

    let jac = |f: &dyn Fn(&FieldGeometry<f64, D>) -> [f64; D]| -> Mat<f64, D> {
        std::array::from_fn(|i| std::array::from_fn(|k| f(&parts[k])[i]))
    };

    let jacobi_a = mat_mul(&s.proj, &mat_mul(&jacobi_matrix(&riemann_a, &b.normal), &s.proj));
    let jac_zbar = jac(&|p| p.zbar);
    let dabar: [Mat<f64, D>; D] = std::array::from_fn(|k| parts[k].abar);
    let jacobi_a_identity =
        riccati_side(&s.abar, &dabar, &s.zbar, &jac_zbar, &s.gamma_a, &b.a, &b.a_inv, &b.normal, &s.proj);

    let jacobi_g = mat_mul(&jacobi_matrix(&riemann_g, &b.nu), &s.proj);
    let ag_ext = mat_mul(&s.ag, &s.proj_g);
    let dag_ext: [Mat<f64, D>; D] =
        std::array::from_fn(|k| mat_add(&mat_mul(&parts[k].ag, &s.proj_g), &mat_mul(&s.ag, &parts[k].proj_g)));
    let jac_z = jac(&|p| p.z);
    let jacobi_g_identity = mat_mul(
        &riccati_side(&ag_ext, &dag_ext, &s.z, &jac_z, &s.gamma_g, &b.g, &s.g_inv, &b.nu, &s.proj_g),
        &s.proj,
    );
    let jacobi_finsler = mat_mul(&jacobi_matrix(&riemann_a, &b.nu), &s.proj);

    let nab_nu_z = vadd(&mat_vec(&jac_z, &b.nu), &std::array::from_fn(|i| form(&s.gamma_g[i], &b.nu, &s.z)));
    let ric_a_nu = ricci(&riemann_a, &b.nu);
    let ric_g_nu = trace(&jacobi_g);

    // ∇²_{ν,ν}ν = ∇_ν Z − ∇_Z ν, and ∇_Z ν = −A^g Z on W.
    let second = vadd(&nab_nu_z, &mat_vec(&s.ag, &s.z));
    let cz = mat_vec(&s.csharp, &s.z);
    let cc = mat_mul(&s.csharp, &mat_add(&s.csharp, &mat_scale(&s.ag, 2.0)));
    let literal = dot(&s.iota, &vsub(&second, &cz)) + 2.0 * dot(&s.nab_nu_iota, &s.z) - trace(&cc);
    let trace_qr = -literal;

    Ok(DeepSample {
        geom: s,
        riemann_a,
        riemann_g,
        nab_nu_z,
        jacobi_a,
        jacobi_a_identity,
        jacobi_g,
        jacobi_g_identity,
        jacobi_finsler,
        ric_a_nu,
        ric_g_nu,
        trace_qr,
    })
}

/// Unit normal data (N, c, n, ν) at `x`.
pub fn unit_normal_field<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<([f64; D], f64, [f64; D], [f64; D])> {
    let b = basic::<f64, D>(chart, x)?;
    Ok((b.normal, b.c, b.n, b.nu))
}

/// (Ā in the leaf frame, Z̄).
pub fn riemannian_shape_operator<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<(SquareMatrix<f64>, [f64; D])> {
    let s = sample(chart, x)?;
    Ok((s.frame().to_leaf(&s.abar), s.zbar))
}

/// Def_{β♯} = ½(∇̄β♯ + (∇̄β♯)ᵗ) in coordinates (a-symmetric).
pub fn deformation_tensor<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Mat<f64, D>> {
    Ok(sample(chart, x)?.def)
}

pub fn shape_operator_g<const D: usize>(chart: &FoliatedChart, x: &[f64; D], path: ShapePath) -> Result<SquareMatrix<f64>> {
    let s = sample(chart, x)?;
    Ok(s.frame().to_leaf(&s.ag_path(path)))
}

pub fn csharp_tensor<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<SquareMatrix<f64>> {
    let s = sample(chart, x)?;
    Ok(s.frame().to_leaf(&s.csharp))
}

pub fn curvature_vector_z<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<[f64; D]> {
    Ok(sample(chart, x)?.z)
}

pub fn finsler_shape_operator<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<SquareMatrix<f64>> {
    let s = sample(chart, x)?;
    Ok(s.frame().to_leaf(&s.finsler))
}

/// (dV_a, dV_g, dV_F) densities with respect to coordinate volume.
pub fn volume_densities<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<(f64, f64, f64)> {
    let b = basic::<f64, D>(chart, x)?;
    let dv_a = det(&b.a).sqrt();
    let dv_g = det(&b.g).sqrt();
    let dv_f = b.c.powi(D as i32 + 1) * dv_a;
    Ok((dv_a, dv_g, dv_f))
}

/// Independent finite-difference evaluation of the same objects: fourth-order central
/// differences of chart fields, with the explicit field g = g_{n(x)} and the closed-form
/// Cartan torsion.
pub mod oracle {
    use super::*;

    pub const STEP: f64 = 1e-3;

    fn d1<const D: usize, V: Copy, F: Fn(&[f64; D]) -> V>(f: &F, x: &[f64; D], k: usize, h: f64, comb: impl Fn([V; 4]) -> V) -> V {
        let at = |s: f64| {
            let mut y = *x;
            y[k] += s;
            f(&y)
        };
        comb([at(2.0 * h), at(h), at(-h), at(-2.0 * h)])
    }

    fn stencil(v: [f64; 4], h: f64) -> f64 {
        (-v[0] + 8.0 * v[1] - 8.0 * v[2] + v[3]) / (12.0 * h)
    }

    pub fn partial<const D: usize>(f: &impl Fn(&[f64; D]) -> f64, x: &[f64; D], k: usize) -> f64 {
        d1(f, x, k, STEP, |v| stencil(v, STEP))
    }

    pub fn partial_vec<const D: usize>(f: &impl Fn(&[f64; D]) -> [f64; D], x: &[f64; D], k: usize) -> [f64; D] {
        d1(f, x, k, STEP, |v| std::array::from_fn(|i| stencil([v[0][i], v[1][i], v[2][i], v[3][i]], STEP)))
    }

    pub fn partial_mat<const D: usize>(f: &impl Fn(&[f64; D]) -> Mat<f64, D>, x: &[f64; D], k: usize) -> Mat<f64, D> {
        d1(f, x, k, STEP, |v| {
            std::array::from_fn(|i| std::array::from_fn(|j| stencil([v[0][i][j], v[1][i][j], v[2][i][j], v[3][i][j]], STEP)))
        })
    }

    /// `j[i][k] = ∂_k v^i`.
    pub fn jacobian_fd<const D: usize>(f: &impl Fn(&[f64; D]) -> [f64; D], x: &[f64; D]) -> Mat<f64, D> {
        let cols: [[f64; D]; D] = std::array::from_fn(|k| partial_vec(f, x, k));
        std::array::from_fn(|i| std::array::from_fn(|k| cols[k][i]))
    }

    /// Normal data with df by differences.
    #[derive(Clone, Copy, Debug)]
    pub struct Pointwise<const D: usize> {
        pub point: RandersPoint<f64, D>,
        pub normal: [f64; D],
        pub n: [f64; D],
        pub nu: [f64; D],
        pub g: Mat<f64, D>,
    }

    pub fn pointwise<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Pointwise<D>> {
        let point = RandersPoint::with_margin(chart.metric(x), chart.beta(x), chart.margin)?;
        let df: [f64; D] = std::array::from_fn(|k| partial(&|y: &[f64; D]| chart.level(y), x, k));
        let grad = mat_vec(&point.a_inv, &df);
        let normal = vscale(&grad, 1.0 / dot(&df, &grad).sqrt());
        // β(N) vanishes only up to difference error here; use the closed form directly.
        let n = vsub(&vscale(&normal, point.c), &point.beta_sharp);
        let nu = vscale(&n, 1.0 / (point.c * point.c));
        let g = point.fundamental_tensor(&n)?;
        Ok(Pointwise { point, normal, n, nu, g })
    }

    fn christoffel_fd<const D: usize>(metric: &impl Fn(&[f64; D]) -> Mat<f64, D>, x: &[f64; D]) -> Result<Gamma<f64, D>> {
        let dm: [Mat<f64, D>; D] = std::array::from_fn(|k| partial_mat(metric, x, k));
        let inv = inverse(&metric(x)).ok_or_else(|| Error::NotPositiveDefinite("singular metric".into()))?;
        Ok(christoffel_from(&inv, &dm))
    }

    /// Γ of a.
    pub fn christoffel_a<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Gamma<f64, D>> {
        christoffel_fd(&|y: &[f64; D]| chart.metric(y), x)
    }

    /// Γ of the explicit field g = g_{n(x)}.
    pub fn christoffel_g<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Gamma<f64, D>> {
        christoffel_fd(&|y: &[f64; D]| pointwise(chart, y).map(|p| p.g).unwrap_or([[f64::NAN; D]; D]), x)
    }

    /// ∇^g ν as `[i][j] = ∇_j ν^i`.
    pub fn nab_nu_g<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Mat<f64, D>> {
        let p = pointwise(chart, x)?;
        let gamma = christoffel_g(chart, x)?;
        let nu = |y: &[f64; D]| pointwise(chart, y).map(|p| p.nu).unwrap_or([f64::NAN; D]);
        Ok(covariant_jacobian(&jacobian_fd(&nu, x), &gamma, &p.nu))
    }

    /// A^g = −∇^g ν on W, in coordinates.
    pub fn shape_operator_g<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Mat<f64, D>> {
        let p = pointwise(chart, x)?;
        let proj = mat_sub(&identity(), &outer(&p.normal, &mat_vec(&p.point.a, &p.normal)));
        Ok(mat_neg(&mat_mul(&nab_nu_g(chart, x)?, &proj)))
    }

    /// Z = ∇^g_ν ν.
    pub fn curvature_vector_z<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<[f64; D]> {
        let p = pointwise(chart, x)?;
        Ok(mat_vec(&nab_nu_g(chart, x)?, &p.nu))
    }

    /// Ā = −∇̄N on W and Z̄ = ∇̄_N N.
    pub fn riemannian_shape<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<(Mat<f64, D>, [f64; D])> {
        let p = pointwise(chart, x)?;
        let gamma = christoffel_a(chart, x)?;
        let normal = |y: &[f64; D]| pointwise(chart, y).map(|p| p.normal).unwrap_or([f64::NAN; D]);
        let nab = covariant_jacobian(&jacobian_fd(&normal, x), &gamma, &p.normal);
        let proj = mat_sub(&identity(), &outer(&p.normal, &mat_vec(&p.point.a, &p.normal)));
        Ok((mat_neg(&mat_mul(&proj, &mat_mul(&nab, &proj))), mat_vec(&nab, &p.normal)))
    }

    /// −∇̄ν on W; equals the Finsler shape operator A on Berwald charts.
    pub fn berwald_finsler_shape<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Mat<f64, D>> {
        let p = pointwise(chart, x)?;
        let gamma = christoffel_a(chart, x)?;
        let nu = |y: &[f64; D]| pointwise(chart, y).map(|p| p.nu).unwrap_or([f64::NAN; D]);
        let nab = covariant_jacobian(&jacobian_fd(&nu, x), &gamma, &p.nu);
        let proj = mat_sub(&identity(), &outer(&p.normal, &mat_vec(&p.point.a, &p.normal)));
        Ok(mat_neg(&mat_mul(&nab, &proj)))
    }

    /// C♯_ν in the leaf frame: g-dual on W of C_ν(·, ·, Z) with Z from differences.
    pub fn csharp_leaf<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<SquareMatrix<f64>> {
        let p = pointwise(chart, x)?;
        let z = curvature_vector_z(chart, x)?;
        let frame = LeafFrame::new(&p.point.a, &p.normal);
        let k = D - 1;
        let mut bm = SquareMatrix::zeros(k);
        for i in 0..k {
            for j in 0..k {
                bm.set(i, j, p.point.cartan_torsion(&p.nu, &frame.basis[i], &frame.basis[j], &z)?);
            }
        }
        let gw = frame.gram(&p.g);
        let gi = gw.inverse().ok_or_else(|| Error::NotPositiveDefinite("leaf Gram matrix".into()))?;
        gi.mul(&bm)
    }

    /// Riemann tensor of a from second differences.
    pub fn riemann_a<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<Riemann<f64, D>> {
        let gamma = christoffel_a(chart, x)?;
        let h = 1e-3;
        let dg: [Gamma<f64, D>; D] = std::array::from_fn(|k| {
            let at = |s: f64| {
                let mut y = *x;
                y[k] += s;
                christoffel_a(chart, &y).unwrap_or([[[f64::NAN; D]; D]; D])
            };
            let (p2, p1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    std::array::from_fn(|l| stencil([p2[i][j][l], p1[i][j][l], m1[i][j][l], m2[i][j][l]], h))
                })
            })
        });
        Ok(riemann_from(&gamma, &dg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const PTS: [[f64; 3]; 3] = [[0.3, 1.1, 0.7], [2.1, -0.4, 1.9], [4.4, 5.0, 3.3]];

    fn leaf_diff<const D: usize>(f: &LeafFrame<D>, a: &Mat<f64, D>, b: &Mat<f64, D>) -> f64 {
        f.to_leaf(&mat_sub(a, b)).max_abs()
    }

    #[test]
    fn linear_foliation_is_trivial() {
        let chart = FoliatedChart::preset("flat-linear").unwrap();
        let s = sample(&chart, &[0.4, 0.2, 1.0]).unwrap();
        let c = (1.0f64 - 0.09).sqrt();
        assert!((s.basic.c - c).abs() < 1e-15);
        assert_eq!(s.basic.normal, [0.0, 0.0, 1.0]);
        for m in [s.abar, s.ag, s.csharp, s.finsler, s.def] {
            assert!(mat_max_abs(&m) < 1e-15);
        }
        let (da, dg, df) = volume_densities(&chart, &[0.4, 0.2, 1.0]).unwrap();
        assert_eq!(da, 1.0);
        // c^{m+2} with c² = 0.91 and m = 2
        assert!((dg - 0.91f64.powi(2)).abs() < 1e-14 && (df - 0.91f64.powi(2)).abs() < 1e-14);
        assert!((df - 0.91f64.powf(2.5)).abs() > 1e-2);
    }

    #[test]
    fn warped_torus_shape_operator() {
        let chart = FoliatedChart::preset_with("warped-torus", &[("b", 0.0)]).unwrap();
        for x in PTS {
            let (abar, zbar) = riemannian_shape_operator(&chart, &x).unwrap();
            let w = 1.0 + 0.3 * x[0].cos();
            let wp = -0.3 * x[0].sin();
            // frame is (∂₂/w, ∂₃): Ā = −∇̄N restricted
            assert!((*abar.get(0, 0) + wp / w).abs() < 1e-14, "{abar:?}");
            assert!(abar.get(1, 1).abs() < 1e-14 && abar.get(0, 1).abs() < 1e-14);
            assert!(max_abs(&zbar) < 1e-14);
        }
    }

    #[test]
    fn flat_sin_matches_gradient_formula() {
        let chart = FoliatedChart::preset("flat-sin").unwrap();
        let x = [0.8, 0.1, 0.4];
        let (n, c, _, _) = unit_normal_field(&chart, &x).unwrap();
        let v = [-0.2 * 0.8f64.cos(), 0.0, 1.0];
        let l = (v[0] * v[0] + 1.0f64).sqrt();
        for i in 0..3 {
            assert!((n[i] - v[i] / l).abs() < 1e-15);
        }
        assert!((c - 0.91f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shape_paths_agree_with_oracles() {
        for name in ["flat-sin", "tilted", "warped-torus", "warped-parallel"] {
            let chart = FoliatedChart::preset(name).unwrap();
            for x in PTS {
                let s = sample(&chart, &x).unwrap();
                let fr = s.frame();
                assert!(fr.defect() < 1e-12);
                let (abar_o, zbar_o) = oracle::riemannian_shape(&chart, &x).unwrap();
                assert!(leaf_diff(&fr, &s.abar, &abar_o) < 1e-8, "{name} abar");
                assert!(max_abs(&vsub(&s.zbar, &zbar_o)) < 1e-8, "{name} zbar");
                let ag_o = oracle::shape_operator_g(&chart, &x).unwrap();
                assert!(leaf_diff(&fr, &s.ag, &ag_o) < 1e-6, "{name} ag {}", leaf_diff(&fr, &s.ag, &ag_o));
                let z_o = oracle::curvature_vector_z(&chart, &x).unwrap();
                assert!(max_abs(&vsub(&s.z, &z_o)) < 1e-6, "{name} z");
                let cs = oracle::csharp_leaf(&chart, &x).unwrap();
                assert!(fr.to_leaf(&s.csharp).max_abs_diff(&cs) < 1e-6, "{name} csharp");
                // tr C♯ = I_ν(Z)
                assert!((trace(&s.csharp) - dot(&s.iota, &s.z)).abs() < 1e-12);
                // Ā is a-self-adjoint
                let l = fr.to_leaf(&s.abar);
                assert!(l.max_abs_diff(&l.transpose()) < 1e-12);
            }
        }
    }

    #[test]
    fn special_paths() {
        let chart = FoliatedChart::preset("flat-sin").unwrap();
        for x in PTS {
            let s = sample(&chart, &x).unwrap();
            assert!(mat_max_abs(&mat_sub(&s.ag, &s.ag_berwald)) < 1e-12);
            assert!(mat_max_abs(&mat_sub(&s.ag, &s.ag_const_norm)) < 1e-12);
            let fr = s.frame();
            let bo = oracle::berwald_finsler_shape(&chart, &x).unwrap();
            assert!(leaf_diff(&fr, &s.finsler, &bo) < 1e-7);
        }
        let chart = FoliatedChart::preset("warped-torus").unwrap();
        for x in PTS {
            let s = sample(&chart, &x).unwrap();
            assert!(mat_max_abs(&mat_sub(&s.ag, &s.ag_const_norm)) < 1e-12);
        }
    }

    #[test]
    fn deformation_examples() {
        let text = "dim = 3\nmetric_diag = [\"1\",\"1\",\"1\"]\nbeta = [\"0\",\"0.3*sin(x3)\",\"0\"]\nlevel = \"x1\"";
        let chart = FoliatedChart::from_toml(text).unwrap();
        let x = [0.2, 0.5, 0.9];
        let d = deformation_tensor(&chart, &x).unwrap();
        let e = 0.15 * 0.9f64.cos();
        assert!((d[1][2] - e).abs() < 1e-15 && (d[2][1] - e).abs() < 1e-15);
        assert!(mat_max_abs(&d) - e < 1e-15);
        // tr Def^⊤ = div β♯ + β(Z̄)
        for name in ["tilted", "warped-torus"] {
            let chart = FoliatedChart::preset(name).unwrap();
            for x in PTS {
                let s = sample(&chart, &x).unwrap();
                let tr = trace(&mat_mul(&s.proj, &mat_mul(&s.def, &s.proj)));
                let div = trace(&s.nab_beta);
                assert!((tr - div - dot(&s.basic.beta, &s.zbar)).abs() < 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn jacobi_operator_paths() {
        for name in ["warped-torus", "tilted", "flat-sin", "warped-parallel"] {
            let chart = FoliatedChart::preset(name).unwrap();
            for x in PTS {
                let d = deep_sample(&chart, &x).unwrap();
                let fr = d.geom.frame();
                assert!(leaf_diff(&fr, &d.jacobi_a, &d.jacobi_a_identity) < 1e-11, "{name} a");
                assert!(leaf_diff(&fr, &d.jacobi_g, &d.jacobi_g_identity) < 1e-10, "{name} g");
            }
        }
        let chart = FoliatedChart::preset("warped-torus").unwrap();
        for x in PTS {
            let d = deep_sample(&chart, &x).unwrap();
            let w = 1.0 + 0.3 * x[0].cos();
            let wpp = -0.3 * x[0].cos();
            let l = d.geom.frame().to_leaf(&d.jacobi_a);
            assert!((*l.get(0, 0) + wpp / w).abs() < 1e-13);
            assert!(l.get(1, 1).abs() < 1e-13);
        }
    }

    #[test]
    fn trace_qr_matches_ricci_difference_on_berwald_charts() {
        for name in ["flat-sin", "warped-parallel"] {
            let chart = FoliatedChart::preset(name).unwrap();
            for x in PTS {
                let d = deep_sample(&chart, &x).unwrap();
                let diff = d.ric_a_nu - d.ric_g_nu;
                assert!((d.trace_qr - diff).abs() < 1e-10, "{name}: {} vs {}", d.trace_qr, diff);
            }
        }
    }

    #[test]
    fn riemann_against_differences() {
        let chart = FoliatedChart::preset("warped-torus").unwrap();
        let x = [0.7, 0.2, 2.0];
        let d = deep_sample(&chart, &x).unwrap();
        let r = oracle::riemann_a(&chart, &x).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        assert!((d.riemann_a[i][j][k][l] - r[i][j][k][l]).abs() < 1e-7);
                    }
                }
            }
        }
        let _ = PI;
    }
}
