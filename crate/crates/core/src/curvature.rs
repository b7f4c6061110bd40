//! Curvature of the chart metrics, Jacobi operators along the foliation normals, the Q_R trace,
//! and Jacobi tensors Y(t) for constant curvature operators.

use crate::chart::FoliatedChart;
use crate::error::{Error, Result};
use crate::foliated_geometry::{christoffel_from, deep_sample, riemann_from, Gamma, Riemann};
use crate::linalg::{self, Mat};
use crate::matrix::SquareMatrix;
use crate::matrix_invariants::det_series_coefficients;
use crate::real::{seed, Dual, Real};
use crate::scalar::Scalar;

/// Largest |∇̄β♯| entry for which a point counts as Berwald.
pub const BERWALD_TOL: f64 = 1e-9;
/// Largest |R̄| entry for which a point counts as flat.
pub const FLAT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricId {
    /// the Riemannian metric a
    A,
    /// g = g_n
    G,
}

/// Γ of a; metric differentiated with duals.
pub fn christoffel_a<T: Real, const D: usize>(chart: &FoliatedChart, x: &[T; D]) -> Result<Gamma<T, D>> {
    let ad: Mat<Dual<T, D>, D> = chart.metric(&seed(x));
    let a: Mat<T, D> = std::array::from_fn(|i| std::array::from_fn(|j| ad[i][j].re));
    let dm: [Mat<T, D>; D] = std::array::from_fn(|k| std::array::from_fn(|i| std::array::from_fn(|j| ad[i][j].eps[k])));
    let inv = linalg::inverse(&a).ok_or_else(|| Error::NotPositiveDefinite("a is singular".into()))?;
    Ok(christoffel_from(&inv, &dm))
}

pub fn riemann_tensor<const D: usize>(chart: &FoliatedChart, metric: MetricId, x: &[f64; D]) -> Result<Riemann<f64, D>> {
    match metric {
        MetricId::A => {
            let gd = christoffel_a::<Dual<f64, D>, D>(chart, &seed(x))?;
            let g: Gamma<f64, D> = map3(&gd, |d| d.re);
            let dg: [Gamma<f64, D>; D] = std::array::from_fn(|k| map3(&gd, |d| d.eps[k]));
            Ok(riemann_from(&g, &dg))
        }
        MetricId::G => Ok(deep_sample(chart, x)?.riemann_g),
    }
}

fn map3<const D: usize>(g: &Gamma<Dual<f64, D>, D>, f: impl Fn(&Dual<f64, D>) -> f64) -> Gamma<f64, D> {
    std::array::from_fn(|i| std::array::from_fn(|j| std::array::from_fn(|k| f(&g[i][j][k]))))
}

pub fn max_abs_riemann<const D: usize>(r: &Riemann<f64, D>) -> f64 {
    r.iter().flatten().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Jacobi operator R(·, v)v on the leaf, by contraction and by the Riccati identity.
#[derive(Clone, Debug)]
pub struct JacobiOperator {
    pub direct: SquareMatrix<f64>,
    pub identity: SquareMatrix<f64>,
    /// Gram matrix of the defining metric on the leaf frame.
    pub gram: SquareMatrix<f64>,
}

impl JacobiOperator {
    pub fn path_gap(&self) -> f64 {
        self.direct.max_abs_diff(&self.identity)
    }

    /// Asymmetry of gram·R, zero for a self-adjoint operator.
    pub fn self_adjoint_defect(&self) -> f64 {
        let s = self.gram.mul(&self.direct).unwrap_or_else(|_| self.direct.clone());
        s.max_abs_diff(&s.transpose())
    }
}

/// R̄(·, N)N for `A`, R^g(·, ν)ν for `G`.
pub fn jacobi_operator<const D: usize>(chart: &FoliatedChart, metric: MetricId, x: &[f64; D]) -> Result<JacobiOperator> {
    let d = deep_sample(chart, x)?;
    let frame = d.geom.frame();
    let (direct, identity, m) = match metric {
        MetricId::A => (d.jacobi_a, d.jacobi_a_identity, d.geom.basic.a),
        MetricId::G => (d.jacobi_g, d.jacobi_g_identity, d.geom.basic.g),
    };
    Ok(JacobiOperator { direct: frame.to_leaf(&direct), identity: frame.to_leaf(&identity), gram: frame.gram(&m) })
}

/// tr Q_R with the Ricci-difference cross-check where the Berwald identity applies.
#[derive(Clone, Debug)]
pub struct TraceQr {
    pub value: f64,
    pub ric_g: f64,
    /// Ric_ν of F from the Berwald identity, when ∇̄β = 0 at the point.
    pub ric_f: Option<f64>,
}

impl TraceQr {
    /// |tr Q_R − (Ric_ν − Ric^g_ν)| on Berwald points.
    pub fn cross_check(&self) -> Option<f64> {
        self.ric_f.map(|r| (self.value - (r - self.ric_g)).abs())
    }
}

pub fn trace_qr<const D: usize>(chart: &FoliatedChart, x: &[f64; D]) -> Result<TraceQr> {
    let d = deep_sample(chart, x)?;
    let berwald = linalg::mat_max_abs(&d.geom.nab_beta) <= BERWALD_TOL;
    Ok(TraceQr { value: d.trace_qr, ric_g: d.ric_g_nu, ric_f: berwald.then_some(d.ric_a_nu) })
}

/// F² of the chart's Randers norm at (x, y).
fn randers_sq<T: Real, const D: usize>(chart: &FoliatedChart, x: &[T; D], y: &[T; D]) -> T {
    let a = chart.metric(x);
    let b = chart.beta(x);
    let f = linalg::form(&a, y, y).sqrt() + linalg::dot(&b, y);
    f * f
}

/// Geodesic spray G^i = ¼g^{il}(y^k ∂²F²/∂x^k∂y^l − ∂F²/∂x^l), derivatives of F² exact.
pub fn spray<const D: usize>(chart: &FoliatedChart, x: &[f64; D], y: &[f64; D]) -> Result<[f64; D]> {
    let hy = randers_sq(chart, &linalg::lift::<Dual<Dual<f64, D>, D>, D>(x), &seed(&seed(y)));
    let g: Mat<f64, D> = std::array::from_fn(|i| std::array::from_fn(|l| 0.5 * hy.eps[i].eps[l]));
    let g_inv = linalg::inverse(&g).ok_or_else(|| Error::NotPositiveDefinite("fundamental tensor is singular".into()))?;
    let xd: [Dual<Dual<f64, D>, D>; D] = std::array::from_fn(|k| Dual::constant(Dual::var(x[k], k)));
    let yd = seed(&linalg::lift::<Dual<f64, D>, D>(y));
    let m = randers_sq(chart, &xd, &yd);
    let rhs: [f64; D] = std::array::from_fn(|l| (0..D).map(|k| m.eps[l].eps[k] * y[k]).sum::<f64>() - m.re.eps[l]);
    Ok(linalg::vscale(&linalg::mat_vec(&g_inv, &rhs), 0.25))
}

type SprayFn<'a, const D: usize> = dyn Fn(&[f64; D], &[f64; D]) -> Result<[f64; D]> + 'a;

/// Fourth-order central difference in variable j of (x, y) (j < D: x, else y).
fn spray_diff<const D: usize>(f: &SprayFn<'_, D>, x: &[f64; D], y: &[f64; D], j: usize, h: f64) -> Result<[f64; D]> {
    let at = |t: f64| -> Result<[f64; D]> {
        let (mut xs, mut ys) = (*x, *y);
        if j < D {
            xs[j] += t;
        } else {
            ys[j - D] += t;
        }
        f(&xs, &ys)
    };
    let (p2, p1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
    Ok(std::array::from_fn(|i| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h)))
}

/// Ric(y) = R^i_i with R^i_k = 2∂_{x^k}G^i − y^j∂_{x^j}∂_{y^k}G^i + 2G^j∂_{y^j}∂_{y^k}G^i − ∂_{y^j}G^i ∂_{y^k}G^j,
/// the spray differentiated by central differences. Valid for any Randers chart.
pub fn spray_ricci<const D: usize>(chart: &FoliatedChart, x: &[f64; D], y: &[f64; D]) -> Result<f64> {
    let h = 2e-3;
    let g = |xs: &[f64; D], ys: &[f64; D]| spray(chart, xs, ys);
    let g0 = g(x, y)?;
    let mut dx = [[0.0; D]; D];
    let mut dy = [[0.0; D]; D];
    for k in 0..D {
        dx[k] = spray_diff(&g, x, y, k, h)?;
        dy[k] = spray_diff(&g, x, y, D + k, h)?;
    }
    let mut ric = 0.0;
    for k in 0..D {
        let dyk = |xs: &[f64; D], ys: &[f64; D]| spray_diff(&g, xs, ys, D + k, h);
        // ∂_{x^j}∂_{y^k}G and ∂_{y^j}∂_{y^k}G for all j
        let mut mixed = 0.0;
        let mut second = 0.0;
        for j in 0..D {
            mixed += y[j] * spray_diff(&dyk, x, y, j, h)?[k];
            second += g0[j] * spray_diff(&dyk, x, y, D + j, h)?[k];
        }
        let quad: f64 = (0..D).map(|j| dy[j][k] * dy[k][j]).sum();
        ric += 2.0 * dx[k][k] - mixed + 2.0 * second - quad;
    }
    Ok(ric)
}

/// Truncated Jacobi tensor with a remainder estimate.
#[derive(Clone, Debug)]
pub struct JacobiSeries {
    pub value: SquareMatrix<f64>,
    pub remainder: f64,
}

fn inf_norm(m: &SquareMatrix<f64>) -> f64 {
    (0..m.dim()).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Y(t) = Σ_{k ≤ order} Y⁽ᵏ⁾(0)tᵏ/k! with Y⁽²ᵏ⁾(0) = (−R)ᵏ, Y⁽²ᵏ⁺¹⁾(0) = (−R)ᵏA.
pub fn jacobi_series(a: &SquareMatrix<f64>, r: &SquareMatrix<f64>, t: f64, order: usize) -> Result<JacobiSeries> {
    if a.dim() != r.dim() {
        return Err(Error::DimensionMismatch(format!("A is {0}x{0}, R is {1}x{1}", a.dim(), r.dim())));
    }
    if order > 60 {
        return Err(Error::OutOfRange(format!("order {order} exceeds 60")));
    }
    let nr = inf_norm(r);
    let half = order.div_ceil(2).max(1) as f64;
    if nr * t * t > half * half {
        return Err(Error::Divergence(format!("|R| t^2 = {} too large for order {order}", nr * t * t)));
    }
    let neg_r = r.neg();
    let mut even = SquareMatrix::identity(a.dim());
    let mut value = SquareMatrix::zeros(a.dim());
    let mut coef = 1.0;
    for k in 0..=order {
        if k > 0 {
            coef *= t / k as f64;
        }
        let term = if k % 2 == 0 { even.clone() } else { even.mul(a)? };
        value = value.add(&term.scale(&coef))?;
        if k % 2 == 1 {
            even = even.mul(&neg_r)?;
        }
    }
    let mut fact = 1.0;
    for i in 1..=order.max(1) {
        fact *= i as f64;
    }
    let remainder = nr.powi(order.div_ceil(2) as i32) * t.abs().powi(order as i32) / fact * inf_norm(a).max(1.0);
    Ok(JacobiSeries { value, remainder })
}

/// Y(t) from Y″ = −RY, Y(0) = I, Y′(0) = A by classical Runge–Kutta.
pub fn jacobi_ode_oracle(a: &SquareMatrix<f64>, r: &SquareMatrix<f64>, t: f64) -> Result<SquareMatrix<f64>> {
    if a.dim() != r.dim() {
        return Err(Error::DimensionMismatch("A and R differ in size".into()));
    }
    let steps = ((t.abs() * 2000.0).ceil() as usize).max(1);
    let h = t / steps as f64;
    let neg_r = r.neg();
    let f = |y: &SquareMatrix<f64>, v: &SquareMatrix<f64>| -> Result<(SquareMatrix<f64>, SquareMatrix<f64>)> {
        Ok((v.clone(), neg_r.mul(y)?))
    };
    let mut y = SquareMatrix::identity(a.dim());
    let mut v = a.clone();
    for _ in 0..steps {
        let (k1y, k1v) = f(&y, &v)?;
        let (k2y, k2v) = f(&y.add(&k1y.scale(&(h / 2.0)))?, &v.add(&k1v.scale(&(h / 2.0)))?)?;
        let (k3y, k3v) = f(&y.add(&k2y.scale(&(h / 2.0)))?, &v.add(&k2v.scale(&(h / 2.0)))?)?;
        let (k4y, k4v) = f(&y.add(&k3y.scale(&h))?, &v.add(&k3v.scale(&h))?)?;
        let dy = k1y.add(&k2y.scale(&2.0))?.add(&k3y.scale(&2.0))?.add(&k4y)?;
        let dv = k1v.add(&k2v.scale(&2.0))?.add(&k3v.scale(&2.0))?.add(&k4v)?;
        y = y.add(&dy.scale(&(h / 6.0)))?;
        v = v.add(&dv.scale(&(h / 6.0)))?;
    }
    Ok(y)
}

/// B₁…B_k of the Jacobi tensor: B₂ⱼ = (−1)ʲRʲ/(2j)!, B₂ⱼ₊₁ = (−1)ʲRʲA/(2j+1)!.
pub fn jacobi_coefficients<T: Scalar>(a: &SquareMatrix<T>, r: &SquareMatrix<T>, k_max: usize) -> Result<Vec<SquareMatrix<T>>> {
    if a.dim() != r.dim() {
        return Err(Error::DimensionMismatch("A and R differ in size".into()));
    }
    let mut out = Vec::with_capacity(k_max);
    let mut fact = T::one();
    for i in 1..=k_max {
        fact = fact * T::from_i64(i as i64);
        let j = i / 2;
        let mut m = r.pow(j);
        if i % 2 == 1 {
            m = m.mul(a)?;
        }
        if j % 2 == 1 {
            m = m.neg();
        }
        out.push(m.scale(&(T::one() / fact.clone())));
    }
    Ok(out)
}

/// Coefficients of det Y(t) in t up to t^{k_max}.
pub fn det_jacobian_expansion<T: Scalar>(a: &SquareMatrix<T>, r: &SquareMatrix<T>, k_max: usize) -> Result<Vec<T>> {
    if k_max > 6 {
        return Err(Error::OutOfRange(format!("k_max {k_max} exceeds 6")));
    }
    det_series_coefficients(&jacobi_coefficients(a, r, k_max)?, k_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_invariants::sigma_k;
    use crate::scalar::{ratio, Rational};

    fn m(rows: &[&[f64]]) -> SquareMatrix<f64> {
        SquareMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn flat_and_warped_curvature() {
        let chart = FoliatedChart::preset("flat-sin").unwrap();
        assert_eq!(max_abs_riemann(&riemann_tensor(&chart, MetricId::A, &[0.3, 0.2, 0.1]).unwrap()), 0.0);
        let chart = FoliatedChart::preset("warped-torus").unwrap();
        for x0 in [0.2, 1.4, 3.0] {
            let x = [x0, 0.5, 0.5];
            let r = riemann_tensor(&chart, MetricId::A, &x).unwrap();
            let w = 1.0 + 0.3 * x0.cos();
            let k = 0.3 * x0.cos() / w; // −w″/w
            // sectional curvature of the (∂₁, ∂₂) plane: R_{1212}/(a11 a22)
            let r1212 = w * w * r[1][0][1][0];
            assert!((r1212 / (w * w) - k).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetries_and_bianchi() {
        let chart = FoliatedChart::preset("tilted").unwrap();
        let x = [0.9, 0.3, 2.2];
        for metric in [MetricId::A, MetricId::G] {
            let r = riemann_tensor(&chart, metric, &x).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        for l in 0..3 {
                            assert!((r[i][j][k][l] + r[i][j][l][k]).abs() < 1e-12);
                            let b = r[i][j][k][l] + r[i][k][l][j] + r[i][l][j][k];
                            assert!(b.abs() < 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn jacobi_operator_paths_and_adjointness() {
        let chart = FoliatedChart::preset("tilted").unwrap();
        for metric in [MetricId::A, MetricId::G] {
            let j = jacobi_operator(&chart, metric, &[1.2, 0.4, 0.8]).unwrap();
            assert!(j.path_gap() < 1e-10);
            assert!(j.self_adjoint_defect() < 1e-10);
        }
    }

    #[test]
    fn trace_qr_trivial_cases() {
        let chart = FoliatedChart::preset_with("flat-sin", &[("b", 0.0)]).unwrap();
        assert!(trace_qr(&chart, &[0.3, 0.1, 0.2]).unwrap().value.abs() < 1e-14);
        let chart = FoliatedChart::preset("flat-linear").unwrap();
        let q = trace_qr(&chart, &[0.3, 0.1, 0.2]).unwrap();
        assert!(q.value.abs() < 1e-14 && q.cross_check().unwrap() < 1e-14);
        let q = trace_qr(&FoliatedChart::preset("tilted").unwrap(), &[0.3, 0.1, 0.2]).unwrap();
        assert!(q.ric_f.is_none());
    }

    #[test]
    fn spray_ricci_matches_riemannian_and_berwald() {
        // β = 0: Ricci of a
        let chart = FoliatedChart::preset_with("warped-torus", &[("b", 0.0)]).unwrap();
        let x = [0.7, 0.2, 1.1];
        let y = [0.6, -0.3, 0.5];
        let r = riemann_tensor(&chart, MetricId::A, &x).unwrap();
        let expect = crate::foliated_geometry::ricci(&r, &y);
        let got = spray_ricci(&chart, &x, &y).unwrap();
        assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
        // parallel β: Ric_F(y) = Ric_a(y)
        let chart = FoliatedChart::preset("warped-parallel").unwrap();
        let r = riemann_tensor(&chart, MetricId::A, &x).unwrap();
        let expect = crate::foliated_geometry::ricci(&r, &y);
        let got = spray_ricci(&chart, &x, &y).unwrap();
        assert!((got - expect).abs() < 1e-8, "{got} vs {expect}");
    }

    #[test]
    fn series_closed_forms() {
        let a = m(&[&[0.3, 0.1, 0.0], &[0.1, -0.2, 0.4], &[0.0, 0.4, 0.5]]);
        let id = SquareMatrix::identity(3);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let y = jacobi_series(&a, &id, t, 30).unwrap();
            let expect = id.add(&a.scale(&t.tan())).unwrap().scale(&t.cos());
            assert!(y.value.max_abs_diff(&expect) <= 1e-10);
            assert!(y.remainder < 1e-20);
            let y = jacobi_series(&a, &id.neg(), t, 30).unwrap();
            let expect = id.add(&a.scale(&t.tanh())).unwrap().scale(&t.cosh());
            assert!(y.value.max_abs_diff(&expect) <= 1e-10);
            let y = jacobi_series(&a, &SquareMatrix::zeros(3), t, 30).unwrap();
            assert_eq!(y.value, id.add(&a.scale(&t)).unwrap());
        }
        assert!(matches!(jacobi_series(&a, &id.scale(&1e4), 1.0, 10), Err(Error::Divergence(_))));
        assert!(jacobi_series(&a, &id, 1.0, 61).is_err());
    }

    #[test]
    fn ode_oracle_basics() {
        let z = SquareMatrix::zeros(2);
        let id = SquareMatrix::identity(2);
        assert!(jacobi_ode_oracle(&z, &z, 0.7).unwrap().max_abs_diff(&id) < 1e-15);
        let y = jacobi_ode_oracle(&z, &id, 0.7).unwrap();
        assert!(y.max_abs_diff(&id.scale(&0.7f64.cos())) < 1e-12);
    }

    #[test]
    fn expansion_matches_displayed_integrands() {
        let a = SquareMatrix::from_rows(vec![
            vec![ratio(1, 2), ratio(1, 3), ratio(0, 1)],
            vec![ratio(-1, 1), ratio(2, 1), ratio(1, 5)],
            vec![ratio(3, 4), ratio(0, 1), ratio(-2, 3)],
        ])
        .unwrap();
        let r = SquareMatrix::from_rows(vec![
            vec![ratio(2, 1), ratio(1, 7), ratio(1, 1)],
            vec![ratio(1, 7), ratio(-1, 1), ratio(0, 1)],
            vec![ratio(1, 1), ratio(0, 1), ratio(1, 3)],
        ])
        .unwrap();
        let c = det_jacobian_expansion(&a, &r, 3).unwrap();
        let half = ratio(1, 2);
        assert_eq!(c[1], sigma_k(&a, 1));
        assert_eq!(c[2], sigma_k(&a, 2) - half.clone() * r.trace());
        let e3: Rational = sigma_k(&a, 3) - half * a.trace() * r.trace() + ratio(1, 3) * r.mul(&a).unwrap().trace();
        assert_eq!(c[3], e3);
        assert!(det_jacobian_expansion(&a, &r, 7).is_err());
    }

    #[test]
    fn expansion_matches_polynomial_fit() {
        let a = m(&[&[0.3, 0.1, 0.0], &[0.2, -0.2, 0.4], &[0.0, 0.1, 0.5]]);
        let r = m(&[&[0.5, 0.1, 0.0], &[0.1, -0.3, 0.2], &[0.0, 0.2, 0.7]]);
        let coeffs = det_jacobian_expansion(&a, &r, 3).unwrap();
        // fit det Y(t) on symmetric nodes with a degree-8 interpolant
        let nodes: Vec<f64> = (-4..=4).map(|j| j as f64 * 0.05).collect();
        let vals: Vec<f64> = nodes.iter().map(|&t| jacobi_series(&a, &r, t, 30).unwrap().value.det()).collect();
        let n = nodes.len();
        let vander = SquareMatrix::from_fn(n, |i, j| nodes[i].powi(j as i32));
        let inv = vander.inverse().unwrap();
        let fit = inv.mul_vec(&vals).unwrap();
        for k in 0..=3 {
            assert!((fit[k] - coeffs[k]).abs() < 1e-7, "k={k}: {} vs {}", fit[k], coeffs[k]);
        }
    }
}
