//! Periodic quadrature and the registry of integral formulae checked over foliated charts.

use crate::chart::{FoliatedChart, PRESETS};
use crate::curvature::{self, MetricId};
use crate::error::{Error, Result};
use crate::foliated_geometry::{deep_sample, jacobi_matrix, sample, FieldSample, LeafFrame, Riemann};
use crate::linalg::{self, mat_mul};
use crate::matrix::SquareMatrix;
use crate::matrix_invariants::{newton_transform, sigma_k, sigma_pair};
use crate::with_dim;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Pointwise tolerance for hypothesis flags.
pub const HYPOTHESIS_TOL: f64 = 1e-9;
/// Default tolerance relative to the coordinate box volume.
pub const RELATIVE_TOL: f64 = 1e-8;
/// Residual reduction expected from one grid halving on smooth charts.
pub const DOUBLING_GAIN: f64 = 100.0;
/// Points per axis (at least) of the lattice used to scan hypotheses.
const SCAN_BUDGET: f64 = 4000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// dV_a
    A,
    /// dV_F = c^{m+2} dV_a
    F,
}

/// Trapezoidal integral on the full grid and on its even sub-grid.
#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub half_value: f64,
    /// |I_n − I_{n/2}|
    pub error_estimate: f64,
    /// 64ε Σ|f| ΔV, below which residuals are round-off.
    pub roundoff: f64,
}

pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise_sum(l) + pairwise_sum(r)
}

fn check_grid(chart: &FoliatedChart, dim: usize) -> Result<()> {
    if chart.dim != dim {
        return Err(Error::DimensionMismatch(format!("chart {} has dimension {}, field expects {dim}", chart.name, chart.dim)));
    }
    if chart.grid < 2 || chart.grid % 2 != 0 {
        return Err(Error::OutOfRange(format!("grid {} must be even and at least 2", chart.grid)));
    }
    Ok(())
}

/// Integrates already weighted point values; parallel over points, fixed reduction order.
pub fn integrate_weighted<const D: usize, F>(chart: &FoliatedChart, field: F) -> Result<Quadrature>
where
    F: Fn(&[f64; D]) -> Result<f64> + Sync,
{
    check_grid(chart, D)?;
    let n = chart.grid;
    let results: Vec<Result<f64>> = (0..chart.grid_len()).into_par_iter().map(|lin| field(&chart.point_at::<D>(lin))).collect();
    let mut values = Vec::with_capacity(results.len());
    for (lin, r) in results.into_iter().enumerate() {
        let v = r?;
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("integrand is {v} at {:?}", chart.point_at::<D>(lin))));
        }
        values.push(v);
    }
    let even: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(lin, _)| {
            let mut l = *lin;
            (0..D).all(|_| {
                let ok = (l % n) % 2 == 0;
                l /= n;
                ok
            })
        })
        .map(|(_, v)| *v)
        .collect();
    let cell: f64 = chart.periods.iter().map(|p| p / n as f64).product();
    let value = pairwise_sum(&values) * cell;
    let half_value = pairwise_sum(&even) * cell * (1u64 << D) as f64;
    let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    Ok(Quadrature { value, half_value, error_estimate: (value - half_value).abs(), roundoff: 64.0 * f64::EPSILON * pairwise_sum(&abs) * cell })
}

/// ∫ field · dV over the chart box.
pub fn integrate<const D: usize, F>(chart: &FoliatedChart, field: F, measure: Measure) -> Result<Quadrature>
where
    F: Fn(&[f64; D]) -> Result<f64> + Sync,
{
    integrate_weighted::<D, _>(chart, |x| {
        let (dv_a, _, dv_f) = crate::foliated_geometry::volume_densities(chart, x)?;
        Ok(field(x)? * if measure == Measure::A { dv_a } else { dv_f })
    })
}

/// Runs `f` on a pool with `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::OutOfRange("worker count must be positive".into()));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::Io(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flag {
    Berwald,
    Flat,
    LocallySymmetric,
    ConstantNorm,
    ZbarZero,
    Umbilical,
    TotallyGeodesic,
    AbarUmbilical,
    ConstantDistortion,
    ConstantFlagCurvature,
    LeafDimAbove3,
}

impl Flag {
    pub fn name(self) -> &'static str {
        match self {
            Flag::Berwald => "berwald",
            Flag::Flat => "flat",
            Flag::LocallySymmetric => "locally_symmetric",
            Flag::ConstantNorm => "c_const",
            Flag::ZbarZero => "zbar_zero",
            Flag::Umbilical => "umbilical",
            Flag::TotallyGeodesic => "totally_geodesic",
            Flag::AbarUmbilical => "abar_umbilical",
            Flag::ConstantDistortion => "tau_const",
            Flag::ConstantFlagCurvature => "constant_flag_curvature",
            Flag::LeafDimAbove3 => "leaf_dim_above_3",
        }
    }
}

/// Chart properties measured on a scan lattice, as maxima of pointwise defects.
#[derive(Clone, Debug, Serialize)]
pub struct Hypotheses {
    pub chart: String,
    pub leaf_dim: usize,
    pub scan_points: usize,
    /// max |∇̄β♯|
    pub nab_beta: f64,
    /// max |R̄|
    pub riemann: f64,
    /// max |dc|
    pub dc: f64,
    pub zbar: f64,
    /// max |A − HI| of the Finsler shape operator
    pub umbilic_defect: f64,
    pub shape: f64,
    pub abar_umbilic_defect: f64,
    /// spread of τ(ν)
    pub distortion_spread: f64,
    /// max |R_ν − K I| on the leaf, and the range of K
    pub flag_defect: f64,
    pub flag_range: (f64, f64),
}

impl Hypotheses {
    pub fn holds(&self, flag: Flag) -> bool {
        let t = HYPOTHESIS_TOL;
        match flag {
            Flag::Berwald => self.nab_beta <= t,
            Flag::Flat => self.riemann <= t,
            Flag::LocallySymmetric => self.holds(Flag::Berwald) && self.holds(Flag::Flat),
            Flag::ConstantNorm => self.dc <= t,
            Flag::ZbarZero => self.zbar <= t,
            Flag::Umbilical => self.umbilic_defect <= t,
            Flag::TotallyGeodesic => self.shape <= t,
            Flag::AbarUmbilical => self.abar_umbilic_defect <= t,
            Flag::ConstantDistortion => self.distortion_spread <= t,
            Flag::ConstantFlagCurvature => {
                self.holds(Flag::Berwald) && self.flag_defect <= t && self.flag_range.1 - self.flag_range.0 <= t
            }
            Flag::LeafDimAbove3 => self.leaf_dim > 3,
        }
    }

    /// The constant K with R_ν = K·I, when there is one.
    pub fn flag_curvature(&self) -> Option<f64> {
        self.holds(Flag::ConstantFlagCurvature).then(|| 0.5 * (self.flag_range.0 + self.flag_range.1))
    }

    pub fn scan(chart: &FoliatedChart) -> Result<Hypotheses> {
        with_dim!(chart.dim, D => scan_dim::<D>(chart))
    }
}

#[derive(Clone, Copy)]
struct ScanPoint {
    nab_beta: f64,
    riemann: f64,
    dc: f64,
    zbar: f64,
    umb: f64,
    shape: f64,
    abar_umb: f64,
    tau: f64,
    flag_defect: f64,
    flag_k: f64,
}

fn umbilic_defect(m: &SquareMatrix<f64>) -> f64 {
    let h = m.trace() / m.dim() as f64;
    m.max_abs_diff(&SquareMatrix::identity(m.dim()).scale(&h))
}

fn scan_dim<const D: usize>(chart: &FoliatedChart) -> Result<Hypotheses> {
    let per_axis = (SCAN_BUDGET.powf(1.0 / D as f64).floor() as usize).max(4);
    let total = per_axis.pow(D as u32);
    let pts: Vec<Result<ScanPoint>> = (0..total)
        .into_par_iter()
        .map(|lin| {
            let mut l = lin;
            let mut x = [0.0; D];
            for k in (0..D).rev() {
                x[k] = chart.periods[k] * ((l % per_axis) as f64 + 0.37) / per_axis as f64;
                l /= per_axis;
            }
            let s = sample(chart, &x)?;
            let frame = s.frame();
            let af = frame.to_leaf(&s.finsler);
            let r = curvature::riemann_tensor(chart, MetricId::A, &x)?;
            let rf = finsler_jacobi_leaf(&s, &frame, &r);
            let kf = rf.trace() / rf.dim() as f64;
            Ok(ScanPoint {
                nab_beta: linalg::mat_max_abs(&s.nab_beta),
                riemann: curvature::max_abs_riemann(&r),
                dc: linalg::max_abs(&s.dc),
                zbar: linalg::max_abs(&s.zbar),
                umb: umbilic_defect(&af),
                shape: af.max_abs(),
                abar_umb: umbilic_defect(&frame.to_leaf(&s.abar)),
                tau: s.basic.point().distortion(&s.basic.nu)?,
                flag_defect: umbilic_defect(&rf),
                flag_k: kf,
            })
        })
        .collect();
    let mut pts_ok = Vec::with_capacity(pts.len());
    for p in pts {
        pts_ok.push(p?);
    }
    let max = |f: &dyn Fn(&ScanPoint) -> f64| pts_ok.iter().map(f).fold(0.0, f64::max);
    let lo = |f: &dyn Fn(&ScanPoint) -> f64| pts_ok.iter().map(f).fold(f64::INFINITY, f64::min);
    let hi = |f: &dyn Fn(&ScanPoint) -> f64| pts_ok.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    Ok(Hypotheses {
        chart: chart.name.clone(),
        leaf_dim: D - 1,
        scan_points: total,
        nab_beta: max(&|p| p.nab_beta),
        riemann: max(&|p| p.riemann),
        dc: max(&|p| p.dc),
        zbar: max(&|p| p.zbar),
        umbilic_defect: max(&|p| p.umb),
        shape: max(&|p| p.shape),
        abar_umbilic_defect: max(&|p| p.abar_umb),
        distortion_spread: hi(&|p| p.tau) - lo(&|p| p.tau),
        flag_defect: max(&|p| p.flag_defect),
        flag_range: (lo(&|p| p.flag_k), hi(&|p| p.flag_k)),
    })
}

/// R_ν = R̄(·, ν)ν on the leaf, the Finsler Jacobi operator when ∇̄β = 0.
fn finsler_jacobi_leaf<const D: usize>(s: &FieldSample<D>, frame: &LeafFrame<D>, r: &Riemann<f64, D>) -> SquareMatrix<f64> {
    let j = jacobi_matrix(r, &s.basic.nu);
    frame.to_leaf(&mat_mul(&s.proj_g, &mat_mul(&j, &s.proj)))
}

/// Integral formulae over a closed foliated chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FormulaId {
    /// ∫σ₁(A)dV_F = 0
    MeanCurvature,
    /// ∫(σ₂(A) − ½tr R)dV_F = 0
    SecondOrder,
    /// ∫(σ₃(A) − ½tr A tr R + ⅓tr(RA))dV_F = 0
    ThirdOrder,
    /// ∫Σ_{‖λ‖=k} σ_λ(B₁, …, B_k)dV_F = 0 with the Jacobi-tensor coefficients B_i
    JacobiSeries,
    /// ∫σ_k(A)dV_F = 0 for zero flag curvature
    FlatSigma,
    /// ∫σ_k(A)dV_F = K^{k/2}C(m/2, k/2)Vol_F (m, k even), 0 otherwise
    ConstantCurvatureSigma,
    /// ∫tr R dV_F = 0 and ∫(σ₂(R) + ⅙tr R²)dV_F = 0 for totally geodesic leaves
    TotallyGeodesicSet,
    /// ∫(m(m−1)H² − tr R)dV_F = 0 for umbilical leaves
    UmbilicalSecond,
    /// ∫H(m(m−1)(m−2)/(3m−2)·H² − tr R)dV_F = 0 for umbilical leaves
    UmbilicalThird,
    /// ∫I_ν(∇_ν ν)dV_F = 0
    CartanMeanCurvature,
    /// ∫(σ₂(C♯) + tr A^g tr C♯ − tr(A^g C♯) − ½tr Q_R)dV_F = 0
    CartanSecondOrder,
    /// ∫(c^{m+1}σ₁(Ā) − N(c^{m+1}))dV_a = 0
    RandersReeb,
    /// Randers σ_k formula in terms of Ā, cC♯, U₁, U₂ over dV_a
    RandersSigma,
    /// Randers σ_k formula with Z̄ = 0 in terms of Āβ♯
    RandersGeodesicNormal,
    /// Randers σ_k formula for totally geodesic leaves in terms of C♯ and Z̄
    RandersTotallyGeodesic,
    /// ∫σ₁(C♯_ν)dV_a = 0
    CartanTrace,
}

pub const ALL_FORMULAS: &[FormulaId] = &[
    FormulaId::MeanCurvature,
    FormulaId::SecondOrder,
    FormulaId::ThirdOrder,
    FormulaId::JacobiSeries,
    FormulaId::FlatSigma,
    FormulaId::ConstantCurvatureSigma,
    FormulaId::TotallyGeodesicSet,
    FormulaId::UmbilicalSecond,
    FormulaId::UmbilicalThird,
    FormulaId::CartanMeanCurvature,
    FormulaId::CartanSecondOrder,
    FormulaId::RandersReeb,
    FormulaId::RandersSigma,
    FormulaId::RandersGeodesicNormal,
    FormulaId::RandersTotallyGeodesic,
    FormulaId::CartanTrace,
];

/// How much geometry an integrand needs per point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Level {
    Shape,
    Curvature,
    Deep,
}

impl FormulaId {
    pub fn id(self) -> &'static str {
        match self {
            FormulaId::MeanCurvature => "eq61",
            FormulaId::SecondOrder => "eq62",
            FormulaId::ThirdOrder => "eq63",
            FormulaId::JacobiSeries => "eq-main-k",
            FormulaId::FlatSigma => "eq5e-k",
            FormulaId::ConstantCurvatureSigma => "eq5f-b-k",
            FormulaId::TotallyGeodesicSet => "eq73-set",
            FormulaId::UmbilicalSecond => "eq75a",
            FormulaId::UmbilicalThird => "eq75",
            FormulaId::CartanMeanCurvature => "E-Q61",
            FormulaId::CartanSecondOrder => "E-Q62",
            FormulaId::RandersReeb => "E-IF1-Randers0",
            FormulaId::RandersSigma => "E-IF-Randers-k",
            FormulaId::RandersGeodesicNormal => "eq5f-b-R2",
            FormulaId::RandersTotallyGeodesic => "E-IF-Randers-k-tg",
            FormulaId::CartanTrace => "Ex-k1",
        }
    }

    /// Accepts the registry id, or the id without its `-k`/`-set` suffix.
    pub fn parse(s: &str) -> Result<FormulaId> {
        ALL_FORMULAS
            .iter()
            .copied()
            .find(|f| {
                let id = f.id();
                id == s || id.strip_suffix("-k").or_else(|| id.strip_suffix("-set")) == Some(s)
            })
            .ok_or_else(|| {
                let known: Vec<&str> = ALL_FORMULAS.iter().map(|f| f.id()).collect();
                Error::OutOfRange(format!("unknown formula `{s}`; known: {}", known.join(", ")))
            })
    }

    pub fn requires(self) -> &'static [Flag] {
        use Flag::*;
        match self {
            FormulaId::MeanCurvature | FormulaId::RandersReeb => &[],
            FormulaId::SecondOrder => &[Berwald],
            FormulaId::ThirdOrder | FormulaId::JacobiSeries | FormulaId::FlatSigma => &[LocallySymmetric],
            FormulaId::ConstantCurvatureSigma => &[ConstantFlagCurvature],
            FormulaId::TotallyGeodesicSet => &[TotallyGeodesic, Berwald, Flat],
            FormulaId::UmbilicalSecond | FormulaId::UmbilicalThird => &[Umbilical, LocallySymmetric],
            FormulaId::CartanMeanCurvature | FormulaId::CartanSecondOrder => &[ConstantDistortion],
            FormulaId::RandersSigma => &[Berwald, Flat],
            FormulaId::RandersGeodesicNormal => &[Berwald, Flat, ZbarZero, LeafDimAbove3],
            FormulaId::RandersTotallyGeodesic => &[Berwald, Flat, AbarUmbilical],
            FormulaId::CartanTrace => &[Berwald],
        }
    }

    pub fn measure(self) -> Measure {
        match self {
            FormulaId::RandersReeb
            | FormulaId::RandersSigma
            | FormulaId::RandersGeodesicNormal
            | FormulaId::RandersTotallyGeodesic
            | FormulaId::CartanTrace => Measure::A,
            _ => Measure::F,
        }
    }

    /// Admissible k for leaf dimension m.
    pub fn k_range(self, m: usize) -> (usize, usize) {
        match self {
            FormulaId::MeanCurvature | FormulaId::CartanMeanCurvature | FormulaId::RandersReeb | FormulaId::CartanTrace => (1, 1),
            FormulaId::SecondOrder | FormulaId::UmbilicalSecond | FormulaId::CartanSecondOrder => (2, 2),
            FormulaId::ThirdOrder | FormulaId::UmbilicalThird => (3, 3),
            FormulaId::JacobiSeries => (1, m.min(6)),
            FormulaId::ConstantCurvatureSigma => (0, m),
            FormulaId::TotallyGeodesicSet => (1, 2),
            FormulaId::FlatSigma | FormulaId::RandersSigma | FormulaId::RandersGeodesicNormal | FormulaId::RandersTotallyGeodesic => (1, m),
        }
    }

    /// Largest k accepted when requested explicitly; σ_k vanishes for k > m, so the
    /// zero-curvature family stays meaningful (trivially) past the leaf dimension.
    pub fn k_limit(self, m: usize) -> usize {
        match self {
            FormulaId::FlatSigma => 6,
            _ => self.k_range(m).1,
        }
    }

    fn level(self) -> Level {
        match self {
            FormulaId::SecondOrder
            | FormulaId::ThirdOrder
            | FormulaId::JacobiSeries
            | FormulaId::TotallyGeodesicSet
            | FormulaId::UmbilicalSecond
            | FormulaId::UmbilicalThird => Level::Curvature,
            FormulaId::CartanSecondOrder => Level::Deep,
            _ => Level::Shape,
        }
    }
}

impl fmt::Display for FormulaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Leaf-frame data shared by the integrands at one point.
struct PointData {
    m: usize,
    c: f64,
    /// Finsler shape operator A = A^g + C♯_ν
    af: SquareMatrix<f64>,
    ag: SquareMatrix<f64>,
    abar: SquareMatrix<f64>,
    cs: SquareMatrix<f64>,
    bs: Vec<f64>,
    zbar: Vec<f64>,
    /// R_ν, present at curvature level
    rf: Option<SquareMatrix<f64>>,
    /// I_ν(∇_ν ν)
    iota_z: f64,
    /// N(c)
    nc: f64,
    trace_qr: Option<f64>,
    dv_a: f64,
    dv_f: f64,
}

fn point_data<const D: usize>(chart: &FoliatedChart, x: &[f64; D], level: Level) -> Result<PointData> {
    let (s, trace_qr) = if level == Level::Deep {
        let d = deep_sample(chart, x)?;
        (d.geom, Some(d.trace_qr))
    } else {
        (sample(chart, x)?, None)
    };
    let frame = s.frame();
    let rf = if level >= Level::Curvature {
        let r = curvature::riemann_tensor(chart, MetricId::A, x)?;
        Some(finsler_jacobi_leaf(&s, &frame, &r))
    } else {
        None
    };
    Ok(PointData {
        m: D - 1,
        c: s.basic.c,
        af: frame.to_leaf(&s.finsler),
        ag: frame.to_leaf(&s.ag),
        abar: frame.to_leaf(&s.abar),
        cs: frame.to_leaf(&s.csharp),
        bs: frame.leaf_vector(&s.basic.beta_sharp),
        zbar: frame.leaf_vector(&s.zbar),
        rf,
        iota_z: linalg::dot(&s.iota, &s.z),
        nc: linalg::dot(&s.dc, &s.basic.normal),
        trace_qr,
        dv_a: s.dv_a,
        dv_f: s.dv_f,
    })
}

fn dotv(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn mv(m: &SquareMatrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    m.mul_vec(v)
}

/// Matrix of u ↦ ⟨w, u⟩v in the orthonormal leaf frame.
fn rank_one(v: &[f64], w: &[f64]) -> Result<SquareMatrix<f64>> {
    SquareMatrix::outer(v, w)
}

/// Pieces of c^kσ_k(A) = σ_k(Ā) + X on Berwald charts: returns (c^kσ_k(A), σ_k(Ā), X).
fn randers_sigma_parts(p: &PointData, k: usize) -> Result<(f64, f64, f64)> {
    let c = p.c;
    let ccs = p.cs.scale(&c);
    let ab = mv(&p.abar, &p.bs)?;
    let u1: Vec<f64> = ab.iter().zip(&p.zbar).map(|(a, z)| 0.5 / (c * c) * (a - c * z)).collect();
    let u2: Vec<f64> = ab.iter().zip(&p.zbar).map(|(a, z)| -0.5 * (a + c * z)).collect();
    let mut x = 0.0;
    for j in 1..=k {
        x += sigma_pair(&p.abar, &ccs, k - j, j)?;
    }
    let b = p.abar.add(&ccs)?;
    x += dotv(&mv(&newton_transform(&b, k - 1)?, &p.bs)?, &u1);
    let b1 = b.add(&rank_one(&p.bs, &u1)?)?;
    x += dotv(&mv(&newton_transform(&b1, k - 1)?, &u2)?, &p.bs);
    Ok((c.powi(k as i32) * sigma_k(&p.af, k), sigma_k(&p.abar, k), x))
}

fn integrand_value(f: FormulaId, k: usize, p: &PointData) -> Result<f64> {
    let m = p.m as f64;
    let r = || p.rf.as_ref().ok_or_else(|| Error::Degenerate("curvature not sampled".into()));
    let c = p.c;
    Ok(match f {
        FormulaId::MeanCurvature => sigma_k(&p.af, 1),
        FormulaId::SecondOrder => sigma_k(&p.af, 2) - 0.5 * r()?.trace(),
        FormulaId::ThirdOrder => {
            let r = r()?;
            sigma_k(&p.af, 3) - 0.5 * p.af.trace() * r.trace() + r.mul(&p.af)?.trace() / 3.0
        }
        FormulaId::JacobiSeries => curvature::det_jacobian_expansion(&p.af, r()?, k)?[k],
        FormulaId::FlatSigma | FormulaId::ConstantCurvatureSigma => sigma_k(&p.af, k),
        FormulaId::TotallyGeodesicSet => {
            let r = r()?;
            if k == 1 {
                r.trace()
            } else {
                sigma_k(r, 2) + r.mul(r)?.trace() / 6.0
            }
        }
        FormulaId::UmbilicalSecond => {
            let h = p.af.trace() / m;
            m * (m - 1.0) * h * h - r()?.trace()
        }
        FormulaId::UmbilicalThird => {
            let h = p.af.trace() / m;
            h * (m * (m - 1.0) * (m - 2.0) / (3.0 * m - 2.0) * h * h - r()?.trace())
        }
        FormulaId::CartanMeanCurvature => p.iota_z,
        FormulaId::CartanSecondOrder => {
            let qr = p.trace_qr.ok_or_else(|| Error::Degenerate("trace Q_R not sampled".into()))?;
            sigma_k(&p.cs, 2) + p.ag.trace() * p.cs.trace() - p.ag.mul(&p.cs)?.trace() - 0.5 * qr
        }
        FormulaId::RandersReeb => {
            let e = p.m as i32 + 1;
            c.powi(e) * sigma_k(&p.abar, 1) - e as f64 * c.powi(e - 1) * p.nc
        }
        FormulaId::RandersSigma => randers_sigma_parts(p, k)?.2,
        FormulaId::RandersGeodesicNormal => {
            let ab = mv(&p.abar, &p.bs)?;
            let t0 = newton_transform(&p.abar, k - 1)?;
            let shifted = p.abar.add(&rank_one(&p.bs, &ab)?.scale(&(0.5 / (c * c))))?;
            let t1 = newton_transform(&shifted, k - 1)?;
            dotv(&mv(&t0, &ab)?, &p.bs) / (c * c) - dotv(&mv(&t1, &ab)?, &p.bs)
        }
        FormulaId::RandersTotallyGeodesic => {
            let ccs = p.cs.scale(&c);
            let t0 = newton_transform(&ccs, k - 1)?;
            let shifted = ccs.sub(&rank_one(&p.bs, &p.zbar)?.scale(&(0.5 / c)))?;
            let t1 = newton_transform(&shifted, k - 1)?;
            c.powi(k as i32) * sigma_k(&p.cs, k) - 0.5 / c * dotv(&mv(&t0, &p.bs)?, &p.zbar) - 0.5 * c * dotv(&mv(&t1, &p.zbar)?, &p.bs)
        }
        FormulaId::CartanTrace => p.cs.trace(),
    })
}

/// Largest |c^kσ_k(A) − σ_k(Ā) − X| over the chart grid (Berwald charts).
pub fn randers_decomposition_defect(chart: &FoliatedChart, k: usize) -> Result<f64> {
    with_dim!(chart.dim, D => {
        let vals: Vec<Result<f64>> = (0..chart.grid_len())
            .into_par_iter()
            .map(|lin| {
                let p = point_data::<D>(chart, &chart.point_at::<D>(lin), Level::Shape)?;
                let (direct, base, x) = randers_sigma_parts(&p, k)?;
                Ok((direct - base - x).abs())
            })
            .collect();
        vals.into_iter().try_fold(0.0f64, |m, v| Ok(m.max(v?)))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ResidualReport {
    pub formula: String,
    pub chart: String,
    pub k: usize,
    pub grid: usize,
    pub value: f64,
    pub expected: f64,
    pub residual: f64,
    pub error_estimate: f64,
    pub verdict: Verdict,
    pub seconds: Option<f64>,
    pub tolerance: f64,
    pub measure: Measure,
    /// residual at half resolution
    pub half_residual: f64,
    /// residual shrank by DOUBLING_GAIN from half to full grid, or is below the round-off floor
    /// max(64ε Σ|f|ΔV, 64ε·box volume)
    pub converged: bool,
    pub roundoff: f64,
    pub notes: Vec<String>,
}

/// One formula on one chart at one grid; `k = None` runs the whole admissible range.
#[derive(Clone, Debug)]
pub struct Job {
    pub formula: FormulaId,
    pub chart: FoliatedChart,
    pub k: Option<usize>,
    pub grid: usize,
    pub tolerance: Option<f64>,
    pub measure: Option<Measure>,
}

impl Job {
    pub fn new(formula: FormulaId, chart: &FoliatedChart, k: Option<usize>, grid: usize) -> Job {
        Job { formula, chart: chart.clone(), k, grid, tolerance: None, measure: None }
    }

    pub fn ks(&self) -> Result<Vec<usize>> {
        let m = self.chart.dim - 1;
        let (lo, hi) = self.formula.k_range(m);
        let hi_explicit = self.formula.k_limit(m);
        match self.k {
            None => Ok((lo..=hi).collect()),
            Some(k) if (lo..=hi_explicit).contains(&k) => Ok(vec![k]),
            Some(k) => Err(Error::OutOfRange(format!("k = {k} outside {lo}..={hi_explicit} for {} on {}", self.formula, self.chart.name))),
        }
    }
}

/// Flags of `formula` that fail on the chart.
pub fn violations(formula: FormulaId, hyp: &Hypotheses) -> Vec<Flag> {
    formula.requires().iter().copied().filter(|f| !hyp.holds(*f)).collect()
}

fn hypothesis_error(formula: FormulaId, chart: &str, flag: Flag) -> Error {
    Error::Hypothesis { formula: formula.id().into(), chart: chart.into(), flag: flag.name().into() }
}

pub fn check_hypotheses(formula: FormulaId, hyp: &Hypotheses) -> Result<()> {
    match violations(formula, hyp).first() {
        Some(f) => Err(hypothesis_error(formula, &hyp.chart, *f)),
        None => Ok(()),
    }
}

/// Runs one (formula, chart, k, grid) with hypotheses already established.
pub fn verify_checked(job: &Job, k: usize, hyp: &Hypotheses) -> Result<ResidualReport> {
    check_hypotheses(job.formula, hyp)?;
    let chart = job.chart.with_grid(job.grid);
    let f = job.formula;
    let measure = job.measure.unwrap_or(f.measure());
    let level = f.level();
    let q = with_dim!(chart.dim, D => integrate_weighted::<D, _>(&chart, |x| {
        let p = point_data::<D>(&chart, x, level)?;
        Ok(integrand_value(f, k, &p)? * if measure == Measure::A { p.dv_a } else { p.dv_f })
    }))?;
    let mut notes = Vec::new();
    let (expected, expected_half) = match f {
        FormulaId::ConstantCurvatureSigma => {
            let m = chart.dim - 1;
            let kk = hyp.flag_curvature().ok_or_else(|| hypothesis_error(f, &chart.name, Flag::ConstantFlagCurvature))?;
            let factor = if k == 0 {
                1.0
            } else if m % 2 == 0 && k % 2 == 0 {
                kk.powi(k as i32 / 2) * binomial(m / 2, k / 2)
            } else {
                0.0
            };
            if factor != 0.0 {
                let vol = volume(&chart, Measure::F)?;
                notes.push(format!("K = {kk:e}, Vol_F = {}", vol.value));
                (factor * vol.value, factor * vol.half_value)
            } else {
                (0.0, 0.0)
            }
        }
        _ => (0.0, 0.0),
    };
    if f == FormulaId::CartanSecondOrder {
        notes.push(ric_cross_check_note(&chart, hyp)?);
    }
    if matches!(f, FormulaId::TotallyGeodesicSet) {
        notes.push("curvature-derivative terms vanish on flat charts".into());
    }
    let residual = (q.value - expected).abs();
    let half_residual = (q.half_value - expected_half).abs();
    let error_estimate = (q.value - expected - (q.half_value - expected_half)).abs();
    let tolerance = job.tolerance.unwrap_or(RELATIVE_TOL * chart.volume());
    let verdict = if residual <= tolerance.max(3.0 * error_estimate) { Verdict::Pass } else { Verdict::Fail };
    let floor = q.roundoff.max(64.0 * f64::EPSILON * chart.volume());
    let converged = residual <= half_residual / DOUBLING_GAIN || residual <= floor;
    if !converged {
        notes.push(format!("grid doubling reduced the residual only from {half_residual:e} to {residual:e}"));
    }
    Ok(ResidualReport {
        formula: f.id().into(),
        chart: chart.name.clone(),
        k,
        grid: chart.grid,
        value: q.value,
        expected,
        residual,
        error_estimate,
        verdict,
        seconds: None,
        tolerance,
        measure,
        half_residual,
        converged,
        roundoff: floor,
        notes,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Volume of the chart box for the measure.
pub fn volume(chart: &FoliatedChart, measure: Measure) -> Result<Quadrature> {
    with_dim!(chart.dim, D => integrate::<D, _>(chart, |_| Ok(1.0), measure))
}

/// Ric-difference cross-check of tr Q_R on a 4^dim lattice: through the Berwald identity
/// Ric_ν = Ric_a(ν) where it applies, otherwise through the spray Ricci curvature.
fn ric_cross_check_note(chart: &FoliatedChart, hyp: &Hypotheses) -> Result<String> {
    let coarse = chart.with_grid(4);
    let berwald = hyp.holds(Flag::Berwald);
    let worst = with_dim!(coarse.dim, D => {
        let vals: Vec<Result<f64>> = (0..coarse.grid_len())
            .into_par_iter()
            .map(|lin| {
                let x = coarse.point_at::<D>(lin);
                if berwald {
                    let q = curvature::trace_qr(&coarse, &x)?;
                    return Ok(q.cross_check().unwrap_or(f64::INFINITY));
                }
                let d = deep_sample(&coarse, &x)?;
                let ric_f = curvature::spray_ricci(&coarse, &x, &d.geom.basic.nu)?;
                Ok((d.trace_qr - (ric_f - d.ric_g_nu)).abs())
            })
            .collect();
        vals.into_iter().try_fold(0.0f64, |m, v| Ok(m.max(v?)))
    })?;
    Ok(if berwald {
        format!("ric cross-check (Berwald identity) max |tr Q_R - (Ric - Ric^g)| = {worst:e}")
    } else {
        format!("Berwald ric cross-check skipped: chart is not Berwald; spray cross-check max |tr Q_R - (Ric - Ric^g)| = {worst:e}")
    })
}

/// Scans the chart and runs every k of the job.
pub fn verify(job: &Job) -> Result<Vec<ResidualReport>> {
    let hyp = Hypotheses::scan(&job.chart)?;
    job.ks()?.into_iter().map(|k| verify_checked(job, k, &hyp)).collect()
}

/// Checks every job's hypotheses first (all violations reported together), then runs them in order.
pub fn verify_suite(jobs: &[Job]) -> Result<Vec<ResidualReport>> {
    verify_suite_timed(jobs, false)
}

/// As [`verify_suite`]; with `timings` each report records its wall-clock seconds.
pub fn verify_suite_timed(jobs: &[Job], timings: bool) -> Result<Vec<ResidualReport>> {
    let mut scans: Vec<(String, Hypotheses)> = Vec::new();
    let mut problems = Vec::new();
    let mut plan = Vec::new();
    for job in jobs {
        let hash = job.chart.content_hash();
        if !scans.iter().any(|(h, _)| *h == hash) {
            scans.push((hash.clone(), Hypotheses::scan(&job.chart)?));
        }
        let hyp = &scans.iter().find(|(h, _)| *h == hash).expect("scanned").1;
        for flag in violations(job.formula, hyp) {
            problems.push(hypothesis_error(job.formula, &job.chart.name, flag));
        }
        match job.ks() {
            Ok(ks) => plan.push((job, hash, ks)),
            Err(e) => problems.push(e),
        }
    }
    if problems.len() == 1 {
        return Err(problems.remove(0));
    }
    if !problems.is_empty() {
        return Err(Error::Aggregate(problems.iter().map(|e| e.to_string()).collect()));
    }
    let mut out = Vec::new();
    for (job, hash, ks) in plan {
        let hyp = &scans.iter().find(|(h, _)| *h == hash).expect("scanned").1;
        for k in ks {
            let start = std::time::Instant::now();
            let mut r = verify_checked(job, k, hyp)?;
            if timings {
                r.seconds = Some(start.elapsed().as_secs_f64());
            }
            out.push(r);
        }
    }
    Ok(out)
}

/// Grid used by the default suite for a chart of the given dimension.
pub fn default_grid(dim: usize) -> usize {
    match dim {
        2 => 48,
        3 => 24,
        4 => 12,
        _ => 8,
    }
}

/// Every preset paired with every formula whose hypotheses it satisfies.
pub fn default_suite() -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    for name in PRESETS {
        let chart = FoliatedChart::preset(name)?;
        let hyp = Hypotheses::scan(&chart)?;
        for &f in ALL_FORMULAS {
            if violations(f, &hyp).is_empty() {
                jobs.push(Job::new(f, &chart, None, default_grid(chart.dim)));
            }
        }
    }
    Ok(jobs)
}

pub fn all_pass(reports: &[ResidualReport]) -> bool {
    reports.iter().all(|r| r.verdict == Verdict::Pass)
}

/// CSV with one row per report; notes joined by `|`.
pub fn reports_to_csv(reports: &[ResidualReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "formula", "chart", "k", "grid", "value", "expected", "residual", "error_estimate", "verdict", "seconds", "tolerance", "measure",
        "half_residual", "converged", "roundoff", "notes",
    ])
    .map_err(|e| Error::Io(e.to_string()))?;
    for r in reports {
        let verdict = if r.verdict == Verdict::Pass { "pass" } else { "fail" };
        let measure = if r.measure == Measure::A { "a" } else { "f" };
        w.write_record([
            r.formula.clone(),
            r.chart.clone(),
            r.k.to_string(),
            r.grid.to_string(),
            format!("{:?}", r.value),
            format!("{:?}", r.expected),
            format!("{:?}", r.residual),
            format!("{:?}", r.error_estimate),
            verdict.into(),
            r.seconds.map(|s| format!("{s:?}")).unwrap_or_default(),
            format!("{:?}", r.tolerance),
            measure.into(),
            format!("{:?}", r.half_residual),
            r.converged.to_string(),
            format!("{:?}", r.roundoff),
            r.notes.join("|"),
        ])
        .map_err(|e| Error::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_and_periodic_fields() {
        let chart = FoliatedChart::preset_with("flat-sin", &[("b", 0.0)]).unwrap().with_grid(16);
        let q = integrate::<3, _>(&chart, |_| Ok(1.0), Measure::A).unwrap();
        assert!((q.value - (2.0 * PI).powi(3)).abs() < 1e-10);
        // the floor is the rounding of sin at multiples of 2π/n, about ε(2π)³
        for n in [8, 16, 32] {
            let q = integrate::<3, _>(&chart.with_grid(n), |x| Ok(x[0].sin()), Measure::A).unwrap();
            assert!(q.value.abs() < 3e-14 && q.value.abs() <= q.roundoff, "{q:?}");
        }
        let chart = FoliatedChart::preset("flat-sin").unwrap().with_grid(16);
        let q = volume(&chart, Measure::F).unwrap();
        assert!((q.value - 0.91f64.powi(2) * (2.0 * PI).powi(3)).abs() < 1e-10);
        assert!(integrate::<3, _>(&chart, |_| Ok(f64::NAN), Measure::A).is_err());
        assert!(integrate::<2, _>(&chart, |_| Ok(1.0), Measure::A).is_err());
        assert!(integrate::<3, _>(&chart.with_grid(7), |_| Ok(1.0), Measure::A).is_err());
    }

    #[test]
    fn pairwise_sum_is_order_fixed() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin() * 1e-3 + 1.0).collect();
        assert_eq!(pairwise_sum(&v), pairwise_sum(&v.clone()));
        assert!((pairwise_sum(&v) - v.iter().sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn flags_of_presets() {
        let h = Hypotheses::scan(&FoliatedChart::preset("flat-sin").unwrap()).unwrap();
        assert!(h.holds(Flag::LocallySymmetric) && h.holds(Flag::ConstantNorm) && !h.holds(Flag::ZbarZero));
        assert_eq!(h.flag_curvature(), Some(0.0));
        let h = Hypotheses::scan(&FoliatedChart::preset("flat-linear").unwrap()).unwrap();
        assert!(h.holds(Flag::TotallyGeodesic) && h.holds(Flag::Umbilical) && h.holds(Flag::ZbarZero));
        let h = Hypotheses::scan(&FoliatedChart::preset("tilted").unwrap()).unwrap();
        assert!(!h.holds(Flag::Berwald) && !h.holds(Flag::Flat) && h.holds(Flag::ConstantDistortion));
        let h = Hypotheses::scan(&FoliatedChart::preset("warped-parallel").unwrap()).unwrap();
        assert!(h.holds(Flag::Berwald) && !h.holds(Flag::Flat) && !h.holds(Flag::ConstantFlagCurvature));
    }

    #[test]
    fn hypothesis_violation_is_hard_error() {
        let chart = FoliatedChart::preset("warped-torus").unwrap();
        let err = verify(&Job::new(FormulaId::JacobiSeries, &chart, Some(2), 8)).unwrap_err();
        assert!(matches!(&err, Error::Hypothesis { flag, .. } if flag == "locally_symmetric"), "{err}");
        let jobs = vec![
            Job::new(FormulaId::JacobiSeries, &chart, Some(2), 8),
            Job::new(FormulaId::CartanTrace, &FoliatedChart::preset("tilted").unwrap(), None, 8),
        ];
        assert!(matches!(verify_suite(&jobs), Err(Error::Aggregate(v)) if v.len() == 2));
        assert!(verify_suite(&[]).unwrap().is_empty());
    }

    #[test]
    fn formula_ids_round_trip() {
        for f in ALL_FORMULAS {
            assert_eq!(FormulaId::parse(f.id()).unwrap(), *f);
        }
        assert_eq!(FormulaId::parse("eq5e").unwrap(), FormulaId::FlatSigma);
        assert_eq!(FormulaId::parse("eq73").unwrap(), FormulaId::TotallyGeodesicSet);
        assert!(FormulaId::parse("eq99").is_err());
    }

    #[test]
    fn reeb_on_warped_torus() {
        let chart = FoliatedChart::preset("warped-torus").unwrap();
        let r = verify(&Job::new(FormulaId::MeanCurvature, &chart.with_grid(24), None, 24)).unwrap();
        assert!(r[0].residual <= 1e-10, "{r:?}");
        let r = verify(&Job::new(FormulaId::RandersReeb, &chart, None, 24)).unwrap();
        assert!(r[0].residual <= 1e-8 && r[0].verdict == Verdict::Pass, "{r:?}");
    }

    #[test]
    fn measure_consistency_without_beta() {
        let chart = FoliatedChart::preset_with("warped-torus", &[("b", 0.0)]).unwrap();
        let mut job = Job::new(FormulaId::MeanCurvature, &chart, None, 16);
        let f = verify(&job).unwrap();
        job.measure = Some(Measure::A);
        let a = verify(&job).unwrap();
        assert_eq!(f[0].value, a[0].value);
    }

    #[test]
    fn randers_decomposition_pointwise() {
        let chart = FoliatedChart::preset("flat-sin").unwrap().with_grid(6);
        for k in 1..=2 {
            assert!(randers_decomposition_defect(&chart, k).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let chart = FoliatedChart::preset("flat-linear").unwrap();
        let r = verify(&Job::new(FormulaId::SecondOrder, &chart, None, 4)).unwrap();
        let csv = reports_to_csv(&r).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("formula,chart,k,grid"));
    }
}
