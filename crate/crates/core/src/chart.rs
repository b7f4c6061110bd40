//! Periodic foliated charts: a metric field, a one-form field and a level function whose level
//! sets are the leaves. Fields are closed-form expressions; presets cover the standard examples.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::linalg::Mat;
use crate::real::Real;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub const PRESETS: &[&str] = &["flat-linear", "flat-sin", "warped-torus", "tilted", "warped-parallel", "flat-linear-5"];

/// Chart definition as written in a chart file (TOML).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_diag: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn preset_def(name: &str) -> Result<ChartDef> {
    let mut d = ChartDef { name: Some(name.to_string()), dim: Some(3), ..Default::default() };
    let p = |pairs: &[(&str, f64)]| pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>();
    match name {
        "flat-linear" => {
            d.params = p(&[("b", 0.3)]);
            d.metric_diag = Some(strs(&["1", "1", "1"]));
            d.beta = Some(strs(&["0", "b", "0"]));
            d.level = Some("x3".into());
        }
        "flat-sin" => {
            d.params = p(&[("b", 0.3), ("eps", 0.2)]);
            d.metric_diag = Some(strs(&["1", "1", "1"]));
            d.beta = Some(strs(&["0", "b", "0"]));
            d.level = Some("x3 - eps*sin(x1)".into());
        }
        "warped-torus" => {
            d.params = p(&[("b", 0.3), ("k", 0.3)]);
            d.metric_diag = Some(strs(&["1", "(1 + k*cos(x1))^2", "1"]));
            d.beta = Some(strs(&["0", "b*(1 + k*cos(x1))", "0"]));
            d.level = Some("x1".into());
        }
        "tilted" => {
            d.params = p(&[("b", 0.3), ("k", 0.3), ("eps", 0.2), ("s", 0.3)]);
            d.metric_diag = Some(strs(&["1", "(1 + k*cos(x1))^2", "1"]));
            d.beta = Some(strs(&["0", "b*(1 + s*sin(x3))*(1 + k*cos(x1))", "0"]));
            d.level = Some("x3 - eps*sin(x1)".into());
        }
        "warped-parallel" => {
            d.params = p(&[("b", 0.3), ("k", 0.3), ("eps", 0.2)]);
            d.metric_diag = Some(strs(&["1", "(1 + k*cos(x1))^2", "1"]));
            d.beta = Some(strs(&["0", "0", "b"]));
            d.level = Some("x1 - eps*sin(x2)".into());
        }
        "flat-linear-5" => {
            d.dim = Some(5);
            d.params = p(&[("b", 0.3), ("s", 0.5)]);
            d.grid = Some(8);
            d.metric_diag = Some(strs(&["1", "1", "1", "1", "1"]));
            d.beta = Some(strs(&["0", "b", "0", "0", "0"]));
            d.level = Some("x5 + s*x1".into());
        }
        _ => return Err(Error::Chart(format!("unknown preset `{name}`; known: {}", PRESETS.join(", ")))),
    }
    Ok(d)
}

impl ChartDef {
    pub fn from_toml(text: &str) -> Result<ChartDef> {
        toml::from_str(text).map_err(|e| Error::Chart(e.to_string()))
    }

    pub fn preset(name: &str) -> ChartDef {
        ChartDef { preset: Some(name.to_string()), ..Default::default() }
    }

    /// Expands a preset reference; explicit parameters override the preset's defaults.
    pub fn resolve(&self) -> Result<ChartDef> {
        let Some(pname) = &self.preset else {
            return Ok(self.clone());
        };
        if self.metric.is_some() || self.metric_diag.is_some() || self.beta.is_some() || self.level.is_some() {
            return Err(Error::Chart("a preset chart cannot also define metric, beta or level".into()));
        }
        let mut d = preset_def(pname)?;
        if let Some(dim) = self.dim {
            if Some(dim) != d.dim {
                return Err(Error::Chart(format!("preset `{pname}` has dimension {}", d.dim.unwrap_or(0))));
            }
        }
        for (k, v) in &self.params {
            if !d.params.contains_key(k) {
                return Err(Error::Chart(format!("preset `{pname}` has no parameter `{k}`")));
            }
            d.params.insert(k.clone(), *v);
        }
        if self.name.is_some() {
            d.name.clone_from(&self.name);
        }
        d.grid = self.grid;
        d.margin = self.margin;
        d.periods.clone_from(&self.periods);
        Ok(d)
    }
}

/// A validated-at-parse chart ready for evaluation.
#[derive(Clone, Debug)]
pub struct FoliatedChart {
    pub name: String,
    pub dim: usize,
    pub grid: usize,
    pub margin: f64,
    pub periods: Vec<f64>,
    pub def: ChartDef,
    metric: Vec<Vec<Expr>>,
    beta: Vec<Expr>,
    level: Expr,
}

impl FoliatedChart {
    pub fn preset(name: &str) -> Result<FoliatedChart> {
        Self::from_def(&ChartDef::preset(name))
    }

    pub fn preset_with(name: &str, params: &[(&str, f64)]) -> Result<FoliatedChart> {
        let mut d = ChartDef::preset(name);
        for (k, v) in params {
            d.params.insert(k.to_string(), *v);
        }
        Self::from_def(&d)
    }

    pub fn from_toml(text: &str) -> Result<FoliatedChart> {
        Self::from_def(&ChartDef::from_toml(text)?)
    }

    pub fn from_def(raw: &ChartDef) -> Result<FoliatedChart> {
        let def = raw.resolve()?;
        let dim = def.dim.ok_or_else(|| Error::Chart("missing `dim`".into()))?;
        if !(2..=5).contains(&dim) {
            return Err(Error::Chart(format!("dimension {dim} not supported (2..=5)")));
        }
        let parse = |s: &str| -> Result<Expr> {
            let e = Expr::parse_with(s, &def.params)?;
            if let Some(k) = e.max_var() {
                if k >= dim {
                    return Err(Error::Chart(format!("`{s}` uses x{} in a {dim}-dimensional chart", k + 1)));
                }
            }
            Ok(e)
        };
        let metric = match (&def.metric, &def.metric_diag) {
            (Some(_), Some(_)) => return Err(Error::Chart("give either `metric` or `metric_diag`".into())),
            (None, None) => return Err(Error::Chart("missing `metric`".into())),
            (Some(rows), None) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Chart(format!("`metric` must be {dim}x{dim}")));
                }
                let m = rows.iter().map(|r| r.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()).collect::<Result<Vec<_>>>()?;
                for i in 0..dim {
                    for j in 0..i {
                        if m[i][j] != m[j][i] && rows[i][j].trim() != rows[j][i].trim() {
                            return Err(Error::Chart(format!("`metric` is not symmetric at ({},{})", i + 1, j + 1)));
                        }
                    }
                }
                m
            }
            (None, Some(diag)) => {
                if diag.len() != dim {
                    return Err(Error::Chart(format!("`metric_diag` must have {dim} entries")));
                }
                (0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { parse(&diag[i]) } else { Ok(Expr::Const(0.0)) }).collect())
                    .collect::<Result<Vec<_>>>()?
            }
        };
        let beta_s = def.beta.clone().unwrap_or_else(|| vec!["0".into(); dim]);
        if beta_s.len() != dim {
            return Err(Error::Chart(format!("`beta` must have {dim} entries")));
        }
        let beta = beta_s.iter().map(|s| parse(s)).collect::<Result<Vec<_>>>()?;
        let level = parse(def.level.as_deref().ok_or_else(|| Error::Chart("missing `level`".into()))?)?;
        let periods = def.periods.clone().unwrap_or_else(|| vec![2.0 * PI; dim]);
        if periods.len() != dim || periods.iter().any(|p| !(*p > 0.0 && p.is_finite())) {
            return Err(Error::Chart(format!("`periods` must be {dim} positive numbers")));
        }
        let grid = def.grid.unwrap_or(32);
        if grid < 4 {
            return Err(Error::Chart("grid needs at least 4 points per axis".into()));
        }
        let margin = def.margin.unwrap_or(crate::minkowski::DEFAULT_MARGIN);
        if !(margin > 0.0 && margin < 1.0) {
            return Err(Error::Chart("margin must lie in (0, 1)".into()));
        }
        let name = def.name.clone().unwrap_or_else(|| "chart".into());
        Ok(FoliatedChart { name, dim, grid, margin, periods, def, metric, beta, level })
    }

    pub fn with_grid(&self, grid: usize) -> FoliatedChart {
        let mut c = self.clone();
        c.grid = grid;
        c.def.grid = Some(grid);
        c
    }

    /// SHA-256 of the resolved definition.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.def).unwrap_or_default();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn volume(&self) -> f64 {
        self.periods.iter().product()
    }

    pub fn metric<T: Real, const D: usize>(&self, x: &[T; D]) -> Mat<T, D> {
        debug_assert_eq!(D, self.dim);
        std::array::from_fn(|i| std::array::from_fn(|j| self.metric[i][j].eval(x)))
    }

    pub fn beta<T: Real, const D: usize>(&self, x: &[T; D]) -> [T; D] {
        std::array::from_fn(|i| self.beta[i].eval(x))
    }

    pub fn level<T: Real, const D: usize>(&self, x: &[T; D]) -> T {
        self.level.eval(x)
    }

    /// Grid point with multi-index `idx`.
    pub fn point<const D: usize>(&self, idx: &[usize; D]) -> [f64; D] {
        std::array::from_fn(|k| self.periods[k] * idx[k] as f64 / self.grid as f64)
    }

    pub fn grid_len(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    /// Row-major linear index to grid point.
    pub fn point_at<const D: usize>(&self, mut lin: usize) -> [f64; D] {
        let mut idx = [0usize; D];
        for k in (0..D).rev() {
            idx[k] = lin % self.grid;
            lin /= self.grid;
        }
        self.point(&idx)
    }
}

/// Calls `$body` with `$d` bound to the chart dimension as a const.
#[macro_export]
macro_rules! with_dim {
    ($dim:expr, $d:ident => $body:expr) => {
        match $dim {
            2 => {
                const $d: usize = 2;
                $body
            }
            3 => {
                const $d: usize = 3;
                $body
            }
            4 => {
                const $d: usize = 4;
                $body
            }
            5 => {
                const $d: usize = 5;
                $body
            }
            other => Err($crate::Error::Chart(format!("dimension {other} not supported (2..=5)"))),
        }
    };
}
