use crate::{load_chart, EXIT_FAIL};
use folia_core::verifier::{self, all_pass, default_grid, reports_to_csv, verify_suite_timed, with_workers};
use folia_core::{FoliatedChart, FormulaId, Job, Measure, ResidualReport, Verdict};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const WORKERS_ENV: &str = "FOLIA_WORKERS";

#[derive(clap::Args)]
pub struct Args {
    /// Preset name or chart TOML file. Repeatable.
    #[arg(long = "chart")]
    charts: Vec<String>,
    /// Formula id (e.g. eq61, eq5e-k, E-Q62). Repeatable.
    #[arg(long = "formula")]
    formulas: Vec<String>,
    /// Single k ("2") or inclusive range ("1..3").
    #[arg(long)]
    k: Option<String>,
    /// Comma-separated grid sizes, e.g. 24,48.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<usize>,
    /// Named suite: `default` runs every preset with every formula whose hypotheses hold.
    #[arg(long)]
    suite: Option<String>,
    /// TOML run configuration; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.json and report.csv (stdout JSON otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Earlier report.json; newly failing or much worse results count as regressions.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Record wall-clock seconds per report.
    #[arg(long)]
    timings: bool,
    /// Worker threads (overrides FOLIA_WORKERS and the config).
    #[arg(long)]
    workers: Option<usize>,
    /// Absolute residual tolerance (default 1e-8 × coordinate box volume).
    #[arg(long)]
    tolerance: Option<f64>,
    /// Integration measure override: a or f.
    #[arg(long)]
    measure: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    verify: VerifySection,
    #[serde(default)]
    execution: ExecutionSection,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    suite: Option<String>,
    charts: Option<Vec<String>>,
    formulas: Option<Vec<String>>,
    k: Option<KSpec>,
    grids: Option<Vec<usize>>,
    tolerance: Option<f64>,
    measure: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KSpec {
    One(usize),
    Text(String),
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ExecutionSection {
    workers: Option<usize>,
    output: Option<PathBuf>,
}

/// The run as resolved from config and flags; execution parameters are left out so that
/// the report does not depend on them.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
struct Resolved {
    suite: Option<String>,
    charts: Vec<String>,
    formulas: Vec<String>,
    k: Option<String>,
    grids: Vec<usize>,
    tolerance: Option<f64>,
    measure: Option<Measure>,
}

#[derive(Serialize, Deserialize)]
struct ChartEntry {
    name: String,
    hash: String,
    dim: usize,
    grid: usize,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    total: usize,
    passed: usize,
    failed: usize,
    regressions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    config: Resolved,
    charts: Vec<ChartEntry>,
    reports: Vec<ResidualReport>,
    summary: Summary,
}

fn parse_k(s: &str) -> Result<(usize, usize), String> {
    let bad = || format!("--k must be an integer or a range like 1..3, not `{s}`");
    match s.split_once("..") {
        Some((lo, hi)) => {
            let hi = hi.strip_prefix('=').unwrap_or(hi);
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().parse().map_err(|_| bad())?;
            if lo > hi {
                return Err(bad());
            }
            Ok((lo, hi))
        }
        None => {
            let k = s.trim().parse().map_err(|_| bad())?;
            Ok((k, k))
        }
    }
}

fn parse_measure(s: &str) -> Result<Measure, String> {
    match s.to_ascii_lowercase().as_str() {
        "a" => Ok(Measure::A),
        "f" => Ok(Measure::F),
        _ => Err(format!("measure must be `a` or `f`, not `{s}`")),
    }
}

fn resolve_workers(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>, String> {
    if flag.is_some() {
        return Ok(flag);
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| format!("{WORKERS_ENV}=`{v}` is not a positive integer"))?;
        return Ok(Some(n));
    }
    Ok(config)
}

fn resolve(args: &Args, cfg: VerifySection) -> Result<Resolved, String> {
    let pick = |cli: &Vec<String>, file: Option<Vec<String>>| if cli.is_empty() { file.unwrap_or_default() } else { cli.clone() };
    let k = match (&args.k, cfg.k) {
        (Some(k), _) => Some(k.clone()),
        (None, Some(KSpec::One(k))) => Some(k.to_string()),
        (None, Some(KSpec::Text(s))) => Some(s),
        (None, None) => None,
    };
    if let Some(k) = &k {
        parse_k(k)?;
    }
    let measure = args.measure.clone().or(cfg.measure).map(|m| parse_measure(&m)).transpose()?;
    let tolerance = args.tolerance.or(cfg.tolerance);
    if let Some(t) = tolerance {
        if !(t > 0.0 && t.is_finite()) {
            return Err(format!("tolerance must be positive, not {t}"));
        }
    }
    let grids = if args.grid.is_empty() { cfg.grids.unwrap_or_default() } else { args.grid.clone() };
    if let Some(g) = grids.iter().find(|g| **g < 4 || **g % 2 == 1) {
        return Err(format!("grid {g} must be even and at least 4"));
    }
    let resolved = Resolved {
        suite: args.suite.clone().or(cfg.suite),
        charts: pick(&args.charts, cfg.charts),
        formulas: pick(&args.formulas, cfg.formulas),
        k,
        grids,
        tolerance,
        measure,
    };
    match resolved.suite.as_deref() {
        Some("default") => {}
        Some(other) => return Err(format!("unknown suite `{other}` (known: default)")),
        None if resolved.charts.is_empty() || resolved.formulas.is_empty() => {
            return Err("give --suite default, or at least one --chart and one --formula".into());
        }
        None => {}
    }
    Ok(resolved)
}

fn build_jobs(r: &Resolved) -> Result<Vec<Job>, String> {
    let e = |e: folia_core::Error| e.to_string();
    let mut base: Vec<Job> = Vec::new();
    if r.suite.is_some() {
        base.extend(verifier::default_suite().map_err(e)?);
    }
    let charts: Vec<FoliatedChart> = r.charts.iter().map(|c| load_chart(c)).collect::<Result<_, _>>()?;
    let formulas: Vec<FormulaId> = r.formulas.iter().map(|f| FormulaId::parse(f)).collect::<Result<_, _>>().map_err(e)?;
    for chart in &charts {
        for &f in &formulas {
            let grid = chart.def.grid.unwrap_or_else(|| default_grid(chart.dim));
            base.push(Job::new(f, chart, None, grid));
        }
    }
    let ks: Option<Vec<usize>> = r.k.as_deref().map(parse_k).transpose()?.map(|(lo, hi)| (lo..=hi).collect());
    let mut jobs = Vec::new();
    for job in base {
        let grids = if r.grids.is_empty() { vec![job.grid] } else { r.grids.clone() };
        for &grid in &grids {
            let ks: Vec<Option<usize>> = match &ks {
                Some(ks) => ks.iter().map(|k| Some(*k)).collect(),
                None => vec![None],
            };
            for k in ks {
                let mut j = Job::new(job.formula, &job.chart, k, grid);
                j.tolerance = r.tolerance;
                j.measure = r.measure;
                jobs.push(j);
            }
        }
    }
    Ok(jobs)
}

fn chart_entries(jobs: &[Job]) -> Vec<ChartEntry> {
    let mut out: Vec<ChartEntry> = Vec::new();
    for j in jobs {
        let c = j.chart.with_grid(j.grid);
        let hash = c.content_hash();
        if !out.iter().any(|e| e.hash == hash) {
            out.push(ChartEntry { name: c.name.clone(), hash, dim: c.dim, grid: c.grid });
        }
    }
    out
}

/// Reports that failed after passing in the baseline, or whose residual grew more than
/// tenfold beyond the round-off floor.
fn regressions(reports: &[ResidualReport], baseline: &[ResidualReport]) -> Vec<String> {
    let mut out = Vec::new();
    for r in reports {
        let Some(b) = baseline.iter().find(|b| b.formula == r.formula && b.chart == r.chart && b.k == r.k && b.grid == r.grid) else {
            continue;
        };
        let label = format!("{} {} k={} grid={}", r.formula, r.chart, r.k, r.grid);
        if b.verdict == Verdict::Pass && r.verdict == Verdict::Fail {
            out.push(format!("{label}: pass -> fail"));
        } else if r.residual > 10.0 * b.residual.max(r.roundoff) {
            out.push(format!("{label}: residual {:e} -> {:e}", b.residual, r.residual));
        }
    }
    out
}

fn load_baseline(path: &PathBuf) -> Result<Vec<ResidualReport>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let doc: Document = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(doc.reports)
}

pub fn run(args: Args) -> Result<u8, String> {
    let cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            toml::from_str::<ConfigFile>(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => ConfigFile::default(),
    };
    let workers = resolve_workers(args.workers, cfg.execution.workers)?;
    let out_dir = args.out.clone().or(cfg.execution.output);
    let resolved = resolve(&args, cfg.verify)?;
    let baseline = args.baseline.as_ref().map(load_baseline).transpose()?;

    let (jobs, reports) = with_workers(workers, || -> Result<_, String> {
        let jobs = build_jobs(&resolved)?;
        let reports = verify_suite_timed(&jobs, args.timings).map_err(|e| e.to_string())?;
        Ok((jobs, reports))
    })
    .map_err(|e| e.to_string())??;

    let regs = baseline.map(|b| regressions(&reports, &b)).unwrap_or_default();
    let passed = reports.iter().filter(|r| r.verdict == Verdict::Pass).count();
    let summary = Summary { total: reports.len(), passed, failed: reports.len() - passed, regressions: regs };
    for r in &reports {
        let tag = if r.verdict == Verdict::Pass { "PASS" } else { "FAIL" };
        eprintln!("{tag} {} {} k={} grid={} residual={:e} tol={:e}", r.formula, r.chart, r.k, r.grid, r.residual, r.tolerance);
    }
    for reg in &summary.regressions {
        eprintln!("REGRESSION {reg}");
    }
    eprintln!("{} reports: {} passed, {} failed, {} regressions", summary.total, summary.passed, summary.failed, summary.regressions.len());

    let ok = all_pass(&reports) && summary.regressions.is_empty();
    let doc = Document { config: resolved, charts: chart_entries(&jobs), reports, summary };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())? + "\n";
    match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            std::fs::write(dir.join("report.json"), &json).map_err(|e| e.to_string())?;
            let csv = reports_to_csv(&doc.reports).map_err(|e| e.to_string())?;
            std::fs::write(dir.join("report.csv"), csv).map_err(|e| e.to_string())?;
        }
        None => print!("{json}"),
    }
    Ok(if ok { 0 } else { EXIT_FAIL })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_specs() {
        assert_eq!(parse_k("2"), Ok((2, 2)));
        assert_eq!(parse_k("1..3"), Ok((1, 3)));
        assert_eq!(parse_k("1..=3"), Ok((1, 3)));
        assert!(parse_k("3..1").is_err());
        assert!(parse_k("x").is_err());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(toml::from_str::<ConfigFile>("[verify]\ncharts = [\"flat-sin\"]\nbogus = 1\n").is_err());
        assert!(toml::from_str::<ConfigFile>("[other]\n").is_err());
        let c: ConfigFile = toml::from_str("[verify]\nk = 2\n[execution]\nworkers = 3\n").unwrap();
        assert!(matches!(c.verify.k, Some(KSpec::One(2))));
        assert_eq!(c.execution.workers, Some(3));
    }
}
