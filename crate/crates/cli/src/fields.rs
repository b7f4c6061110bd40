use folia_core::foliated_geometry::{deep_sample, sample, volume_densities, FieldSample};
use folia_core::{with_dim, FoliatedChart, SquareMatrix};
use rayon::prelude::*;
use serde_json::{json, Map, Value};

pub const FIELDS: &[&str] = &["c", "normal", "nu", "barA", "barZ", "Ag", "Csharp", "A", "Z", "trQR", "densities"];

#[derive(clap::Args)]
pub struct Args {
    /// Preset name or chart TOML file.
    #[arg(long)]
    chart: String,
    /// Comma-separated fields: c, normal, nu, barA, barZ, Ag, Csharp, A, Z, trQR, densities.
    #[arg(long, value_delimiter = ',', default_value = "c,normal,nu")]
    field: Vec<String>,
    /// csv or json
    #[arg(long, default_value = "csv")]
    format: String,
    /// Points per axis (overrides the chart's grid).
    #[arg(long)]
    grid: Option<usize>,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

/// One named column group at a point: a scalar, a coordinate vector or a leaf-frame matrix.
enum Cell {
    Scalar(f64),
    Vector(Vec<f64>),
    Matrix(SquareMatrix<f64>),
}

impl Cell {
    fn headers(&self, name: &str) -> Vec<String> {
        match self {
            Cell::Scalar(_) => vec![name.to_string()],
            Cell::Vector(v) => (1..=v.len()).map(|i| format!("{name}_{i}")).collect(),
            Cell::Matrix(m) => {
                let n = m.dim();
                (0..n * n).map(|l| format!("{name}_{}{}", l / n + 1, l % n + 1)).collect()
            }
        }
    }

    fn flat(&self) -> Vec<f64> {
        match self {
            Cell::Scalar(s) => vec![*s],
            Cell::Vector(v) => v.clone(),
            Cell::Matrix(m) => m.entries().to_vec(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Scalar(s) => json!(s),
            Cell::Vector(v) => json!(v),
            Cell::Matrix(m) => json!(m.rows()),
        }
    }
}

fn point_cells<const D: usize>(chart: &FoliatedChart, x: &[f64; D], fields: &[String]) -> folia_core::Result<Vec<Cell>> {
    let s: FieldSample<D> = sample(chart, x)?;
    let frame = s.frame();
    let b = &s.basic;
    let deep = if fields.iter().any(|f| f == "trQR") { Some(deep_sample(chart, x)?) } else { None };
    let mut out = Vec::new();
    for f in fields {
        out.push(match f.as_str() {
            "c" => Cell::Scalar(b.c),
            "normal" => Cell::Vector(b.normal.to_vec()),
            "nu" => Cell::Vector(b.nu.to_vec()),
            "barA" => Cell::Matrix(frame.to_leaf(&s.abar)),
            "barZ" => Cell::Vector(s.zbar.to_vec()),
            "Ag" => Cell::Matrix(frame.to_leaf(&s.ag)),
            "Csharp" => Cell::Matrix(frame.to_leaf(&s.csharp)),
            "A" => Cell::Matrix(frame.to_leaf(&s.finsler)),
            "Z" => Cell::Vector(s.z.to_vec()),
            "trQR" => Cell::Scalar(deep.as_ref().expect("computed above").trace_qr),
            "densities" => {
                let (a, g, f) = volume_densities(chart, x)?;
                Cell::Vector(vec![a, g, f])
            }
            _ => unreachable!("validated"),
        });
    }
    Ok(out)
}

fn evaluate(chart: &FoliatedChart, fields: &[String]) -> folia_core::Result<Vec<(Vec<f64>, Vec<Cell>)>> {
    with_dim!(chart.dim, D => {
        let rows: Vec<folia_core::Result<(Vec<f64>, Vec<Cell>)>> = (0..chart.grid_len())
            .into_par_iter()
            .map(|lin| {
                let x = chart.point_at::<D>(lin);
                Ok((x.to_vec(), point_cells::<D>(chart, &x, fields)?))
            })
            .collect();
        rows.into_iter().collect()
    })
}

fn render_csv(dim: usize, fields: &[String], rows: &[(Vec<f64>, Vec<Cell>)]) -> String {
    let mut header: Vec<String> = (1..=dim).map(|i| format!("x{i}")).collect();
    if let Some((_, cells)) = rows.first() {
        for (name, cell) in fields.iter().zip(cells) {
            header.extend(cell.headers(name));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for (x, cells) in rows {
        let vals: Vec<String> = x.iter().chain(cells.iter().flat_map(|c| c.flat()).collect::<Vec<_>>().iter()).map(|v| format!("{v:?}")).collect();
        out.push_str(&vals.join(","));
        out.push('\n');
    }
    out
}

fn render_json(chart: &FoliatedChart, fields: &[String], rows: &[(Vec<f64>, Vec<Cell>)]) -> String {
    let points: Vec<Value> = rows
        .iter()
        .map(|(x, cells)| {
            let mut m = Map::new();
            m.insert("x".into(), json!(x));
            for (name, cell) in fields.iter().zip(cells) {
                m.insert(name.clone(), cell.json());
            }
            Value::Object(m)
        })
        .collect();
    let doc = json!({
        "chart": chart.name,
        "hash": chart.content_hash(),
        "dim": chart.dim,
        "grid": chart.grid,
        "fields": fields,
        "points": points,
    });
    serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
}

pub fn run(args: Args) -> Result<u8, String> {
    let mut chart = crate::load_chart(&args.chart)?;
    if let Some(g) = args.grid {
        if g < 4 {
            return Err("--grid needs at least 4 points per axis".into());
        }
        chart = chart.with_grid(g);
    }
    let fields: Vec<String> = args.field.iter().map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
    if let Some(bad) = fields.iter().find(|f| !FIELDS.contains(&f.as_str())) {
        return Err(format!("unknown field `{bad}` (known: {})", FIELDS.join(", ")));
    }
    if args.format != "csv" && args.format != "json" {
        return Err(format!("--format must be csv or json, not `{}`", args.format));
    }
    let rows = evaluate(&chart, &fields).map_err(|e| e.to_string())?;
    let text = if args.format == "csv" { render_csv(chart.dim, &fields, &rows) } else { render_json(&chart, &fields, &rows) };
    match args.out {
        Some(path) => std::fs::write(&path, text).map_err(|e| format!("{path}: {e}"))?,
        None => print!("{text}"),
    }
    Ok(0)
}
