use folia_core::curvature::det_jacobian_expansion;
use folia_core::matrix_invariants::{det_series_coefficients, newton_transform, sigma};
use folia_core::scalar::parse_rational;
use folia_core::{MultiIndex, Rational, Scalar, SquareMatrix};
use serde_json::Value;

#[derive(clap::Args)]
pub struct Args {
    /// Matrix as JSON rows, e.g. '[[1,0],[0,2]]'; entries may be "p/q" strings. Repeatable.
    #[arg(long = "matrix")]
    matrices: Vec<String>,
    /// JSON file holding a list of matrices, appended after any --matrix.
    #[arg(long = "matrices")]
    file: Option<String>,
    /// Multi-index λ, e.g. 1,1; prints σ_λ of the matrix tuple.
    #[arg(long)]
    lambda: Option<String>,
    /// Newton transformation T_k of the first matrix.
    #[arg(long)]
    newton: Option<usize>,
    /// Coefficients 0..=K of det(I + tB₁ + t²B₂ + …) with B_i the given matrices.
    #[arg(long = "det-series")]
    det_series: Option<usize>,
    /// Coefficients 0..=K of det Y(t) for the Jacobi tensor with A = first, R = second matrix.
    #[arg(long)]
    jacobi: Option<usize>,
    /// exact (rationals) or float
    #[arg(long, default_value = "exact")]
    mode: String,
}

fn entry_text(v: &Value) -> Result<String, String> {
    match v {
        Value::Number(n) => Ok(n.to_string()),
        Value::String(s) => Ok(s.clone()),
        other => Err(format!("matrix entry {other} is not a number")),
    }
}

fn parse_matrix<T: Scalar>(v: &Value, parse: &dyn Fn(&str) -> Option<T>) -> Result<SquareMatrix<T>, String> {
    let rows = v.as_array().ok_or("matrix must be a JSON array of rows")?;
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let r = r.as_array().ok_or("matrix rows must be arrays")?;
        let mut row = Vec::with_capacity(r.len());
        for e in r {
            let t = entry_text(e)?;
            row.push(parse(&t).ok_or_else(|| format!("cannot parse matrix entry `{t}`"))?);
        }
        out.push(row);
    }
    SquareMatrix::from_rows(out).map_err(|e| e.to_string())
}

fn collect<T: Scalar>(args: &Args, parse: &dyn Fn(&str) -> Option<T>) -> Result<Vec<SquareMatrix<T>>, String> {
    let mut mats = Vec::new();
    for m in &args.matrices {
        let v: Value = serde_json::from_str(m).map_err(|e| format!("--matrix: {e}"))?;
        mats.push(parse_matrix(&v, parse)?);
    }
    if let Some(path) = &args.file {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
        for m in v.as_array().ok_or("matrices file must hold a JSON list of matrices")? {
            mats.push(parse_matrix(m, parse)?);
        }
    }
    if mats.is_empty() {
        return Err("no matrices given (use --matrix or --matrices)".into());
    }
    let m = mats[0].dim();
    if let Some(bad) = mats.iter().find(|a| a.dim() != m) {
        return Err(format!("dimension mismatch: {m}x{m} and {0}x{0}", bad.dim()));
    }
    Ok(mats)
}

fn render_list<T: Scalar>(v: &[T]) -> String {
    serde_json::to_string(&v.iter().map(|x| x.render()).collect::<Vec<_>>()).expect("strings serialize")
}

fn render_matrix<T: Scalar>(a: &SquareMatrix<T>) -> String {
    let rows: Vec<Vec<String>> = a.rows().iter().map(|r| r.iter().map(|x| x.render()).collect()).collect();
    serde_json::to_string(&rows).expect("strings serialize")
}

/// All λ of length `k` with |λ| ≤ `m`, ordered by |λ| then lexicographically descending.
fn indices_up_to(k: usize, m: usize) -> Vec<MultiIndex> {
    fn rec(i: usize, k: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if i + 1 == k {
            cur.push(left);
            out.push(MultiIndex::new(cur.clone()));
            cur.pop();
            return;
        }
        for l in (0..=left).rev() {
            cur.push(l);
            rec(i + 1, k, left - l, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for total in 0..=m {
        rec(0, k, total, &mut Vec::new(), &mut out);
    }
    out
}

fn report<T: Scalar>(args: &Args, mats: &[SquareMatrix<T>]) -> Result<Vec<String>, String> {
    let e = |e: folia_core::Error| e.to_string();
    let mut out = Vec::new();
    if let Some(l) = &args.lambda {
        let lambda = MultiIndex::parse(l).map_err(e)?;
        out.push(sigma(mats, &lambda).map_err(e)?.render());
    }
    if let Some(k) = args.newton {
        out.push(render_matrix(&newton_transform(&mats[0], k).map_err(e)?));
    }
    if let Some(k) = args.det_series {
        out.push(render_list(&det_series_coefficients(mats, k).map_err(e)?));
    }
    if let Some(k) = args.jacobi {
        if mats.len() != 2 {
            return Err("--jacobi needs exactly two matrices: A and R".into());
        }
        out.push(render_list(&det_jacobian_expansion(&mats[0], &mats[1], k).map_err(e)?));
    }
    if out.is_empty() {
        // σ_λ table over all λ with |λ| ≤ m
        let m = mats[0].dim();
        for lambda in indices_up_to(mats.len(), m) {
            out.push(format!("sigma[{lambda}] = {}", sigma(mats, &lambda).map_err(e)?.render()));
        }
    }
    Ok(out)
}

pub fn run(args: Args) -> Result<u8, String> {
    let lines = match args.mode.as_str() {
        "exact" => {
            let mats = collect::<Rational>(&args, &|s| parse_rational(s))?;
            report(&args, &mats)?
        }
        "float" => {
            let mats = collect::<f64>(&args, &|s| parse_rational(s).map(|r| Scalar::to_f64(&r)).or_else(|| s.parse().ok()))?;
            report(&args, &mats)?
        }
        other => return Err(format!("--mode must be exact or float, not `{other}`")),
    };
    for l in lines {
        println!("{l}");
    }
    Ok(0)
}
