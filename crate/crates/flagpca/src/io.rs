//! Text formats for datasets, fitted models, scores, labels, and ROC
//! curves. Floats are printed with 17 significant digits, which round-trips
//! every finite f64 exactly, so a written file reproduces the in-memory
//! data bit for bit.
//!
//! Dataset layout: a `#flagpca v1` header naming the manifold kind and the
//! per-sample matrix shape, then one comma-separated row-major sample per
//! line. Loading re-validates manifold membership: defects up to 1e-6 are
//! repaired by re-projection, anything worse is rejected with its row
//! number. Points that already pass the membership tolerance are taken
//! verbatim to keep round trips exact.

use crate::error::{Error, Result};
use crate::flag::{FlagPoint, FlagType};
use crate::manifolds::{ManifoldKind, ManifoldPoint};
use crate::robust::Variant;
use crate::tangent::{InnerFit, PlainSummary, TangentFitResult, TangentVariant};
use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::Path;

const MAGIC: &str = "#flagpca v1";

/// Membership defects at or below this are silently repaired on load;
/// larger ones reject the row.
const REPAIR_TOL: f64 = 1e-6;

/// Matches the constructor tolerance in `manifolds`: points at least this
/// clean are loaded without any re-projection.
const ACCEPT_TOL: f64 = 1e-10;

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(tok: &str, row: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {row}: bad number {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("row {row}: non-finite value")));
    }
    Ok(v)
}

fn header_kind_fields(kind: ManifoldKind) -> String {
    let (r, c) = sample_shape(kind);
    match kind {
        ManifoldKind::Euclidean(_) => format!("kind=euclidean shape={r}x{c}"),
        ManifoldKind::Sphere(_) => format!("kind=sphere shape={r}x{c}"),
        ManifoldKind::Grassmann(k, n) => {
            format!("kind=grassmann shape={r}x{c} k={k} n={n}")
        }
        ManifoldKind::Preshape2(_) => format!("kind=preshape2 shape={r}x{c}"),
    }
}

/// Per-sample matrix shape as written in headers. Vector-valued kinds are
/// laid out as a single row; matrix-valued kinds keep their natural shape.
fn sample_shape(kind: ManifoldKind) -> (usize, usize) {
    match kind {
        ManifoldKind::Euclidean(n) => (1, n),
        ManifoldKind::Sphere(n) => (1, n + 1),
        ManifoldKind::Grassmann(k, n) => (n, k),
        ManifoldKind::Preshape2(m) => (m, 2),
    }
}

fn parse_kv(line: &str) -> Vec<(&str, &str)> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .collect()
}

fn kind_from_header(line: &str) -> Result<ManifoldKind> {
    let kv = parse_kv(line);
    let get = |key: &str| {
        kv.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse(format!("header is missing {key}=")))
    };
    let shape = get("shape")?;
    let (r, c) = shape
        .split_once('x')
        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
        .ok_or_else(|| Error::Parse(format!("bad shape {shape:?}")))?;
    let kind = match get("kind")? {
        "euclidean" => ManifoldKind::Euclidean(c),
        "sphere" => ManifoldKind::Sphere(c.saturating_sub(1)),
        "grassmann" => {
            let k = get("k")?.parse::<usize>().ok();
            let n = get("n")?.parse::<usize>().ok();
            match (k, n) {
                (Some(k), Some(n)) => ManifoldKind::Grassmann(k, n),
                _ => return Err(Error::Parse("bad grassmann k=/n= fields".into())),
            }
        }
        "preshape2" => ManifoldKind::Preshape2(r),
        other => return Err(Error::Parse(format!("unknown kind {other:?}"))),
    };
    kind.validate()?;
    if sample_shape(kind) != (r, c) {
        return Err(Error::Parse(format!(
            "shape {r}x{c} does not match {kind}"
        )));
    }
    Ok(kind)
}

/// Row-major flattening of a point's coordinates, matching the header's
/// sample shape. Vector kinds produce their entries in order either way.
fn point_row(p: &ManifoldPoint) -> String {
    let coords = p.coords();
    let (rows, cols) = coords.shape();
    let mut out = String::new();
    for i in 0..rows {
        for j in 0..cols {
            if !out.is_empty() {
                out.push(',');
            }
            let _ = write!(out, "{}", fmt_f64(coords[(i, j)]));
        }
    }
    out
}

fn coords_from_row(kind: ManifoldKind, vals: &[f64]) -> DMatrix<f64> {
    let (r, c) = kind.coord_shape();
    DMatrix::from_fn(r, c, |i, j| vals[i * c + j])
}

/// Nearest (or near-nearest) on-manifold point, used to absorb small
/// defects in hand-written files.
fn reproject(kind: ManifoldKind, coords: DMatrix<f64>) -> DMatrix<f64> {
    match kind {
        ManifoldKind::Euclidean(_) => coords,
        ManifoldKind::Sphere(_) => {
            let n = coords.norm();
            coords / n
        }
        ManifoldKind::Grassmann(_, _) => {
            // Polar factor: the closest orthonormal frame in Frobenius norm.
            let svd = coords.clone().svd(true, true);
            let u = svd.u.expect("thin SVD with u");
            let vt = svd.v_t.expect("thin SVD with v_t");
            u * vt
        }
        ManifoldKind::Preshape2(_) => {
            let mut m = coords;
            for mut col in m.column_iter_mut() {
                let mean = col.mean();
                col.add_scalar_mut(-mean);
            }
            let n = m.norm();
            m / n
        }
    }
}

fn membership_defect(kind: ManifoldKind, coords: &DMatrix<f64>) -> f64 {
    match kind {
        ManifoldKind::Euclidean(_) => 0.0,
        ManifoldKind::Sphere(_) => (coords.norm() - 1.0).abs(),
        ManifoldKind::Grassmann(k, _) => {
            let gram = coords.tr_mul(coords);
            (gram - DMatrix::identity(k, k)).abs().max()
        }
        ManifoldKind::Preshape2(_) => {
            let mut d = (coords.norm() - 1.0).abs();
            for c in coords.column_iter() {
                d = d.max(c.sum().abs());
            }
            d
        }
    }
}

fn point_from_row(kind: ManifoldKind, vals: &[f64], row: usize) -> Result<ManifoldPoint> {
    let expected = kind.ambient_len();
    if vals.len() != expected {
        return Err(Error::Parse(format!(
            "row {row}: expected {expected} values, got {}",
            vals.len()
        )));
    }
    let coords = coords_from_row(kind, vals);
    let defect = membership_defect(kind, &coords);
    if defect > REPAIR_TOL {
        return Err(Error::Parse(format!(
            "row {row}: off {kind} by {defect:.3e}"
        )));
    }
    let coords = if defect <= ACCEPT_TOL {
        coords
    } else {
        reproject(kind, coords)
    };
    ManifoldPoint::new(kind, coords)
        .map_err(|e| Error::Parse(format!("row {row}: {e}")))
}

pub fn write_dataset(path: &Path, kind: ManifoldKind, points: &[ManifoldPoint]) -> Result<()> {
    let mut text = format!("{MAGIC} {}\n", header_kind_fields(kind));
    for p in points {
        text.push_str(&point_row(p));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<(ManifoldKind, Vec<ManifoldPoint>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyData)?;
    if !header.starts_with(MAGIC) {
        return Err(Error::Parse(format!(
            "not a flagpca file (wanted a {MAGIC:?} header)"
        )));
    }
    let kind = kind_from_header(header)?;
    let mut points = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let row = idx + 1;
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| parse_f64(t, row))
            .collect::<Result<_>>()?;
        points.push(point_from_row(kind, &vals, row)?);
    }
    Ok((kind, points))
}

pub fn write_labels(path: &Path, labels: &[i64]) -> Result<()> {
    let mut text = String::new();
    for l in labels {
        let _ = writeln!(text, "{l}");
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_labels(path: &Path) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(line.trim().parse::<i64>().map_err(|_| {
            Error::Parse(format!("row {}: bad label {line:?}", idx + 1))
        })?);
    }
    Ok(out)
}

pub fn write_scores(path: &Path, scores: &[f64]) -> Result<()> {
    let mut text = String::new();
    for s in scores {
        let _ = writeln!(text, "{}", fmt_f64(*s));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_scores(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_f64(line, idx + 1)?);
    }
    Ok(out)
}

/// Fitted-model report: what was fitted and how it ended, the center, the
/// flag representative (one matrix row per line), and the objective trace
/// in `#obj <iter> <value>` trailers.
pub struct FitReport {
    pub result: TangentFitResult,
    pub converged: bool,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

pub fn write_fit(path: &Path, report: &FitReport) -> Result<()> {
    let res = &report.result;
    let dims = res
        .flag
        .ftype()
        .dims()
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let mut text = format!(
        "{MAGIC} fit variant={} flag={} {} converged={} iterations={}\n",
        res.variant.name(),
        dims,
        header_kind_fields(res.manifold),
        report.converged,
        report.iterations
    );
    let _ = writeln!(text, "#base {}", point_row(&res.base));
    let rep = res.flag.rep();
    for i in 0..rep.nrows() {
        let mut line = String::new();
        for j in 0..rep.ncols() {
            if j > 0 {
                line.push(',');
            }
            let _ = write!(line, "{}", fmt_f64(rep[(i, j)]));
        }
        text.push_str(&line);
        text.push('\n');
    }
    for (i, v) in report.trace.iter().enumerate() {
        let _ = writeln!(text, "#obj {i} {}", fmt_f64(*v));
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_fit(path: &Path) -> Result<FitReport> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or(Error::EmptyData)?;
    if !header.starts_with(MAGIC) || !header.contains(" fit ") {
        return Err(Error::Parse("not a flagpca fit file".into()));
    }
    let kv = parse_kv(header);
    let get = |key: &str| {
        kv.iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse(format!("fit header is missing {key}=")))
    };
    let variant = match get("variant")? {
        "tpca" => TangentVariant::Plain,
        name => TangentVariant::Robust(name.parse::<Variant>()?),
    };
    let kind = kind_from_header(header)?;
    let dims: Vec<usize> = get("flag")?
        .split(',')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad flag signature entry {d:?}")))
        })
        .collect::<Result<_>>()?;
    let ftype = FlagType::new(dims, kind.ambient_len())?;
    let converged = get("converged")? == "true";
    let iterations: usize = get("iterations")?
        .parse()
        .map_err(|_| Error::Parse("bad iterations field".into()))?;

    let base_line = lines
        .next()
        .and_then(|l| l.strip_prefix("#base "))
        .ok_or_else(|| Error::Parse("fit file is missing the #base row".into()))?;
    let base_vals: Vec<f64> = base_line
        .split(',')
        .map(|t| parse_f64(t, 2))
        .collect::<Result<_>>()?;
    let base = point_from_row(kind, &base_vals, 2)?;

    let n = kind.ambient_len();
    let q = ftype.total_dim();
    let mut rep = DMatrix::zeros(n, q);
    let mut trace = Vec::new();
    let mut filled = 0;
    for (idx, line) in lines.enumerate() {
        let row = idx + 3;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#obj ") {
            let val = rest
                .split_whitespace()
                .nth(1)
                .ok_or_else(|| Error::Parse(format!("row {row}: bad #obj line")))?;
            trace.push(parse_f64(val, row)?);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        if filled >= n {
            return Err(Error::Parse(format!(
                "row {row}: more than {n} representative rows"
            )));
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|t| parse_f64(t, row))
            .collect::<Result<_>>()?;
        if vals.len() != q {
            return Err(Error::Parse(format!(
                "row {row}: expected {q} values, got {}",
                vals.len()
            )));
        }
        for (j, v) in vals.iter().enumerate() {
            rep[(filled, j)] = *v;
        }
        filled += 1;
    }
    if filled != n {
        return Err(Error::Parse(format!(
            "fit file has {filled} representative rows, needs {n}"
        )));
    }
    let flag = FlagPoint::new(rep, ftype)?;
    let inner = InnerFit::Plain(PlainSummary {
        objective: trace.last().copied().unwrap_or(f64::NAN),
        level_capture: Vec::new(),
    });
    Ok(FitReport {
        result: TangentFitResult {
            base,
            flag,
            variant,
            manifold: kind,
            inner,
        },
        converged,
        iterations,
        trace,
    })
}

pub fn write_roc(path: &Path, curve: &crate::eval::RocCurve) -> Result<()> {
    let mut text = String::new();
    for (fpr, tpr) in &curve.points {
        let _ = writeln!(text, "{fpr:.6},{tpr:.6}");
    }
    let _ = writeln!(text, "#auc {:.6}", curve.auc);
    std::fs::write(path, text)?;
    Ok(())
}
