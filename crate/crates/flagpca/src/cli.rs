//! Command-line front end: `gen` writes synthetic datasets, `fit` runs the
//! estimators, `score` evaluates fitted models on data, and `eval` turns
//! scores plus labels into an ROC curve.
//!
//! Everything fits through the tangent pipeline; Euclidean data is simply
//! the pipeline on flat space, where centering is subtraction. Exit codes:
//! 0 success, 2 usage problems, 3 runtime failures.

use crate::error::{Error, Result};
use crate::eval::{normalize_scores, roc_auc};
use crate::flag::FlagType;
use crate::io;
use crate::manifolds::{ManifoldKind, ManifoldPoint};
use crate::robust::{named_variant, FitOptions, Init, Variant};
use crate::synth;
use crate::tangent::{
    fit_tangent, score_dual, score_primal, InnerFit, TangentOptions, TangentVariant,
};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "flagpca",
    version,
    about = "Robust PCA on flag manifolds, with tangent-space lifts to curved data"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset
    Gen(GenArgs),
    /// Fit a flag model to a dataset
    Fit(FitArgs),
    /// Score a dataset against a fitted model
    Score(ScoreArgs),
    /// Compute an ROC curve and AUC from scores and labels
    Eval(EvalArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenKind {
    /// Uniform [0,1) samples in R^n
    Cube,
    /// 100 inliers + 20 outliers on the 4-sphere
    Sphere4,
    /// Inlier/outlier planes on Gr(2,4)
    Gr24,
    /// Three flag-structured clusters in R^10
    Clusters,
    /// Planar pre-shapes (open ellipses or hairballs)
    PreshapeOut,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ShapeArg {
    Ellipse,
    Hairball,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: GenKind,
    /// Defaults to $FLAGPCA_SEED, or 0
    #[arg(long)]
    seed: Option<u64>,
    /// Samples (cube)
    #[arg(long, required_if_eq("kind", "cube"))]
    p: Option<usize>,
    /// Ambient dimension (cube)
    #[arg(long, required_if_eq("kind", "cube"))]
    n: Option<usize>,
    /// Inlier count (gr24)
    #[arg(long, default_value_t = 100)]
    inliers: usize,
    /// Outlier count (gr24)
    #[arg(long, default_value_t = 20)]
    outliers: usize,
    /// Shape count (preshape-out)
    #[arg(long, required_if_eq("kind", "preshape-out"))]
    count: Option<usize>,
    /// Landmarks per shape (preshape-out)
    #[arg(long, required_if_eq("kind", "preshape-out"))]
    landmarks: Option<usize>,
    /// Contour family (preshape-out)
    #[arg(long, value_enum, required_if_eq("kind", "preshape-out"))]
    shape: Option<ShapeArg>,
    #[arg(long)]
    out: PathBuf,
    /// Where to write labels, for labeled kinds
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitArg {
    Random,
    Svd,
}

#[derive(Args)]
struct FitArgs {
    /// tpca, frpca, fwpca, fdpcp, fwdpcp, or named:<L1-RPCA|L2-DPCP|...>
    #[arg(long)]
    variant: String,
    /// Flag signature, e.g. 1,2 (derived from --k for named: variants)
    #[arg(long)]
    flag: Option<String>,
    /// Subspace dimension for named: variants
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    input: PathBuf,
    /// Acknowledge fitting curved data through the tangent lift
    #[arg(long)]
    tangent: bool,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    init: InitArg,
    /// Defaults to $FLAGPCA_SEED, or 0
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// IRLS weight clamp
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Primal,
    Dual,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Rescale scores onto [0,1]
    #[arg(long)]
    normalize: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Entry point behind `main`; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.cmd {
        Cmd::Gen(args) => cmd_gen(args),
        Cmd::Fit(args) => cmd_fit(args),
        Cmd::Score(args) => cmd_score(args),
        Cmd::Eval(args) => cmd_eval(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            3
        }
    }
}

/// Seed resolution: explicit flag, then $FLAGPCA_SEED, then 0.
fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var("FLAGPCA_SEED")
            .ok()
            .and_then(|s| s.trim().parse().ok())
    })
    .unwrap_or(0)
}

fn matrix_to_points(x: &DMatrix<f64>) -> Vec<ManifoldPoint> {
    let kind = ManifoldKind::Euclidean(x.nrows());
    (0..x.ncols())
        .map(|j| {
            let coords = DMatrix::from_fn(x.nrows(), 1, |i, _| x[(i, j)]);
            ManifoldPoint::new(kind, coords).expect("finite samples are valid Euclidean points")
        })
        .collect()
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let (kind, points, labels): (ManifoldKind, Vec<ManifoldPoint>, Option<Vec<i64>>) =
        match args.kind {
            GenKind::Cube => {
                let (p, n) = (args.p.unwrap(), args.n.unwrap());
                let x = synth::gen_uniform_cube(p, n, seed);
                (ManifoldKind::Euclidean(n), matrix_to_points(&x), None)
            }
            GenKind::Sphere4 => {
                let ds = synth::gen_sphere4(seed);
                (ds.kind, ds.points, Some(ds.labels))
            }
            GenKind::Gr24 => {
                let ds = synth::gen_grassmann24(args.inliers, args.outliers, seed);
                (ds.kind, ds.points, Some(ds.labels))
            }
            GenKind::Clusters => {
                let (x, labels) = synth::gen_clusters(seed);
                (
                    ManifoldKind::Euclidean(10),
                    matrix_to_points(&x),
                    Some(labels),
                )
            }
            GenKind::PreshapeOut => {
                let shape = match args.shape.unwrap() {
                    ShapeArg::Ellipse => synth::ShapeKind::Ellipse,
                    ShapeArg::Hairball => synth::ShapeKind::Hairball,
                };
                let pts = synth::gen_preshape_outliers(
                    shape,
                    args.count.unwrap(),
                    args.landmarks.unwrap(),
                    seed,
                )?;
                (ManifoldKind::Preshape2(args.landmarks.unwrap()), pts, None)
            }
        };
    io::write_dataset(&args.out, kind, &points)?;
    println!("wrote {} samples to {}", points.len(), args.out.display());
    if let Some(path) = args.labels {
        match labels {
            Some(l) => {
                io::write_labels(&path, &l)?;
                println!("wrote {} labels to {}", l.len(), path.display());
            }
            None => {
                return Err(Error::Parse(format!(
                    "--labels given, but {:?} datasets are unlabeled",
                    heck_kind(args.kind)
                )))
            }
        }
    }
    Ok(())
}

fn heck_kind(k: GenKind) -> &'static str {
    match k {
        GenKind::Cube => "cube",
        GenKind::Sphere4 => "sphere4",
        GenKind::Gr24 => "gr24",
        GenKind::Clusters => "clusters",
        GenKind::PreshapeOut => "preshape-out",
    }
}

fn parse_signature(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad flag signature entry {d:?}")))
        })
        .collect()
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let (kind, points) = io::load_dataset(&args.input)?;
    if points.is_empty() {
        return Err(Error::EmptyData);
    }
    if !matches!(kind, ManifoldKind::Euclidean(_)) && !args.tangent {
        return Err(Error::Parse(format!(
            "dataset lives on {kind}; pass --tangent to fit through the tangent lift"
        )));
    }
    let ambient = kind.ambient_len();

    let (variant, ftype) = if let Some(name) = args.variant.strip_prefix("named:") {
        let k = args.k.ok_or_else(|| {
            Error::Parse("named: variants need --k".into())
        })?;
        if args.flag.is_some() {
            return Err(Error::Parse(
                "named: variants derive the flag from --k; drop --flag".into(),
            ));
        }
        let (v, t) = named_variant(name, k, ambient)?;
        (TangentVariant::Robust(v), t)
    } else {
        let dims = parse_signature(args.flag.as_deref().ok_or_else(|| {
            Error::Parse("--flag is required unless the variant is named:".into())
        })?)?;
        let ftype = FlagType::new(dims, ambient)?;
        let variant = match args.variant.as_str() {
            "tpca" => TangentVariant::Plain,
            other => TangentVariant::Robust(other.parse::<Variant>()?),
        };
        (variant, ftype)
    };

    let seed = resolve_seed(args.seed);
    let init = match args.init {
        InitArg::Random => Init::Random(seed),
        InitArg::Svd => Init::Svd,
    };
    let opts = TangentOptions {
        fit: FitOptions {
            max_iters: args.max_iters,
            eps_clamp: args.eps,
            init,
            ..FitOptions::default()
        },
        ..TangentOptions::default()
    };
    let result = fit_tangent(variant, &points, &ftype, &opts)?;
    let (converged, iterations, trace) = match &result.inner {
        InnerFit::Robust(r) => (r.converged, r.iterations, r.objective_trace.clone()),
        InnerFit::Plain(s) => (true, 0, vec![s.objective]),
    };
    let final_obj = trace.last().copied().unwrap_or(f64::NAN);
    let report = io::FitReport {
        result,
        converged,
        iterations,
        trace,
    };
    io::write_fit(&args.out, &report)?;
    println!(
        "fitted {} {} on {} samples: objective {:.6e}, converged={converged}, wrote {}",
        report.result.variant.name(),
        report.result.flag.ftype(),
        points.len(),
        final_obj,
        args.out.display()
    );
    Ok(())
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let report = io::load_fit(&args.fit)?;
    let (kind, points) = io::load_dataset(&args.input)?;
    if kind != report.result.manifold {
        return Err(Error::BaseMismatch(format!(
            "fit is on {}, data on {kind}",
            report.result.manifold
        )));
    }
    let mut scores = Vec::with_capacity(points.len());
    for p in &points {
        let s = match args.mode {
            ModeArg::Primal => score_primal(&report.result, p)?,
            ModeArg::Dual => score_dual(&report.result, p)?,
        };
        scores.push(s);
    }
    if args.normalize {
        scores = normalize_scores(&scores)?;
    }
    io::write_scores(&args.out, &scores)?;
    println!("wrote {} scores to {}", scores.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let scores = io::load_scores(&args.scores)?;
    let labels = io::load_labels(&args.labels)?;
    let curve = roc_auc(&scores, &labels)?;
    io::write_roc(&args.out, &curve)?;
    println!("auc {:.6}, wrote {}", curve.auc, args.out.display());
    Ok(())
}
