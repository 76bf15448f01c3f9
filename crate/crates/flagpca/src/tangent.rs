//! Lifts the Euclidean flag estimators to curved data: center at a Karcher
//! mean (or median, for the robust variants), log-map every sample into the
//! tangent space at the center, and run the flag fit on the flattened
//! tangent vectors. Reconstructions and scores map back through the
//! exponential map.
//!
//! Tangent vectors are deliberately not sphere-normalized before fitting;
//! their lengths carry the distance information the scores rely on.

use crate::error::{Error, Result};
use crate::flag::{FlagPoint, FlagType};
use crate::manifolds::{
    check_common_kind, dist, exp_map, flatten, karcher_mean, karcher_median, log_map, unflatten,
    ManifoldKind, ManifoldPoint, MeanOptions,
};
use crate::robust::{self, FitOptions, FitResult, Variant};
use crate::stiefel::{solve_weighted_fpca, weighted_flag_objective, Masks, Sense, WeightStack};
use nalgebra::DMatrix;

/// What to run on the flattened tangents: classical tangent PCA or one of
/// the robust flag variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TangentVariant {
    Plain,
    Robust(Variant),
}

impl TangentVariant {
    pub fn is_dual(self) -> bool {
        matches!(self, TangentVariant::Robust(v) if v.is_dual())
    }

    pub fn name(self) -> &'static str {
        match self {
            TangentVariant::Plain => "tpca",
            TangentVariant::Robust(v) => v.name(),
        }
    }
}

/// Diagnostics from the plain tangent-PCA solve: the unit-weight objective
/// and the squared projection energy captured at each level of the flag.
#[derive(Debug, Clone)]
pub struct PlainSummary {
    pub objective: f64,
    pub level_capture: Vec<f64>,
}

/// Inner-solver report: the full IRLS result for robust variants, the
/// objective summary for plain tangent PCA.
#[derive(Debug, Clone)]
pub enum InnerFit {
    Plain(PlainSummary),
    Robust(FitResult),
}

#[derive(Debug, Clone, Default)]
pub struct TangentOptions {
    pub fit: FitOptions,
    pub mean: MeanOptions,
}

/// A fitted tangent model: the center, the flag of principal directions in
/// flattened tangent coordinates, and what produced it.
#[derive(Debug, Clone)]
pub struct TangentFitResult {
    pub base: ManifoldPoint,
    pub flag: FlagPoint,
    pub variant: TangentVariant,
    pub manifold: ManifoldKind,
    pub inner: InnerFit,
}

/// Centers the data, log-maps it, and fits the requested estimator in the
/// tangent space. Robust variants center at the Karcher median, plain
/// tangent PCA at the Karcher mean. Needs at least as many points as the
/// flag has columns, so the tangent data can have full flag rank.
pub fn fit_tangent(
    variant: TangentVariant,
    points: &[ManifoldPoint],
    ftype: &FlagType,
    opts: &TangentOptions,
) -> Result<TangentFitResult> {
    let kind = check_common_kind(points)?;
    if points.len() < ftype.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "flag {ftype} needs at least {} points, got {}",
            ftype.total_dim(),
            points.len()
        )));
    }
    if ftype.ambient() != kind.ambient_len() {
        return Err(Error::DimensionMismatch(format!(
            "flag {ftype} does not match the flattened tangent length {} of {kind}",
            kind.ambient_len()
        )));
    }

    let base = match variant {
        TangentVariant::Plain => karcher_mean(points, &opts.mean)?.point,
        TangentVariant::Robust(_) => karcher_median(points, &opts.mean)?.point,
    };

    let n = kind.ambient_len();
    let mut data = DMatrix::zeros(n, points.len());
    for (j, p) in points.iter().enumerate() {
        let v = flatten(&log_map(&base, p)?);
        data.set_column(j, &v);
    }

    let (flag, inner) = match variant {
        TangentVariant::Plain => {
            let init = robust::initial_flag(&data, ftype, &opts.fit.init)?;
            let w = WeightStack::unit(ftype.num_blocks(), points.len());
            let flag = solve_weighted_fpca(
                &data,
                &w,
                ftype,
                &init,
                Sense::Maximize,
                Masks::Levels,
                &opts.fit.inner,
            )?;
            let objective = weighted_flag_objective(flag.rep(), &data, &w, ftype, Masks::Levels)?;
            let level_capture = (0..ftype.num_blocks())
                .map(|i| flag.level(i).tr_mul(&data).norm_squared())
                .collect();
            let summary = PlainSummary {
                objective,
                level_capture,
            };
            (flag, InnerFit::Plain(summary))
        }
        TangentVariant::Robust(v) => {
            let res = robust::fit(v, &data, ftype, &opts.fit)?;
            (res.directions.clone(), InnerFit::Robust(res))
        }
    };

    Ok(TangentFitResult {
        base,
        flag,
        variant,
        manifold: kind,
        inner,
    })
}

fn check_scoring_input(fit: &TangentFitResult, x: &ManifoldPoint) -> Result<()> {
    if x.kind() != fit.manifold {
        return Err(Error::BaseMismatch(format!(
            "model fitted on {}, point lives on {}",
            fit.manifold,
            x.kind()
        )));
    }
    Ok(())
}

/// Projects the log of `x` onto the flag's span and maps the projection
/// back through the exponential at the center.
pub fn reconstruct(fit: &TangentFitResult, x: &ManifoldPoint) -> Result<ManifoldPoint> {
    check_scoring_input(fit, x)?;
    let v = flatten(&log_map(&fit.base, x)?);
    let u = fit.flag.rep();
    let projected = u * (u.transpose() * v);
    let tangent = unflatten(&fit.base, &projected)?;
    exp_map(&fit.base, &tangent)
}

/// Geodesic distance between a point and its reconstruction. Low for inliers
/// of the fitted flag.
pub fn score_primal(fit: &TangentFitResult, x: &ManifoldPoint) -> Result<f64> {
    let rec = reconstruct(fit, x)?;
    dist(x, &rec)
}

/// Norm of the tangent's component along the dual directions. The dual
/// variants drive their flag orthogonal to inliers, so a high score marks an
/// outlier. Rejects non-dual fits.
pub fn score_dual(fit: &TangentFitResult, x: &ManifoldPoint) -> Result<f64> {
    if !fit.variant.is_dual() {
        return Err(Error::WrongVariant(fit.variant.name().to_string()));
    }
    check_scoring_input(fit, x)?;
    let v = flatten(&log_map(&fit.base, x)?);
    Ok((fit.flag.rep().transpose() * v).norm())
}
