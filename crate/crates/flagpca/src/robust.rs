//! Robust flag estimators: fRPCA, fWPCA, fDPCP and fWDPCP.
//!
//! All four minimize or maximize a sum of unsquared per-block norms, which is
//! what makes them robust to outliers, and all four are solved by iteratively
//! reweighted least squares: each outer iteration freezes the weights
//! `1/max(norm, eps)` and solves the induced weighted quadratic flag problem,
//! either in closed form (Procrustes) or by warm-started CGD. Warm starting
//! is not an optimization nicety: the descent argument for fDPCP only goes
//! through because the inner solve starts at the previous iterate and can
//! never increase the surrogate.
//!
//! The objectives sum over the disjoint blocks of the flag, not its nested
//! levels: each block is scored on the directions it adds, so blocks of
//! different widths specialize to different structures in the data instead
//! of all chasing the dominant one. A one-block flag `(k;n)` recovers the
//! usual L2-flavored estimators, the full chain `(1,...,k;n)` the L1 ones.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flag::{chordal_distance, random_flag, svd_init_flag, FlagPoint, FlagType};
use crate::stiefel::{
    procrustes_maximize, solve_weighted_fpca, CgdOptions, Masks, Sense, WeightStack,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Maximize the summed projection norms (robust PCA).
    Frpca,
    /// Minimize the summed residual norms (weighted/robust subspace fit).
    Fwpca,
    /// Minimize the summed projection norms (dual principal components).
    Fdpcp,
    /// Maximize the summed residual norms (dual of fWPCA).
    Fwdpcp,
}

impl Variant {
    /// Dual variants score by projection onto the recovered directions
    /// rather than by reconstruction.
    pub fn is_dual(self) -> bool {
        matches!(self, Variant::Fdpcp | Variant::Fwdpcp)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Frpca => "frpca",
            Variant::Fwpca => "fwpca",
            Variant::Fdpcp => "fdpcp",
            Variant::Fwdpcp => "fwdpcp",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "frpca" => Ok(Variant::Frpca),
            "fwpca" => Ok(Variant::Fwpca),
            "fdpcp" => Ok(Variant::Fdpcp),
            "fwdpcp" => Ok(Variant::Fwdpcp),
            other => Err(Error::Parse(format!("unknown variant '{other}'"))),
        }
    }
}

fn check_data(f: &FlagPoint, x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() != f.ftype().ambient() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, ambient is {}",
            x.nrows(),
            f.ftype().ambient()
        )));
    }
    if x.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    Ok(())
}

/// Per-block projection norms `‖(U I_i)ᵀ x_j‖` (k × p) for a flag point.
fn block_projection_norms(f: &FlagPoint, x: &DMatrix<f64>) -> DMatrix<f64> {
    let b = f.rep().tr_mul(x);
    let p = x.ncols();
    let k = f.ftype().num_blocks();
    let mut out = DMatrix::zeros(k, p);
    for (i, r) in f.ftype().block_ranges().into_iter().enumerate() {
        for j in 0..p {
            let mut s = 0.0;
            for row in r.clone() {
                s += b[(row, j)] * b[(row, j)];
            }
            out[(i, j)] = s.sqrt();
        }
    }
    out
}

/// Per-block residual norms `‖x_j - U I_i Uᵀ x_j‖` (k × p).
fn block_residual_norms(f: &FlagPoint, x: &DMatrix<f64>) -> DMatrix<f64> {
    let proj = block_projection_norms(f, x);
    let p = x.ncols();
    let mut out = DMatrix::zeros(proj.nrows(), p);
    for j in 0..p {
        let xn2 = x.column(j).norm_squared();
        for i in 0..proj.nrows() {
            out[(i, j)] = (xn2 - proj[(i, j)] * proj[(i, j)]).max(0.0).sqrt();
        }
    }
    out
}

/// IRLS weights for the projection-norm objectives (fRPCA, fDPCP):
/// `w_ij = 1/max(‖(U I_i)ᵀ x_j‖, eps)`.
pub fn weights_plus(f: &FlagPoint, x: &DMatrix<f64>, eps: f64) -> Result<WeightStack> {
    check_data(f, x)?;
    if !(eps > 0.0) {
        return Err(Error::BadDims(format!("eps must be positive, got {eps}")));
    }
    let norms = block_projection_norms(f, x);
    stack_from_norms(&norms, eps)
}

/// IRLS weights for the residual-norm objectives (fWPCA, fWDPCP):
/// `w_ij = 1/max(‖x_j - U I_i Uᵀ x_j‖, eps)`.
pub fn weights_minus(f: &FlagPoint, x: &DMatrix<f64>, eps: f64) -> Result<WeightStack> {
    check_data(f, x)?;
    if !(eps > 0.0) {
        return Err(Error::BadDims(format!("eps must be positive, got {eps}")));
    }
    let norms = block_residual_norms(f, x);
    stack_from_norms(&norms, eps)
}

fn stack_from_norms(norms: &DMatrix<f64>, eps: f64) -> Result<WeightStack> {
    let levels = (0..norms.nrows())
        .map(|i| DVector::from_fn(norms.ncols(), |j, _| 1.0 / norms[(i, j)].max(eps)))
        .collect();
    WeightStack::new(levels)
}

/// The value each variant optimizes: summed per-block projection norms for
/// fRPCA/fDPCP, summed per-block residual norms for fWPCA/fWDPCP.
pub fn robust_objective(variant: Variant, f: &FlagPoint, x: &DMatrix<f64>) -> Result<f64> {
    check_data(f, x)?;
    let norms = match variant {
        Variant::Frpca | Variant::Fdpcp => block_projection_norms(f, x),
        Variant::Fwpca | Variant::Fwdpcp => block_residual_norms(f, x),
    };
    Ok(norms.iter().sum())
}

/// Initialization strategy for [`fit`].
#[derive(Debug, Clone)]
pub enum Init {
    /// Seeded Haar-ish random flag.
    Random(u64),
    /// Top left singular vectors of the data.
    Svd,
    /// A caller-supplied starting flag of the right type.
    Explicit(FlagPoint),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iters: usize,
    /// Stop when the objective changes by less than this between outer
    /// iterations.
    pub obj_tol: f64,
    /// Stop when consecutive flags are closer than this in chordal distance.
    pub flag_tol: f64,
    /// Weight clamp `eps`; keeps the IRLS weights finite near zero norms.
    pub eps_clamp: f64,
    pub init: Init,
    pub inner: CgdOptions,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iters: 50,
            obj_tol: 1e-9,
            flag_tol: 1e-9,
            eps_clamp: 1e-8,
            init: Init::Random(0),
            inner: CgdOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub directions: FlagPoint,
    /// Objective at the initial flag and after every outer iteration;
    /// length is `iterations + 1`.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// True when an objective- or flag-distance tolerance fired before
    /// `max_iters` was exhausted.
    pub converged: bool,
    pub variant: Variant,
}

pub(crate) fn initial_flag(x: &DMatrix<f64>, ftype: &FlagType, init: &Init) -> Result<FlagPoint> {
    match init {
        Init::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(random_flag(ftype, &mut rng))
        }
        Init::Svd => svd_init_flag(x, ftype),
        Init::Explicit(f) => {
            if f.ftype() != ftype {
                return Err(Error::TypeMismatch);
            }
            Ok(f.clone())
        }
    }
}

/// `A = Σ_i I_i Uᵀ X W_i Xᵀ`: rows of block `b` are the current coefficients
/// reweighted by that block's own weights. Maximizing `tr(A Z)` over Stiefel
/// `Z` is the linearized IRLS step for the norm objectives.
fn irls_target(f: &FlagPoint, x: &DMatrix<f64>, w: &WeightStack) -> DMatrix<f64> {
    let b = f.rep().tr_mul(x); // n_k x p
    let p = x.ncols();
    let mut a = DMatrix::zeros(f.ftype().total_dim(), f.ftype().ambient());
    for (blk, r) in f.ftype().block_ranges().into_iter().enumerate() {
        let wb = w.level(blk);
        let mut rows = b.rows(r.start, r.len()).into_owned();
        for j in 0..p {
            for c in 0..rows.nrows() {
                rows[(c, j)] *= wb[j];
            }
        }
        a.rows_mut(r.start, r.len()).copy_from(&(rows * x.transpose()));
    }
    a
}

/// Runs the IRLS loop for a robust variant. The objective trace records the
/// true (unweighted) robust objective at every outer iterate; for fDPCP it is
/// nonincreasing up to the weight clamp.
pub fn fit(
    variant: Variant,
    x: &DMatrix<f64>,
    ftype: &FlagType,
    opts: &FitOptions,
) -> Result<FitResult> {
    if x.ncols() == 0 {
        return Err(Error::EmptyData);
    }
    if x.nrows() != ftype.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, ambient is {}",
            x.nrows(),
            ftype.ambient()
        )));
    }
    let mut current = initial_flag(x, ftype, &opts.init)?;
    let mut trace = vec![robust_objective(variant, &current, x)?];
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..opts.max_iters {
        let next = match variant {
            Variant::Frpca => {
                let w = weights_plus(&current, x, opts.eps_clamp)?;
                let (z, _) = procrustes_maximize(&irls_target(&current, x, &w))?;
                FlagPoint::new(z, ftype.clone())?
            }
            Variant::Fwpca => {
                let w = weights_minus(&current, x, opts.eps_clamp)?;
                let (z, _) = procrustes_maximize(&irls_target(&current, x, &w))?;
                FlagPoint::new(z, ftype.clone())?
            }
            Variant::Fdpcp => {
                let w = weights_plus(&current, x, opts.eps_clamp)?;
                solve_weighted_fpca(
                    x,
                    &w,
                    ftype,
                    &current,
                    Sense::Minimize,
                    Masks::Blocks,
                    &opts.inner,
                )?
            }
            Variant::Fwdpcp => {
                // Maximizing the weighted residual surrogate is minimizing
                // the weighted projection objective; ‖x_j‖² terms are
                // constant in U.
                let w = weights_minus(&current, x, opts.eps_clamp)?;
                solve_weighted_fpca(
                    x,
                    &w,
                    ftype,
                    &current,
                    Sense::Minimize,
                    Masks::Blocks,
                    &opts.inner,
                )?
            }
        };
        let fnew = robust_objective(variant, &next, x)?;
        let moved = chordal_distance(&current, &next)?;
        let fprev = *trace.last().unwrap();
        trace.push(fnew);
        iterations += 1;
        current = next;
        if (fprev - fnew).abs() < opts.obj_tol || moved < opts.flag_tol {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        directions: current,
        objective_trace: trace,
        iterations,
        converged,
        variant,
    })
}

/// Maps the classical estimator names to a variant and flag signature:
/// `L1-*` uses the full chain `(1, 2, ..., k; n)`, `L2-*` the single level
/// `(k; n)`.
pub fn named_variant(name: &str, k: usize, n: usize) -> Result<(Variant, FlagType)> {
    if k == 0 || k >= n {
        return Err(Error::BadDims(format!("need 0 < k < n, got k={k}, n={n}")));
    }
    let canon = name.to_ascii_uppercase().replace('_', "-");
    let (flavor, base) = match canon.as_str() {
        "L1-RPCA" => ("l1", Variant::Frpca),
        "L2-RPCA" => ("l2", Variant::Frpca),
        "L1-WPCA" => ("l1", Variant::Fwpca),
        "L2-WPCA" => ("l2", Variant::Fwpca),
        "L1-DPCP" => ("l1", Variant::Fdpcp),
        "L2-DPCP" => ("l2", Variant::Fdpcp),
        "L1-WDPCP" => ("l1", Variant::Fwdpcp),
        "L2-WDPCP" => ("l2", Variant::Fwdpcp),
        other => return Err(Error::Parse(format!("unknown estimator name '{other}'"))),
    };
    let dims = if flavor == "l1" {
        (1..=k).collect()
    } else {
        vec![k]
    };
    Ok((base, FlagType::new(dims, n)?))
}
