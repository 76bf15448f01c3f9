//! Flag types, flag representatives and the chordal metric.
//!
//! A flag of signature `(n_1, ..., n_k; n)` is a chain of nested subspaces
//! `V_1 ⊂ V_2 ⊂ ... ⊂ V_k` of `R^n` with `dim V_i = n_i`. It is represented
//! by an `n × n_k` column-orthonormal matrix whose first `n_i` columns span
//! `V_i`; the columns between `n_{i-1}` and `n_i` form block `i`. Any
//! block-diagonal orthogonal rotation of the columns represents the same
//! flag.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

use crate::error::{Error, Result};

/// Signature of a flag manifold: strictly increasing subspace dimensions
/// inside a fixed ambient space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlagType {
    dims: Vec<usize>,
    ambient: usize,
}

impl FlagType {
    /// Validates `0 < dims[0] < dims[1] < ... < dims[k-1] < ambient`.
    pub fn new(dims: Vec<usize>, ambient: usize) -> Result<Self> {
        if dims.is_empty() || dims[0] == 0 || dims.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NonIncreasingSignature(dims));
        }
        let last = *dims.last().unwrap();
        if last >= ambient {
            return Err(Error::AmbientTooSmall { last, ambient });
        }
        Ok(FlagType { dims, ambient })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    /// Number of blocks `k`.
    pub fn num_blocks(&self) -> usize {
        self.dims.len()
    }

    /// Total number of columns `n_k` of a representative.
    pub fn total_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Column range of block `i`: `[n_{i-1}, n_i)`. The ranges partition
    /// `[0, n_k)` in order.
    pub fn block_ranges(&self) -> Vec<Range<usize>> {
        let mut prev = 0;
        self.dims
            .iter()
            .map(|&d| {
                let r = prev..d;
                prev = d;
                r
            })
            .collect()
    }

    /// Column range of the nested subspace at level `i`: `[0, n_i)`.
    pub fn level_ranges(&self) -> Vec<Range<usize>> {
        self.dims.iter().map(|&d| 0..d).collect()
    }

    /// Block sizes `m_i = n_i - n_{i-1}`.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.block_ranges().into_iter().map(|r| r.len()).collect()
    }
}

impl std::fmt::Display for FlagType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        write!(f, "({};{})", dims.join(","), self.ambient)
    }
}

const ORTHONORMALITY_TOL: f64 = 1e-10;

/// A point on a flag manifold: a column-orthonormal representative together
/// with its signature.
#[derive(Debug, Clone)]
pub struct FlagPoint {
    rep: DMatrix<f64>,
    ftype: FlagType,
}

impl FlagPoint {
    /// Wraps a representative, checking shape and orthonormality
    /// (`max |UᵀU - I|` at most 1e-10).
    pub fn new(rep: DMatrix<f64>, ftype: FlagType) -> Result<Self> {
        if rep.nrows() != ftype.ambient() || rep.ncols() != ftype.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "representative is {}x{}, type {} needs {}x{}",
                rep.nrows(),
                rep.ncols(),
                ftype,
                ftype.ambient(),
                ftype.total_dim()
            )));
        }
        let defect = orthonormality_defect(&rep);
        if !defect.is_finite() {
            return Err(Error::NonFinite("flag representative"));
        }
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::DimensionMismatch(format!(
                "representative is not orthonormal, defect {defect:.3e}"
            )));
        }
        Ok(FlagPoint { rep, ftype })
    }

    pub fn rep(&self) -> &DMatrix<f64> {
        &self.rep
    }

    pub fn ftype(&self) -> &FlagType {
        &self.ftype
    }

    /// Columns of block `i`.
    pub fn block(&self, i: usize) -> DMatrix<f64> {
        let r = self.ftype.block_ranges()[i].clone();
        self.rep.columns(r.start, r.len()).into_owned()
    }

    /// Columns of the nested subspace at level `i` (blocks `1..=i`).
    pub fn level(&self, i: usize) -> DMatrix<f64> {
        let r = self.ftype.level_ranges()[i].clone();
        self.rep.columns(0, r.len()).into_owned()
    }
}

pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let gram = u.tr_mul(u);
    let mut defect: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            defect = defect.max((gram[(i, j)] - target).abs());
        }
    }
    defect
}

/// Orthogonal projection of `x` onto the span of block `i` of `F`.
pub fn project_block(f: &FlagPoint, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_block_args(f, i, x)?;
    let b = f.block(i);
    Ok(&b * (b.tr_mul(x)))
}

/// Orthogonal projection of `x` onto the level-`i` nested subspace of `F`
/// (the span of the first `n_i` columns).
pub fn project_level(f: &FlagPoint, i: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_block_args(f, i, x)?;
    let b = f.level(i);
    Ok(&b * (b.tr_mul(x)))
}

fn check_block_args(f: &FlagPoint, i: usize, x: &DVector<f64>) -> Result<()> {
    if i >= f.ftype().num_blocks() {
        return Err(Error::BadDims(format!(
            "block index {i} out of range for type {}",
            f.ftype()
        )));
    }
    if x.len() != f.ftype().ambient() {
        return Err(Error::DimensionMismatch(format!(
            "vector length {} does not match ambient {}",
            x.len(),
            f.ftype().ambient()
        )));
    }
    Ok(())
}

/// Chordal distance between two flags of the same type:
/// `sqrt(Σ_i max(0, m_i - ‖X_iᵀ Y_i‖_F²))`.
///
/// Invariant under within-block orthogonal rotations of either argument.
pub fn chordal_distance(a: &FlagPoint, b: &FlagPoint) -> Result<f64> {
    if a.ftype() != b.ftype() {
        return Err(Error::TypeMismatch);
    }
    let mut sum = 0.0;
    for (i, r) in a.ftype().block_ranges().into_iter().enumerate() {
        let xi = a.block(i);
        let yi = b.block(i);
        let cross = xi.tr_mul(&yi);
        sum += (r.len() as f64 - cross.norm_squared()).max(0.0);
    }
    Ok(sum.sqrt())
}

/// Thin QR with the sign convention `diag(R) >= 0`, so the factorization is
/// unique for full-rank input. Returns `RankCollapse` when a diagonal entry
/// of `R` vanishes relative to the input scale.
pub(crate) fn thin_qr_positive(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("qr input"));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = m.norm().max(1.0);
    for j in 0..r.ncols().min(r.nrows()) {
        let d = r[(j, j)];
        if d.abs() <= 1e-12 * scale {
            return Err(Error::RankCollapse);
        }
        if d < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

/// Haar-ish random flag: a standard Gaussian `n × n_k` matrix orthonormalized
/// by QR. Deterministic for a fixed RNG state.
pub fn random_flag<R: Rng>(ftype: &FlagType, rng: &mut R) -> FlagPoint {
    let (n, q) = (ftype.ambient(), ftype.total_dim());
    loop {
        let g = DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal));
        // A Gaussian matrix is almost surely full rank; retry on the
        // measure-zero collapse rather than erroring.
        if let Ok(qmat) = thin_qr_positive(&g) {
            return FlagPoint::new(qmat, ftype.clone()).expect("QR output is orthonormal");
        }
    }
}

/// Flag of the top `n_k` left singular vectors of the data matrix, columns in
/// descending singular-value order.
pub fn svd_init_flag(x: &DMatrix<f64>, ftype: &FlagType) -> Result<FlagPoint> {
    let q = ftype.total_dim();
    if x.nrows() != ftype.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, ambient is {}",
            x.nrows(),
            ftype.ambient()
        )));
    }
    if x.ncols() < q {
        return Err(Error::RankDeficient {
            rank: x.ncols(),
            required: q,
        });
    }
    let svd = x.clone().svd(true, false);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax.max(1e-300)).count();
    if rank < q {
        return Err(Error::RankDeficient { rank, required: q });
    }
    let u = svd.u.expect("left singular vectors requested");
    // nalgebra sorts singular values in descending order; keep the top block.
    let rep = u.columns(0, q).into_owned();
    FlagPoint::new(rep, ftype.clone())
}
