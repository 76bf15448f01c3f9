//! Riemannian backends for the data spaces the tangent pipeline supports:
//! flat vectors, unit spheres, Grassmannians, and Kendall pre-shapes of
//! planar landmark sets.
//!
//! Every backend provides the exponential and logarithmic maps, geodesic
//! distance, row-major tangent vectorization, and the Karcher mean/median
//! iterations. Pre-shape space is treated as the unit sphere inside the
//! centered-configuration subspace; since that subspace is flat, great-circle
//! formulas are exact and no separate machinery is needed. The rotation
//! quotient (full Kendall shape space) is intentionally not taken.

use crate::error::{Error, Result};
use crate::flag::thin_qr_positive;
use nalgebra::{DMatrix, DVector};
use std::fmt;

/// Tolerance for membership checks in point and tangent constructors.
const POINT_TOL: f64 = 1e-10;

/// Margin keeping log-map arguments away from the cut locus.
const CUT_MARGIN: f64 = 1e-8;

/// The supported model spaces. Dimension parameters follow the usual
/// conventions: `Sphere(n)` is S^n embedded in R^{n+1}, `Grassmann(k, n)`
/// is the space of k-planes in R^n, and `Preshape2(m)` holds centered,
/// unit-Frobenius-norm configurations of `m` planar landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifoldKind {
    Euclidean(usize),
    Sphere(usize),
    Grassmann(usize, usize),
    Preshape2(usize),
}

impl ManifoldKind {
    pub fn validate(self) -> Result<()> {
        let ok = match self {
            ManifoldKind::Euclidean(n) => n > 0,
            ManifoldKind::Sphere(n) => n > 0,
            ManifoldKind::Grassmann(k, n) => k > 0 && k < n,
            // A single centered landmark is the zero matrix and cannot be
            // normalized, so two landmarks is the smallest valid shape.
            ManifoldKind::Preshape2(m) => m >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadDims(format!("{self}")))
        }
    }

    /// Shape of the coordinate matrix representing a point (and a tangent).
    pub fn coord_shape(self) -> (usize, usize) {
        match self {
            ManifoldKind::Euclidean(n) => (n, 1),
            ManifoldKind::Sphere(n) => (n + 1, 1),
            ManifoldKind::Grassmann(k, n) => (n, k),
            ManifoldKind::Preshape2(m) => (m, 2),
        }
    }

    /// Number of entries in the coordinate matrix, i.e. the length of a
    /// flattened tangent vector.
    pub fn ambient_len(self) -> usize {
        let (r, c) = self.coord_shape();
        r * c
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldKind::Euclidean(n) => write!(f, "EUCLIDEAN({n})"),
            ManifoldKind::Sphere(n) => write!(f, "SPHERE({n})"),
            ManifoldKind::Grassmann(k, n) => write!(f, "GRASSMANN({k},{n})"),
            ManifoldKind::Preshape2(m) => write!(f, "PRESHAPE2({m})"),
        }
    }
}

impl std::str::FromStr for ManifoldKind {
    type Err = Error;

    /// Parses the `Display` form, e.g. `SPHERE(4)` or `GRASSMANN(2,4)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown manifold kind {s:?}"));
        let open = s.find('(').ok_or_else(bad)?;
        let close = s.strip_suffix(')').ok_or_else(bad)?;
        let name = &close[..open];
        let args: Vec<usize> = close[open + 1..]
            .split(',')
            .map(|a| a.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let kind = match (name, args.as_slice()) {
            ("EUCLIDEAN", [n]) => ManifoldKind::Euclidean(*n),
            ("SPHERE", [n]) => ManifoldKind::Sphere(*n),
            ("GRASSMANN", [k, n]) => ManifoldKind::Grassmann(*k, *n),
            ("PRESHAPE2", [m]) => ManifoldKind::Preshape2(*m),
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A point on one of the model spaces, stored by its coordinate matrix.
/// Construction checks the kind's membership conditions, so downstream code
/// can rely on them.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    kind: ManifoldKind,
    coords: DMatrix<f64>,
}

impl ManifoldPoint {
    pub fn new(kind: ManifoldKind, coords: DMatrix<f64>) -> Result<Self> {
        kind.validate()?;
        let (r, c) = kind.coord_shape();
        if coords.nrows() != r || coords.ncols() != c {
            return Err(Error::DimensionMismatch(format!(
                "point on {kind} needs {r}x{c} coordinates, got {}x{}",
                coords.nrows(),
                coords.ncols()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("manifold point"));
        }
        let defect = membership_defect(kind, &coords);
        if defect > POINT_TOL {
            return Err(Error::DimensionMismatch(format!(
                "coordinates are off {kind} by {defect:.3e}"
            )));
        }
        Ok(ManifoldPoint { kind, coords })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Wraps coordinates produced by the maps below, which keep membership
    /// by construction; hygiene passes bring the defect to machine scale.
    fn trusted(kind: ManifoldKind, coords: DMatrix<f64>) -> Self {
        debug_assert!(membership_defect(kind, &coords) <= 1e-9);
        ManifoldPoint { kind, coords }
    }
}

/// How far coordinates sit from the kind's membership conditions.
fn membership_defect(kind: ManifoldKind, coords: &DMatrix<f64>) -> f64 {
    match kind {
        ManifoldKind::Euclidean(_) => 0.0,
        ManifoldKind::Sphere(_) => (coords.norm() - 1.0).abs(),
        ManifoldKind::Grassmann(_, _) => {
            let gram = coords.tr_mul(coords);
            let mut d = 0.0_f64;
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    d = d.max((gram[(i, j)] - target).abs());
                }
            }
            d
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

/// A tangent vector, carrying the point it is based at. The coordinate
/// matrix has the same shape as the base point's.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    coords: DMatrix<f64>,
}

impl TangentVector {
    pub fn new(base: ManifoldPoint, coords: DMatrix<f64>) -> Result<Self> {
        if coords.shape() != base.coords.shape() {
            return Err(Error::DimensionMismatch(format!(
                "tangent at a {} point needs {}x{} coordinates, got {}x{}",
                base.kind,
                base.coords.nrows(),
                base.coords.ncols(),
                coords.nrows(),
                coords.ncols()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tangent vector"));
        }
        let defect = tangency_defect(&base, &coords);
        if defect > POINT_TOL {
            return Err(Error::DimensionMismatch(format!(
                "coordinates are off the tangent space by {defect:.3e}"
            )));
        }
        Ok(TangentVector { base, coords })
    }

    /// Orthogonal projection of arbitrary coordinates onto the tangent
    /// space at `base`. Always succeeds; the workhorse behind `unflatten`
    /// and the log maps.
    pub fn project(base: &ManifoldPoint, raw: &DMatrix<f64>) -> Self {
        let coords = match base.kind {
            ManifoldKind::Euclidean(_) => raw.clone(),
            ManifoldKind::Sphere(_) => raw - &base.coords * base.coords.dot(raw),
            ManifoldKind::Grassmann(_, _) => raw - &base.coords * base.coords.tr_mul(raw),
            ManifoldKind::Preshape2(_) => {
                let mut m = raw.clone();
                for mut c in m.column_iter_mut() {
                    let mean = c.mean();
                    c.add_scalar_mut(-mean);
                }
                let radial = base.coords.dot(&m);
                m - &base.coords * radial
            }
        };
        TangentVector {
            base: base.clone(),
            coords,
        }
    }

    pub fn zero(base: &ManifoldPoint) -> Self {
        let (r, c) = base.coords.shape();
        TangentVector {
            base: base.clone(),
            coords: DMatrix::zeros(r, c),
        }
    }

    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    /// Frobenius norm, which is the Riemannian norm on all four backends.
    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

fn tangency_defect(base: &ManifoldPoint, coords: &DMatrix<f64>) -> f64 {
    match base.kind {
        ManifoldKind::Euclidean(_) => 0.0,
        ManifoldKind::Sphere(_) => base.coords.dot(coords).abs(),
        ManifoldKind::Grassmann(_, _) => base.coords.tr_mul(coords).abs().max(),
        ManifoldKind::Preshape2(_) => {
            let mut d = base.coords.dot(coords).abs();
            for c in coords.column_iter() {
                d = d.max(c.sum().abs());
            }
            d
        }
    }
}

fn check_same_kind(a: &ManifoldPoint, b: &ManifoldPoint) -> Result<()> {
    if a.kind != b.kind {
        return Err(Error::BaseMismatch(format!(
            "points live on {} and {}",
            a.kind, b.kind
        )));
    }
    Ok(())
}

fn check_based_at(x: &ManifoldPoint, v: &TangentVector) -> Result<()> {
    check_same_kind(x, v.base())?;
    let diff = (&x.coords - &v.base.coords).abs().max();
    if diff > 1e-9 {
        return Err(Error::BaseMismatch(format!(
            "tangent base differs from the point by {diff:.3e}"
        )));
    }
    Ok(())
}

/// Follows the geodesic leaving `x` with velocity `v` for unit time.
pub fn exp_map(x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
    check_based_at(x, v)?;
    let theta = v.norm();
    if theta == 0.0 {
        return Ok(x.clone());
    }
    let coords = match x.kind {
        ManifoldKind::Euclidean(_) => &x.coords + &v.coords,
        ManifoldKind::Sphere(_) | ManifoldKind::Preshape2(_) => {
            let mut p = &x.coords * theta.cos() + &v.coords * (theta.sin() / theta);
            if let ManifoldKind::Preshape2(_) = x.kind {
                for mut c in p.column_iter_mut() {
                    let mean = c.mean();
                    c.add_scalar_mut(-mean);
                }
            }
            let n = p.norm();
            p / n
        }
        ManifoldKind::Grassmann(_, _) => {
            // v = PΣQᵀ turns the geodesic into per-direction circle motion:
            // X Q cosΣ Qᵀ + P sinΣ Qᵀ, re-orthonormalized for hygiene.
            let svd = v.coords.clone().svd(true, true);
            let p = svd.u.expect("thin SVD with u");
            let qt = svd.v_t.expect("thin SVD with v_t");
            let sig = &svd.singular_values;
            let cosd = DMatrix::from_diagonal(&sig.map(f64::cos));
            let sind = DMatrix::from_diagonal(&sig.map(f64::sin));
            let raw = &x.coords * qt.tr_mul(&(cosd * &qt)) + p * sind * &qt;
            thin_qr_positive(&raw)?
        }
    };
    Ok(ManifoldPoint::trusted(x.kind, coords))
}

/// Inverts the exponential map: the tangent at `x` whose geodesic reaches
/// `y` at unit time. Fails with `CutLocus` when `y` is (numerically) as far
/// from `x` as the geometry allows, where the inverse stops being unique.
pub fn log_map(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
    check_same_kind(x, y)?;
    match x.kind {
        ManifoldKind::Euclidean(_) => Ok(TangentVector {
            base: x.clone(),
            coords: &y.coords - &x.coords,
        }),
        ManifoldKind::Sphere(_) | ManifoldKind::Preshape2(_) => {
            let c = x.coords.dot(&y.coords).clamp(-1.0, 1.0);
            let theta = c.acos();
            if std::f64::consts::PI - theta < CUT_MARGIN {
                return Err(Error::CutLocus);
            }
            let w = &y.coords - &x.coords * c;
            let wn = w.norm();
            if theta <= 0.0 || wn == 0.0 {
                return Ok(TangentVector::zero(x));
            }
            Ok(TangentVector::project(x, &(w * (theta / wn))))
        }
        ManifoldKind::Grassmann(_, _) => {
            let xty = x.coords.tr_mul(&y.coords);
            let svd = xty.clone().svd(true, true);
            let smallest = svd
                .singular_values
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
            // Principal angle hitting π/2 means some direction of y is
            // orthogonal to all of x: the geodesic is no longer unique.
            if smallest.clamp(0.0, 1.0).acos() >= std::f64::consts::FRAC_PI_2 - CUT_MARGIN {
                return Err(Error::CutLocus);
            }
            let u = svd.u.expect("thin SVD with u");
            let vt = svd.v_t.expect("thin SVD with v_t");
            let inv_sig = DMatrix::from_diagonal(
                &svd.singular_values.map(|s| 1.0 / s.clamp(1e-12, 1.0)),
            );
            let inv = vt.tr_mul(&(inv_sig * u.transpose()));
            let yinv = &y.coords * inv;
            let m = &yinv - &x.coords * x.coords.tr_mul(&yinv);
            let msvd = m.clone().svd(true, true);
            let mu = msvd.u.expect("thin SVD with u");
            let mvt = msvd.v_t.expect("thin SVD with v_t");
            let atan = DMatrix::from_diagonal(&msvd.singular_values.map(f64::atan));
            Ok(TangentVector::project(x, &(mu * atan * mvt)))
        }
    }
}

/// Geodesic distance. Defined for every pair, including cut-locus pairs.
pub fn dist(x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    check_same_kind(x, y)?;
    let d = match x.kind {
        ManifoldKind::Euclidean(_) => (&x.coords - &y.coords).norm(),
        ManifoldKind::Sphere(_) | ManifoldKind::Preshape2(_) => {
            x.coords.dot(&y.coords).clamp(-1.0, 1.0).acos()
        }
        ManifoldKind::Grassmann(_, _) => {
            let svd = x.coords.tr_mul(&y.coords).svd(false, false);
            svd.singular_values
                .iter()
                .map(|s| s.clamp(-1.0, 1.0).acos().powi(2))
                .sum::<f64>()
                .sqrt()
        }
    };
    Ok(d)
}

/// Row-major vectorization of the tangent coordinates, the layout used for
/// the flag-fitting data matrix.
pub fn flatten(v: &TangentVector) -> DVector<f64> {
    let (r, c) = v.coords.shape();
    DVector::from_fn(r * c, |i, _| v.coords[(i / c, i % c)])
}

/// Reshapes a row-major vector into a tangent at `x`, re-projecting onto
/// the tangent space so small defects (or deliberate ambient components)
/// are removed.
pub fn unflatten(x: &ManifoldPoint, w: &DVector<f64>) -> Result<TangentVector> {
    let (r, c) = x.coords.shape();
    if w.len() != r * c {
        return Err(Error::DimensionMismatch(format!(
            "tangent at a {} point flattens to length {}, got {}",
            x.kind,
            r * c,
            w.len()
        )));
    }
    let raw = DMatrix::from_fn(r, c, |i, j| w[i * c + j]);
    Ok(TangentVector::project(x, &raw))
}

/// Settings for the Karcher mean and median iterations.
#[derive(Debug, Clone)]
pub struct MeanOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub step: f64,
    /// Weiszfeld guard: distances below this stop inflating the weight.
    pub median_eps: f64,
}

impl Default for MeanOptions {
    fn default() -> Self {
        MeanOptions {
            max_iters: 1000,
            tol: 1e-8,
            step: 0.05,
            median_eps: 1e-10,
        }
    }
}

impl MeanOptions {
    fn assert_valid(&self) {
        assert!(self.max_iters > 0, "max_iters must be positive");
        assert!(self.tol > 0.0, "tol must be positive");
        assert!(self.step > 0.0, "step must be positive");
        assert!(self.median_eps > 0.0, "median_eps must be positive");
    }
}

/// Result of a mean or median iteration. `converged` reports whether the
/// tangent-mean norm dropped below the tolerance before the iteration cap;
/// the point is the best estimate either way.
#[derive(Debug, Clone)]
pub struct MeanOutcome {
    pub point: ManifoldPoint,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn check_common_kind(points: &[ManifoldPoint]) -> Result<ManifoldKind> {
    let first = points.first().ok_or(Error::EmptyData)?;
    for p in points {
        check_same_kind(first, p)?;
    }
    Ok(first.kind)
}

/// Karcher mean by tangent-space gradient descent from the first point:
/// μ ← exp_μ(step · mean_j log_μ(x_j)) until the tangent mean is small.
pub fn karcher_mean(points: &[ManifoldPoint], opts: &MeanOptions) -> Result<MeanOutcome> {
    opts.assert_valid();
    let kind = check_common_kind(points)?;
    if points.len() == 1 {
        return Ok(MeanOutcome {
            point: points[0].clone(),
            iterations: 0,
            converged: true,
        });
    }
    // Flat space needs no iteration: the arithmetic mean is the fixed point.
    if let ManifoldKind::Euclidean(_) = kind {
        let mut sum = points[0].coords.clone();
        for p in &points[1..] {
            sum += &p.coords;
        }
        let mean = sum / points.len() as f64;
        return Ok(MeanOutcome {
            point: ManifoldPoint::trusted(kind, mean),
            iterations: 1,
            converged: true,
        });
    }
    descend(points, opts, |logs, _| {
        let mut g = logs[0].coords.clone();
        for l in &logs[1..] {
            g += &l.coords;
        }
        g / logs.len() as f64
    })
}

/// Karcher median by a Weiszfeld-type iteration: the update direction is
/// the distance-weighted tangent mean Σ_j log_μ(x_j)/d_j over Σ_j 1/d_j,
/// with distances clamped below by `median_eps`.
pub fn karcher_median(points: &[ManifoldPoint], opts: &MeanOptions) -> Result<MeanOutcome> {
    opts.assert_valid();
    check_common_kind(points)?;
    if points.len() == 1 {
        return Ok(MeanOutcome {
            point: points[0].clone(),
            iterations: 0,
            converged: true,
        });
    }
    let eps = opts.median_eps;
    descend(points, opts, move |logs, _| {
        let mut g = DMatrix::zeros(logs[0].coords.nrows(), logs[0].coords.ncols());
        let mut total = 0.0;
        for l in logs {
            let w = 1.0 / l.norm().max(eps);
            g += &l.coords * w;
            total += w;
        }
        g / total
    })
}

/// Shared descent loop: combine the logs at the current estimate into an
/// update direction, stop when it is shorter than the tolerance.
fn descend(
    points: &[ManifoldPoint],
    opts: &MeanOptions,
    combine: impl Fn(&[TangentVector], &ManifoldPoint) -> DMatrix<f64>,
) -> Result<MeanOutcome> {
    let mut mu = points[0].clone();
    let mut logs = Vec::with_capacity(points.len());
    for it in 0..opts.max_iters {
        logs.clear();
        for p in points {
            logs.push(log_map(&mu, p)?);
        }
        let g = combine(&logs, &mu);
        if g.norm() < opts.tol {
            return Ok(MeanOutcome {
                point: mu,
                iterations: it,
                converged: true,
            });
        }
        let step = TangentVector::project(&mu, &(g * opts.step));
        mu = exp_map(&mu, &step)?;
    }
    Ok(MeanOutcome {
        point: mu,
        iterations: opts.max_iters,
        converged: false,
    })
}
