//! Stiefel-manifold optimization primitives and the weighted flag objective.
//!
//! The weighted objective is `f(U) = Σ_i tr(Uᵀ X W_i Xᵀ U M_i)` where the
//! masks `M_i` select either the first `n_i` columns (nested levels) or the
//! columns of block `i` alone (disjoint blocks); see [`Masks`]. Under level
//! masks earlier columns appear in more terms than later ones, which is what
//! orders the recovered directions; under block masks each term scores only
//! its own columns, so blocks compete for samples instead of nesting.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::flag::{thin_qr_positive, FlagPoint, FlagType};

/// Optimization direction for a smooth objective on the Stiefel manifold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Column masks used by the weighted flag objective.
///
/// `Levels` masks the first `n_i` columns in term `i` (nested spans `J_i`),
/// so weight vector `i` scores projections onto the whole i-th subspace of
/// the flag. `Blocks` masks each block's own columns (disjoint spans `I_i`),
/// so weight vector `i` scores only the directions added at step `i`. With
/// unit weights the two differ: level masks break ties toward eigen order,
/// block masks make the objective invariant to column permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Masks {
    Levels,
    Blocks,
}

/// Projects `g` onto the tangent space of the Stiefel manifold at `u`:
/// `g - u·sym(uᵀg)`.
pub fn tangent_project(u: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.shape() != g.shape() {
        return Err(Error::DimensionMismatch(format!(
            "point is {:?}, direction is {:?}",
            u.shape(),
            g.shape()
        )));
    }
    let utg = u.tr_mul(g);
    let sym = (&utg + utg.transpose()) * 0.5;
    Ok(g - u * sym)
}

/// QR retraction: orthonormalizes `u + delta` with the positive-diagonal sign
/// convention. `qr_retract(u, 0) = u` up to machine precision.
pub fn qr_retract(u: &DMatrix<f64>, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.shape() != delta.shape() {
        return Err(Error::DimensionMismatch(format!(
            "point is {:?}, step is {:?}",
            u.shape(),
            delta.shape()
        )));
    }
    thin_qr_positive(&(u + delta))
}

/// Per-sample weights for each of the `k` terms of the weighted flag
/// objective: `k` vectors of length `p`, finite and nonnegative. Whether
/// term `i` covers level `i` or block `i` is decided by the [`Masks`]
/// argument at the call site.
#[derive(Debug, Clone)]
pub struct WeightStack {
    levels: Vec<DVector<f64>>,
}

impl WeightStack {
    pub fn new(levels: Vec<DVector<f64>>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::BadDims("weight stack needs at least one level".into()));
        }
        let p = levels[0].len();
        for (i, w) in levels.iter().enumerate() {
            if w.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "weight level {i} has {} entries, expected {p}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("weight stack"));
            }
            if w.iter().any(|&v| v < 0.0) {
                return Err(Error::BadDims(format!("negative weight in level {i}")));
            }
        }
        Ok(WeightStack { levels })
    }

    /// All-ones weights for `k` levels and `p` samples.
    pub fn unit(k: usize, p: usize) -> Self {
        WeightStack {
            levels: vec![DVector::from_element(p, 1.0); k],
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn num_samples(&self) -> usize {
        self.levels[0].len()
    }

    pub fn level(&self, i: usize) -> &DVector<f64> {
        &self.levels[i]
    }
}

fn check_objective_args(
    u: &DMatrix<f64>,
    x: &DMatrix<f64>,
    w: &WeightStack,
    ftype: &FlagType,
) -> Result<()> {
    if u.nrows() != ftype.ambient() || u.ncols() != ftype.total_dim() {
        return Err(Error::DimensionMismatch(format!(
            "point is {:?}, type {} needs {}x{}",
            u.shape(),
            ftype,
            ftype.ambient(),
            ftype.total_dim()
        )));
    }
    if x.nrows() != ftype.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} rows, ambient is {}",
            x.nrows(),
            ftype.ambient()
        )));
    }
    if w.num_levels() != ftype.num_blocks() || w.num_samples() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{}, need {}x{}",
            w.num_levels(),
            w.num_samples(),
            ftype.num_blocks(),
            x.ncols()
        )));
    }
    Ok(())
}

/// Weight seen by the columns of each block: under level masks block `b`
/// appears in terms `b..k` and collects their summed weights, under block
/// masks it keeps only its own vector.
fn block_weights(w: &WeightStack, masks: Masks) -> Vec<DVector<f64>> {
    let k = w.num_levels();
    match masks {
        Masks::Blocks => (0..k).map(|b| w.level(b).clone()).collect(),
        Masks::Levels => {
            let mut out = vec![DVector::zeros(0); k];
            let mut suffix = DVector::<f64>::zeros(w.num_samples());
            for b in (0..k).rev() {
                suffix += w.level(b);
                out[b] = suffix.clone();
            }
            out
        }
    }
}

/// `Σ_i Σ_j w_ij ‖(U M_i)ᵀ x_j‖²`, the weighted sum of squared sample
/// projections onto the masked column groups (nested levels or disjoint
/// blocks). Defined for any `U`, orthonormal or not, so it can be
/// differentiated as a function on matrix space.
pub fn weighted_flag_objective(
    u: &DMatrix<f64>,
    x: &DMatrix<f64>,
    w: &WeightStack,
    ftype: &FlagType,
    masks: Masks,
) -> Result<f64> {
    check_objective_args(u, x, w, ftype)?;
    let b = u.tr_mul(x); // coefficients, n_k x p
    let p = x.ncols();
    let eff = block_weights(w, masks);
    let mut total = 0.0;
    for (blk, r) in ftype.block_ranges().into_iter().enumerate() {
        let wb = &eff[blk];
        for j in 0..p {
            let mut s = 0.0;
            for row in r.clone() {
                s += b[(row, j)] * b[(row, j)];
            }
            total += wb[j] * s;
        }
    }
    Ok(total)
}

/// Euclidean gradient of [`weighted_flag_objective`] in `U`:
/// `2 Σ_i X W_i Xᵀ U M_i`, assembled per column block with the weights that
/// block sees under the chosen masks.
pub fn weighted_flag_gradient(
    u: &DMatrix<f64>,
    x: &DMatrix<f64>,
    w: &WeightStack,
    ftype: &FlagType,
    masks: Masks,
) -> Result<DMatrix<f64>> {
    check_objective_args(u, x, w, ftype)?;
    let p = x.ncols();
    let mut grad = DMatrix::zeros(u.nrows(), u.ncols());
    let eff = block_weights(w, masks);
    for (blk, r) in ftype.block_ranges().into_iter().enumerate() {
        let ub = u.columns(r.start, r.len());
        let mut coeffs = x.tr_mul(&ub); // p x m_b
        for j in 0..p {
            for c in 0..coeffs.ncols() {
                coeffs[(j, c)] *= eff[blk][j];
            }
        }
        let gb = x * coeffs * 2.0;
        grad.columns_mut(r.start, r.len()).copy_from(&gb);
    }
    Ok(grad)
}

/// Maximizes `tr(A Z)` over column-orthonormal `Z` (`n × q` for `A` of shape
/// `q × n`). With the thin SVD `Aᵀ = P Σ Qᵀ`, the maximizer is `Z = P Qᵀ` and
/// the optimum equals the nuclear norm of `A`.
pub fn procrustes_maximize(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("procrustes input"));
    }
    let (q, n) = a.shape();
    if q > n {
        return Err(Error::DimensionMismatch(format!(
            "need at most as many rows as columns, got {q}x{n}"
        )));
    }
    let svd = a.transpose().svd(true, true);
    let p = svd.u.expect("left vectors requested");
    let qt = svd.v_t.expect("right vectors requested");
    let z = p * qt;
    let value = svd.singular_values.iter().sum();
    Ok((z, value))
}

/// A smooth objective on the Stiefel manifold, given by value and Euclidean
/// gradient callbacks plus the optimization sense.
pub struct SmoothObjective<'a> {
    pub value: Box<dyn Fn(&DMatrix<f64>) -> f64 + 'a>,
    pub euclidean_gradient: Box<dyn Fn(&DMatrix<f64>) -> DMatrix<f64> + 'a>,
    pub sense: Sense,
}

#[derive(Debug, Clone)]
pub struct CgdOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub step_shrink: f64,
    /// Steepest-descent restart interval; `None` uses the Stiefel manifold
    /// dimension `nq - q(q+1)/2`.
    pub restart_period: Option<usize>,
}

impl Default for CgdOptions {
    fn default() -> Self {
        CgdOptions {
            max_iters: 2000,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            step_shrink: 0.5,
            restart_period: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgdOutcome {
    pub point: DMatrix<f64>,
    /// Objective value at `point`, in the caller's sense.
    pub value: f64,
    /// Number of accepted steps.
    pub iterations: usize,
    /// True when the Riemannian gradient norm fell below `grad_tol`.
    pub converged: bool,
    /// True when Armijo backtracking bottomed out; `point` is then the best
    /// iterate found rather than a stationary one.
    pub line_search_failed: bool,
    /// Objective values at the initial point and after each accepted step.
    pub values: Vec<f64>,
}

const MIN_STEP: f64 = 1e-16;

/// Riemannian conjugate gradient descent (Polak-Ribiere+ with projection
/// transport, Armijo backtracking from unit step, periodic steepest-descent
/// restarts). The accepted-step objective sequence is monotone in the
/// requested sense.
pub fn cgd_solve(obj: &SmoothObjective, init: &DMatrix<f64>, opts: &CgdOptions) -> Result<CgdOutcome> {
    let sign = match obj.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let (n, q) = init.shape();
    if q > n {
        return Err(Error::DimensionMismatch(format!(
            "Stiefel point needs at least as many rows as columns, got {n}x{q}"
        )));
    }
    let restart = opts
        .restart_period
        .unwrap_or_else(|| (n * q - q * (q + 1) / 2).max(1));

    let phi = |u: &DMatrix<f64>| -> f64 { sign * (obj.value)(u) };
    let rgrad = |u: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let eg = (obj.euclidean_gradient)(u);
        tangent_project(u, &(eg * sign))
    };

    let mut u = init.clone();
    let mut fu = phi(&u);
    if !fu.is_finite() {
        return Err(Error::NonFinite("objective at initial point"));
    }
    let mut values = vec![sign * fu];
    let mut g = rgrad(&u)?;
    let mut gnorm2 = g.norm_squared();
    if gnorm2.sqrt() < opts.grad_tol {
        return Ok(CgdOutcome {
            point: u,
            value: sign * fu,
            iterations: 0,
            converged: true,
            line_search_failed: false,
            values,
        });
    }
    let mut d = -&g;

    for it in 1..=opts.max_iters {
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            d = -&g;
            slope = -gnorm2;
        }

        let mut t = 1.0;
        let mut accepted: Option<(DMatrix<f64>, f64)> = None;
        while t >= MIN_STEP {
            if let Ok(cand) = qr_retract(&u, &(&d * t)) {
                let fc = phi(&cand);
                if fc.is_finite() && fc <= fu + opts.armijo_c * t * slope {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= opts.step_shrink;
        }

        let (unew, fnew) = match accepted {
            Some(pair) => pair,
            None => {
                return Ok(CgdOutcome {
                    point: u,
                    value: sign * fu,
                    iterations: it - 1,
                    converged: false,
                    line_search_failed: true,
                    values,
                })
            }
        };

        let gnew = rgrad(&unew)?;
        let gnew_norm2 = gnew.norm_squared();
        values.push(sign * fnew);

        if gnew_norm2.sqrt() < opts.grad_tol {
            return Ok(CgdOutcome {
                point: unew,
                value: sign * fnew,
                iterations: it,
                converged: true,
                line_search_failed: false,
                values,
            });
        }

        let beta = if it % restart == 0 {
            0.0
        } else {
            let gprev_t = tangent_project(&unew, &g)?;
            ((gnew.dot(&gnew) - gnew.dot(&gprev_t)) / gnorm2).max(0.0)
        };
        let mut dnew = -&gnew;
        if beta > 0.0 {
            dnew += tangent_project(&unew, &d)? * beta;
            if dnew.dot(&gnew) >= 0.0 {
                dnew = -&gnew;
            }
        }

        u = unew;
        fu = fnew;
        g = gnew;
        gnorm2 = gnew_norm2;
        d = dnew;
    }

    Ok(CgdOutcome {
        point: u,
        value: sign * fu,
        iterations: opts.max_iters,
        converged: false,
        line_search_failed: false,
        values,
    })
}

/// Optimizes the weighted flag objective over the Stiefel manifold, starting
/// from `init`, and returns the resulting flag. With unit weights, level
/// masks and MAXIMIZE, the optimum spans the top eigenspaces of `X Xᵀ` level
/// by level; block masks leave the column order free.
pub fn solve_weighted_fpca(
    x: &DMatrix<f64>,
    w: &WeightStack,
    ftype: &FlagType,
    init: &FlagPoint,
    sense: Sense,
    masks: Masks,
    opts: &CgdOptions,
) -> Result<FlagPoint> {
    if init.ftype() != ftype {
        return Err(Error::TypeMismatch);
    }
    check_objective_args(init.rep(), x, w, ftype)?;
    let obj = SmoothObjective {
        value: Box::new(move |u: &DMatrix<f64>| {
            weighted_flag_objective(u, x, w, ftype, masks).expect("dimensions checked")
        }),
        euclidean_gradient: Box::new(move |u: &DMatrix<f64>| {
            weighted_flag_gradient(u, x, w, ftype, masks).expect("dimensions checked")
        }),
        sense,
    };
    let outcome = cgd_solve(&obj, init.rep(), opts)?;
    FlagPoint::new(outcome.point, ftype.clone())
}

/// Random block-diagonal orthogonal matrix for a flag type; rotating a
/// representative by it leaves the flag unchanged.
pub fn random_block_rotation<R: Rng>(ftype: &FlagType, rng: &mut R) -> DMatrix<f64> {
    let q = ftype.total_dim();
    let mut m = DMatrix::zeros(q, q);
    for r in ftype.block_ranges() {
        let s = r.len();
        let block = loop {
            let g = DMatrix::from_fn(s, s, |_, _| rng.sample::<f64, _>(StandardNormal));
            if let Ok(q) = thin_qr_positive(&g) {
                break q;
            }
        };
        m.view_mut((r.start, r.start), (s, s)).copy_from(&block);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flag::{orthonormality_defect, random_flag};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ft(dims: &[usize], n: usize) -> FlagType {
        FlagType::new(dims.to_vec(), n).unwrap()
    }

    fn col(vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(vals.len(), 1, vals)
    }

    #[test]
    fn tangent_projection_examples() {
        let u = col(&[1.0, 0.0]);
        let g = col(&[0.0, 3.0]);
        let t = tangent_project(&u, &g).unwrap();
        assert!((t - col(&[0.0, 3.0])).norm() < 1e-14);

        let radial = col(&[5.0, 0.0]);
        let t = tangent_project(&u, &radial).unwrap();
        assert!(t.norm() < 1e-14);

        // At U = I_2 the projection removes the symmetric part.
        let u = DMatrix::identity(2, 2);
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let t = tangent_project(&u, &g).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((t - expect).norm() < 1e-14);
    }

    #[test]
    fn tangent_projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let f = random_flag(&ft(&[3], 7), &mut rng);
            let u = f.rep().clone();
            let g = DMatrix::from_fn(7, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
            let t = tangent_project(&u, &g).unwrap();
            // UᵀT is skew.
            let utt = u.tr_mul(&t);
            assert!((&utt + utt.transpose()).norm() < 1e-12);
            // Idempotence.
            let tt = tangent_project(&u, &t).unwrap();
            assert!((&t - tt).norm() < 1e-12);
        }
    }

    #[test]
    fn retraction_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_flag(&ft(&[3], 6), &mut rng).rep().clone();
        let back = qr_retract(&u, &DMatrix::zeros(6, 3)).unwrap();
        assert!((&u - back).norm() < 1e-12);

        // Single column: retraction normalizes.
        let u = col(&[1.0, 0.0]);
        let d = col(&[0.0, 1.0]);
        let r = qr_retract(&u, &d).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r - col(&[s, s])).norm() < 1e-14);

        // Collapsing the columns is detected.
        let u = DMatrix::identity(3, 2);
        let d = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 0.0, 0.0]);
        assert!(matches!(qr_retract(&u, &d), Err(Error::RankCollapse)));
    }

    #[test]
    fn retraction_is_second_order_along_tangents() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let u = random_flag(&ft(&[3], 8), &mut rng).rep().clone();
        let raw = DMatrix::from_fn(8, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = tangent_project(&u, &raw).unwrap();
        for &scale in &[1e-2, 1e-3, 1e-4] {
            let step = &v * scale;
            let r = qr_retract(&u, &step).unwrap();
            assert!(orthonormality_defect(&r) < 1e-12);
            // ‖R(tv) - (U + tv)‖ = O(t²).
            let gap = (&r - (&u + &step)).norm();
            assert!(
                gap < 10.0 * scale * scale * v.norm_squared(),
                "gap {gap} at scale {scale}"
            );
        }
    }

    #[test]
    fn weight_stack_validation() {
        let w = WeightStack::unit(2, 3);
        assert_eq!(w.num_levels(), 2);
        assert_eq!(w.num_samples(), 3);

        assert!(WeightStack::new(vec![]).is_err());
        assert!(WeightStack::new(vec![
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![1.0]),
        ])
        .is_err());
        assert!(WeightStack::new(vec![DVector::from_vec(vec![-1.0])]).is_err());
        assert!(WeightStack::new(vec![DVector::from_vec(vec![f64::NAN])]).is_err());
    }

    #[test]
    fn objective_examples() {
        // Single direction e1, sample e1: projection norm 1. With one block
        // the two mask flavors coincide.
        let t = ft(&[1], 2);
        let u = DMatrix::identity(2, 1);
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let w = WeightStack::unit(1, 1);
        for m in [Masks::Levels, Masks::Blocks] {
            assert!((weighted_flag_objective(&u, &x, &w, &t, m).unwrap() - 1.0).abs() < 1e-14);
        }

        // Orthogonal sample scores zero.
        let x = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        assert!(weighted_flag_objective(&u, &x, &w, &t, Masks::Levels)
            .unwrap()
            .abs()
            < 1e-14);

        // Weight 2, sample at 45 degrees: 2·cos²(45°) = 1.
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = DMatrix::from_column_slice(2, 1, &[s, s]);
        let w = WeightStack::new(vec![DVector::from_vec(vec![2.0])]).unwrap();
        assert!(
            (weighted_flag_objective(&u, &x, &w, &t, Masks::Levels).unwrap() - 1.0).abs() < 1e-14
        );

        // Level masks double-count the first column, block masks do not:
        // levels give 1 + (1 + 1) = 3, blocks give 1 + 1 = 2.
        let t2 = ft(&[1, 2], 3);
        let u2 = DMatrix::identity(3, 2);
        let x2 = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let w2 = WeightStack::unit(2, 1);
        let lv = weighted_flag_objective(&u2, &x2, &w2, &t2, Masks::Levels).unwrap();
        assert!((lv - 3.0).abs() < 1e-14);
        let bl = weighted_flag_objective(&u2, &x2, &w2, &t2, Masks::Blocks).unwrap();
        assert!((bl - 2.0).abs() < 1e-14);
    }

    #[test]
    fn objective_trace_form_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = ft(&[1, 3], 5);
        let f = random_flag(&t, &mut rng);
        let x = DMatrix::from_fn(5, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = WeightStack::new(
            (0..2)
                .map(|_| DVector::from_fn(8, |_, _| rng.gen::<f64>() + 0.1))
                .collect(),
        )
        .unwrap();

        // Level masks: term i projects onto the first n_i columns.
        let fast = weighted_flag_objective(f.rep(), &x, &w, &t, Masks::Levels).unwrap();
        let mut direct = 0.0;
        for (i, r) in t.level_ranges().into_iter().enumerate() {
            let ui = f.rep().columns(0, r.len());
            for j in 0..8 {
                let proj = ui.tr_mul(&x.column(j).into_owned());
                direct += w.level(i)[j] * proj.norm_squared();
            }
        }
        assert!((fast - direct).abs() <= 1e-9 * direct.abs().max(1.0));

        // Block masks: term i projects onto block i's own columns.
        let fast = weighted_flag_objective(f.rep(), &x, &w, &t, Masks::Blocks).unwrap();
        let mut direct = 0.0;
        for (i, r) in t.block_ranges().into_iter().enumerate() {
            let ui = f.rep().columns(r.start, r.len());
            for j in 0..8 {
                let proj = ui.tr_mul(&x.column(j).into_owned());
                direct += w.level(i)[j] * proj.norm_squared();
            }
        }
        assert!((fast - direct).abs() <= 1e-9 * direct.abs().max(1.0));
    }

    #[test]
    fn objective_block_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let t = ft(&[2, 5, 7], 10);
        let f = random_flag(&t, &mut rng);
        let x = DMatrix::from_fn(10, 12, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = WeightStack::new(
            (0..3)
                .map(|_| DVector::from_fn(12, |_, _| rng.gen::<f64>() + 0.1))
                .collect(),
        )
        .unwrap();
        let m = random_block_rotation(&t, &mut rng);
        for masks in [Masks::Levels, Masks::Blocks] {
            let fa = weighted_flag_objective(f.rep(), &x, &w, &t, masks).unwrap();
            let fb = weighted_flag_objective(&(f.rep() * &m), &x, &w, &t, masks).unwrap();
            assert!((fa - fb).abs() <= 1e-9 * fa.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_examples_and_finite_differences() {
        // Single sample e1, U = e1, type (1;2), unit weight: grad = 2 e1.
        let t = ft(&[1], 2);
        let u = DMatrix::identity(2, 1);
        let x = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let w = WeightStack::unit(1, 1);
        let g = weighted_flag_gradient(&u, &x, &w, &t, Masks::Levels).unwrap();
        assert!((g - DMatrix::from_column_slice(2, 1, &[2.0, 0.0])).norm() < 1e-14);

        // Central finite differences on random instances, both mask flavors.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = ft(&[1, 3], 5);
        for masks in [Masks::Levels, Masks::Blocks] {
            for _ in 0..3 {
                let f = random_flag(&t, &mut rng);
                let x = DMatrix::from_fn(5, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
                let w = WeightStack::new(
                    (0..2)
                        .map(|_| DVector::from_fn(8, |_, _| rng.gen::<f64>() + 0.1))
                        .collect(),
                )
                .unwrap();
                let g = weighted_flag_gradient(f.rep(), &x, &w, &t, masks).unwrap();
                let h = 1e-6;
                let mut fd = DMatrix::zeros(5, 3);
                for i in 0..5 {
                    for j in 0..3 {
                        let mut up = f.rep().clone();
                        let mut dn = f.rep().clone();
                        up[(i, j)] += h;
                        dn[(i, j)] -= h;
                        fd[(i, j)] = (weighted_flag_objective(&up, &x, &w, &t, masks).unwrap()
                            - weighted_flag_objective(&dn, &x, &w, &t, masks).unwrap())
                            / (2.0 * h);
                    }
                }
                let rel = (&g - &fd).norm() / g.norm().max(1.0);
                assert!(rel < 1e-5, "finite-difference mismatch {rel}");
            }
        }
    }

    #[test]
    fn procrustes_examples() {
        let (z, v) = procrustes_maximize(&DMatrix::identity(2, 2)).unwrap();
        assert!((z - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((v - 2.0).abs() < 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -2.0]);
        let (z, v) = procrustes_maximize(&a).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!((z - expect).norm() < 1e-12);
        assert!((v - 5.0).abs() < 1e-12);

        let a = DMatrix::from_row_slice(1, 2, &[0.0, 4.0]);
        let (z, v) = procrustes_maximize(&a).unwrap();
        assert!((z - DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).norm() < 1e-12);
        assert!((v - 4.0).abs() < 1e-12);

        let bad = DMatrix::from_row_slice(1, 2, &[f64::NAN, 0.0]);
        assert!(matches!(procrustes_maximize(&bad), Err(Error::NonFinite(_))));
    }

    #[test]
    fn procrustes_attains_the_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = DMatrix::from_fn(3, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
        let (z, v) = procrustes_maximize(&a).unwrap();
        assert!(orthonormality_defect(&z) < 1e-12);
        assert!(((&a * &z).trace() - v).abs() < 1e-10);
        for _ in 0..50 {
            let other = random_flag(&ft(&[3], 6), &mut rng);
            let val = (&a * other.rep()).trace();
            assert!(val <= v + 1e-10);
        }
    }

    fn trace_objective(m: DMatrix<f64>, sense: Sense) -> SmoothObjective<'static> {
        let m2 = m.clone();
        SmoothObjective {
            value: Box::new(move |u| (u.tr_mul(&(&m * u))).trace()),
            euclidean_gradient: Box::new(move |u| &m2 * u * 2.0),
            sense,
        }
    }

    #[test]
    fn cgd_finds_top_eigenvector() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.25]));
        let obj = trace_objective(m, Sense::Maximize);
        // Generic start near e3.
        let init = {
            let v = DVector::from_vec(vec![0.02, 0.01, 1.0]).normalize();
            DMatrix::from_column_slice(3, 1, v.as_slice())
        };
        let out = cgd_solve(&obj, &init, &CgdOptions::default()).unwrap();
        assert!((out.value - 4.0).abs() < 1e-6, "value {}", out.value);
        assert!(out.point[(0, 0)].abs() > 1.0 - 1e-6);

        // Accepted-step values are monotone for a maximization.
        for w in out.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn cgd_stays_at_critical_points() {
        // e3 is an exact eigenvector, hence a stationary point: the
        // Riemannian gradient vanishes identically and the solver returns
        // the initial point untouched.
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.25]));
        let obj = trace_objective(m, Sense::Maximize);
        let init = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 1.0]);
        let out = cgd_solve(&obj, &init, &CgdOptions::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
        assert!((out.value - 0.25).abs() < 1e-12);

        // Starting at the optimum also terminates immediately.
        let init = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let out = cgd_solve(&obj, &init, &CgdOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!((out.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn cgd_minimizes_too() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.25]));
        let obj = trace_objective(m, Sense::Minimize);
        let init = {
            let v = DVector::from_vec(vec![1.0, 0.3, 0.2]).normalize();
            DMatrix::from_column_slice(3, 1, v.as_slice())
        };
        let out = cgd_solve(&obj, &init, &CgdOptions::default()).unwrap();
        assert!((out.value - 0.25).abs() < 1e-6);
        assert!(out.point[(2, 0)].abs() > 1.0 - 1e-6);
        for w in out.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(orthonormality_defect(&out.point) < 1e-9);
    }

    fn diag_data(entries: &[f64]) -> DMatrix<f64> {
        // Data whose X·Xᵀ is diag(entries²).
        DMatrix::from_diagonal(&DVector::from_vec(entries.to_vec()))
    }

    #[test]
    fn weighted_fpca_recovers_extreme_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let t = ft(&[1], 2);
        let x = diag_data(&[2.0, 1.0]); // X·Xᵀ = diag(4, 1)
        let w = WeightStack::unit(1, 2);
        let init = random_flag(&t, &mut rng);
        let top = solve_weighted_fpca(
            &x,
            &w,
            &t,
            &init,
            Sense::Maximize,
            Masks::Levels,
            &CgdOptions::default(),
        )
        .unwrap();
        assert!(top.rep()[(0, 0)].abs() > 1.0 - 1e-6);

        let bottom = solve_weighted_fpca(
            &x,
            &w,
            &t,
            &init,
            Sense::Minimize,
            Masks::Levels,
            &CgdOptions::default(),
        )
        .unwrap();
        assert!(bottom.rep()[(1, 0)].abs() > 1.0 - 1e-6);
    }

    #[test]
    fn weighted_fpca_handles_degenerate_eigenvalues() {
        // X·Xᵀ = diag(4, 4, 1): any basis of the e1-e2 plane maximizes, and
        // the flag does not prefer one basis over another.
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let t = ft(&[2], 3);
        let x = diag_data(&[2.0, 2.0, 1.0]);
        let w = WeightStack::unit(1, 3);
        let init = random_flag(&t, &mut rng);
        let f = solve_weighted_fpca(
            &x,
            &w,
            &t,
            &init,
            Sense::Maximize,
            Masks::Levels,
            &CgdOptions::default(),
        )
        .unwrap();
        // e3-component of the span is gone.
        let e3_in_span = f.rep().row(2).norm();
        assert!(e3_in_span < 1e-6, "leakage {e3_in_span}");
    }

    #[test]
    fn unit_weight_fpca_orders_levels_by_eigenvalue() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let t = ft(&[1, 2], 4);
        let x = diag_data(&[3.0, 2.0, 1.0, 0.5]);
        let w = WeightStack::unit(2, 4);
        let opts = CgdOptions {
            max_iters: 2000,
            ..CgdOptions::default()
        };
        let init = random_flag(&t, &mut rng);
        let f =
            solve_weighted_fpca(&x, &w, &t, &init, Sense::Maximize, Masks::Levels, &opts).unwrap();
        // Level 1 is the top eigenvector, level 2 the top-2 eigenplane.
        assert!(f.rep()[(0, 0)].abs() > 1.0 - 1e-5, "{:?}", f.rep());
        let top2 = f.rep().columns(0, 2).rows(2, 2).norm();
        assert!(top2 < 1e-5);
    }
}
