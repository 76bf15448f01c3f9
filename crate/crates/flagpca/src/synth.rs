//! Seeded generators for the synthetic datasets used across the test
//! suites and the command line: uniform cubes, sphere and Grassmann
//! inlier/outlier mixtures, the three-cluster flag dataset, and planar
//! pre-shape contours with outliers.
//!
//! All randomness flows through a ChaCha stream seeded by the caller, so
//! every generator is bit-reproducible.

use crate::error::{Error, Result};
use crate::flag::thin_qr_positive;
use crate::manifolds::{exp_map, ManifoldKind, ManifoldPoint, TangentVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// Points with binary outlier labels (1 = outlier) and the seed that
/// produced them.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub points: Vec<ManifoldPoint>,
    pub labels: Vec<i64>,
    pub kind: ManifoldKind,
    pub seed: u64,
}

/// `p` samples in `R^n` with i.i.d. entries uniform on [0,1), one sample
/// per column. Not centered; Euclidean callers subtract their own center.
pub fn gen_uniform_cube(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, p, |_, _| rng.gen::<f64>())
}

fn unit_gaussian_tangent<R: Rng>(base: &ManifoldPoint, rng: &mut R) -> TangentVector {
    let (r, c) = base.coords().shape();
    loop {
        let g = DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal));
        let t = TangentVector::project(base, &g);
        let n = t.norm();
        if n > 1e-9 {
            return TangentVector::project(base, &(t.coords() / n));
        }
    }
}

fn random_sphere_point<R: Rng>(dim: usize, rng: &mut R) -> ManifoldPoint {
    loop {
        let g = DMatrix::from_fn(dim + 1, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = g.norm();
        if n > 1e-9 {
            return ManifoldPoint::new(ManifoldKind::Sphere(dim), g / n)
                .expect("normalized vector is on the sphere");
        }
    }
}

fn random_grassmann_point<R: Rng>(k: usize, n: usize, rng: &mut R) -> ManifoldPoint {
    loop {
        let g = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        if let Ok(q) = thin_qr_positive(&g) {
            return ManifoldPoint::new(ManifoldKind::Grassmann(k, n), q)
                .expect("QR output is orthonormal");
        }
    }
}

/// 100 inliers and 20 outliers on S⁴ around a random center. Inlier tangent
/// entries are U[0,0.01); outliers widen the last three entries to U[0,0.1),
/// so they wander an order of magnitude further along those axes.
pub fn gen_sphere4(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ManifoldKind::Sphere(4);
    let center = random_sphere_point(4, &mut rng);
    let mut points = Vec::with_capacity(120);
    let mut labels = Vec::with_capacity(120);
    let push = |scales: [f64; 5], label: i64, rng: &mut ChaCha8Rng, points: &mut Vec<_>, labels: &mut Vec<_>| {
        let raw = DMatrix::from_fn(5, 1, |i, _| rng.gen::<f64>() * scales[i]);
        let v = TangentVector::project(&center, &raw);
        points.push(exp_map(&center, &v).expect("short tangent stays on the sphere"));
        labels.push(label);
    };
    for _ in 0..100 {
        push([0.01; 5], 0, &mut rng, &mut points, &mut labels);
    }
    for _ in 0..20 {
        push([0.01, 0.01, 0.1, 0.1, 0.1], 1, &mut rng, &mut points, &mut labels);
    }
    LabeledDataset {
        points,
        labels,
        kind,
        seed,
    }
}

/// Inliers spread along two fixed unit tangents at a random plane in
/// Gr(2,4) with radii U[0,1); outliers sit within radius 0.1 of a second,
/// unrelated random plane.
pub fn gen_grassmann24(n_in: usize, n_out: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = ManifoldKind::Grassmann(2, 4);
    let center_in = random_grassmann_point(2, 4, &mut rng);
    let center_out = random_grassmann_point(2, 4, &mut rng);
    let dirs = [
        unit_gaussian_tangent(&center_in, &mut rng),
        unit_gaussian_tangent(&center_in, &mut rng),
    ];
    let mut points = Vec::with_capacity(n_in + n_out);
    let mut labels = Vec::with_capacity(n_in + n_out);
    for _ in 0..n_in {
        let a = rng.gen::<f64>();
        let which = rng.gen_range(0..2usize);
        let v = TangentVector::project(&center_in, &(dirs[which].coords() * a));
        points.push(exp_map(&center_in, &v).expect("radius below injectivity"));
        labels.push(0);
    }
    for _ in 0..n_out {
        let v = unit_gaussian_tangent(&center_out, &mut rng);
        let b = rng.gen::<f64>() * 0.1;
        let v = TangentVector::project(&center_out, &(v.coords() * b));
        points.push(exp_map(&center_out, &v).expect("radius below injectivity"));
        labels.push(1);
    }
    LabeledDataset {
        points,
        labels,
        kind,
        seed,
    }
}

/// Three clusters of 100 samples in R^10, each energetic on its own
/// coordinate block (1–2, 3–5, 6–7, one-based) and small elsewhere.
/// Returned raw, in cluster order, with labels 1/2/3; not centered.
pub fn gen_clusters(seed: u64) -> (DMatrix<f64>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: [std::ops::Range<usize>; 3] = [0..2, 2..5, 5..7];
    let mut data = DMatrix::zeros(10, 300);
    let mut labels = Vec::with_capacity(300);
    for (c, block) in blocks.iter().enumerate() {
        for j in 0..100 {
            let col = c * 100 + j;
            for i in 0..10 {
                let scale = if block.contains(&i) { 1.0 } else { 0.1 };
                data[(i, col)] = rng.gen::<f64>() * scale;
            }
            labels.push(c as i64 + 1);
        }
    }
    (data, labels)
}

/// The two planar pre-shape families: open ellipses with random axes and
/// centers, and all-Gaussian "hairballs".
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeKind {
    Ellipse,
    Hairball,
}

/// Fraction of the full turn an ellipse contour covers; the rest is the
/// hole that makes the shape an open curve.
const ELLIPSE_SWEEP: f64 = 0.932;

const MAX_SHAPE_ATTEMPTS: usize = 100;

pub(crate) fn raw_hairball<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let normal = Normal::new(0.0, 10.0).expect("fixed parameters");
    DMatrix::from_fn(m, 2, |_, _| normal.sample(rng))
}

fn center_and_normalize(mut raw: DMatrix<f64>) -> Option<DMatrix<f64>> {
    for mut c in raw.column_iter_mut() {
        let mean = c.mean();
        c.add_scalar_mut(-mean);
    }
    let n = raw.norm();
    if n <= 1e-12 {
        return None;
    }
    Some(raw / n)
}

/// `count` pre-shapes of `m` landmarks. Ellipse axes come from N(0.4, 0.5)
/// and are resampled while nonpositive (up to 100 attempts per shape);
/// centers from N(0, 0.1); the contour sweeps 93.2% of the turn from a
/// random start angle. Hairballs are N(0, 10) noise. Every shape is
/// centered and scaled to unit Frobenius norm.
pub fn gen_preshape_outliers(
    kind: ShapeKind,
    count: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<ManifoldPoint>> {
    if m < 3 {
        return Err(Error::BadDims(format!("need at least 3 landmarks, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = Normal::new(0.4, 0.5).expect("fixed parameters");
    let center = Normal::new(0.0, 0.1).expect("fixed parameters");
    let manifold = ManifoldKind::Preshape2(m);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut produced = None;
        for _ in 0..MAX_SHAPE_ATTEMPTS {
            let raw = match kind {
                ShapeKind::Ellipse => {
                    let a = axis.sample(&mut rng);
                    let b = axis.sample(&mut rng);
                    if a <= 0.0 || b <= 0.0 {
                        continue;
                    }
                    let (cx, cy) = (center.sample(&mut rng), center.sample(&mut rng));
                    let start = rng.gen::<f64>() * std::f64::consts::TAU;
                    let span = ELLIPSE_SWEEP * std::f64::consts::TAU;
                    DMatrix::from_fn(m, 2, |i, j| {
                        let t = start + span * i as f64 / (m - 1) as f64;
                        if j == 0 {
                            cx + a * t.cos()
                        } else {
                            cy + b * t.sin()
                        }
                    })
                }
                ShapeKind::Hairball => raw_hairball(m, &mut rng),
            };
            if let Some(coords) = center_and_normalize(raw) {
                produced = Some(
                    ManifoldPoint::new(manifold, coords)
                        .expect("centered unit-norm configuration is a pre-shape"),
                );
                break;
            }
        }
        match produced {
            Some(p) => out.push(p),
            None => return Err(Error::DegenerateShape(MAX_SHAPE_ATTEMPTS)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifolds::dist;

    #[test]
    fn uniform_cube_basics() {
        let x = gen_uniform_cube(100, 5, 42);
        assert_eq!(x.shape(), (5, 100));
        assert!(x.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(x, gen_uniform_cube(100, 5, 42));
        assert_ne!(x, gen_uniform_cube(100, 5, 43));

        let single = gen_uniform_cube(1, 1, 7);
        assert_eq!(single.shape(), (1, 1));
        assert!((0.0..1.0).contains(&single[(0, 0)]));
    }

    #[test]
    fn sphere4_mixture() {
        let ds = gen_sphere4(11);
        assert_eq!(ds.points.len(), 120);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 100);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 20);
        assert_eq!(ds.kind, ManifoldKind::Sphere(4));
        for p in &ds.points {
            assert!((p.coords().norm() - 1.0).abs() <= 1e-10);
        }
        // Inliers stay inside the tangent-norm bound of a U[0,0.01)^5 draw.
        let bound = 0.02 * 5.0_f64.sqrt();
        let center_free = &ds.points[0];
        for (p, &l) in ds.points.iter().zip(&ds.labels) {
            if l == 0 {
                // Distances measured between inliers are at most twice the
                // radius bound around the hidden center.
                assert!(dist(p, center_free).unwrap() <= 2.0 * bound);
            }
        }
        let again = gen_sphere4(11);
        for (a, b) in ds.points.iter().zip(&again.points) {
            assert_eq!(a.coords(), b.coords());
        }
    }

    #[test]
    fn grassmann24_mixture() {
        let ds = gen_grassmann24(100, 20, 5);
        assert_eq!(ds.points.len(), 120);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 20);
        for p in &ds.points {
            let gram = p.coords().tr_mul(p.coords());
            assert!((gram - DMatrix::identity(2, 2)).abs().max() <= 1e-10);
        }

        // Outliers huddle within tangent radius 0.1 of their own center,
        // so pairwise outlier distances stay below 0.2; inlier radii reach
        // 1.0, so the loose pairwise bound is 2.0.
        let first_out = ds
            .points
            .iter()
            .zip(&ds.labels)
            .find(|(_, &l)| l == 1)
            .unwrap()
            .0;
        for (p, &l) in ds.points.iter().zip(&ds.labels) {
            if l == 1 {
                assert!(dist(p, first_out).unwrap() <= 0.2 + 1e-9);
            }
        }

        let empty = gen_grassmann24(0, 0, 5);
        assert!(empty.points.is_empty() && empty.labels.is_empty());
    }

    #[test]
    fn cluster_blocks() {
        let (x, labels) = gen_clusters(3);
        assert_eq!(x.shape(), (10, 300));
        assert_eq!(labels.len(), 300);
        for c in 1..=3i64 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 100);
        }
        // Cluster 1 occupies coordinates 1-2; everything else is small.
        for j in 0..100 {
            for i in 2..10 {
                assert!(x[(i, j)] < 0.1);
            }
        }
        // Cluster 3's active coordinates average near the U[0,1) mean.
        for i in [5, 6] {
            let mean: f64 = (200..300).map(|j| x[(i, j)]).sum::<f64>() / 100.0;
            assert!((mean - 0.5).abs() <= 0.1, "coord {i} mean {mean}");
        }
        assert_eq!(gen_clusters(3).0, x);
    }

    #[test]
    fn preshape_families() {
        let ellipses = gen_preshape_outliers(ShapeKind::Ellipse, 10, 56, 9).unwrap();
        assert_eq!(ellipses.len(), 10);
        for p in &ellipses {
            assert_eq!(p.coords().nrows(), 56);
            assert!((p.coords().norm() - 1.0).abs() <= 1e-10);
            for c in p.coords().column_iter() {
                assert!(c.sum().abs() <= 1e-10);
            }
        }
        let again = gen_preshape_outliers(ShapeKind::Ellipse, 10, 56, 9).unwrap();
        for (a, b) in ellipses.iter().zip(&again) {
            assert_eq!(a.coords(), b.coords());
        }

        let balls = gen_preshape_outliers(ShapeKind::Hairball, 5, 56, 13).unwrap();
        for p in &balls {
            assert!((p.coords().norm() - 1.0).abs() <= 1e-10);
        }

        assert!(gen_preshape_outliers(ShapeKind::Ellipse, 1, 2, 1).is_err());
    }

    #[test]
    fn hairball_noise_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let raw = raw_hairball(56, &mut rng);
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let var = raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / raw.len() as f64;
        assert!((var - 100.0).abs() <= 20.0, "variance {var}");
    }

    #[test]
    fn ellipse_landmarks_trace_the_contour() {
        // With the hole, first and last landmarks must not coincide: the
        // sweep stops 6.8% short of closing.
        let shapes = gen_preshape_outliers(ShapeKind::Ellipse, 5, 56, 17).unwrap();
        for p in shapes {
            let first = p.coords().row(0);
            let last = p.coords().row(55);
            assert!((first - last).norm() > 1e-4);
        }
    }
}
