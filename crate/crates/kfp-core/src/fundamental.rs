//! Ground-truth kernels for the constant-coefficient prototype operator
//! `d/dt + v.grad_x - sigma^2 lap_v`: the closed-form fundamental solution
//! and an exact-sampling Langevin Monte-Carlo simulator, plus a product
//! Gaussian kernel density estimator bridging the two.
//!
//! Per direction, the displacement pair (V_s - v0, X_s - x0 - s v0) of the
//! integrated Brownian system V = v0 + W, X = x0 + int V is centered Gaussian
//! with covariance
//!
//! ```text
//! Var(V)    = 2 sigma^2 s
//! Cov(V, X) =   sigma^2 s^2
//! Var(X)    = (2/3) sigma^2 s^3
//! ```
//!
//! The default sigma^2 = 1/2 matches the solver benchmark A = I/2.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::group::GroupPoint;

/// Covariance data of the kernel for one elapsed time s > 0.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GaussianKernelParams {
    pub s: f64,
    pub sigma2: f64,
    pub n: usize,
}

impl GaussianKernelParams {
    pub fn new(s: f64, sigma2: f64, n: usize) -> Result<Self> {
        if !(s > 0.0) {
            return Err(CoreError::Validation(format!(
                "elapsed time must be positive, got {s}"
            )));
        }
        if !(sigma2 > 0.0) {
            return Err(CoreError::Validation(format!(
                "sigma2 must be positive, got {sigma2}"
            )));
        }
        Ok(Self { s, sigma2, n })
    }

    pub fn var_v(&self) -> f64 {
        2.0 * self.sigma2 * self.s
    }

    pub fn cov_vx(&self) -> f64 {
        self.sigma2 * self.s * self.s
    }

    pub fn var_x(&self) -> f64 {
        2.0 / 3.0 * self.sigma2 * self.s.powi(3)
    }

    /// Determinant of the per-direction 2x2 covariance block; positive for
    /// every s > 0.
    pub fn det(&self) -> f64 {
        self.var_v() * self.var_x() - self.cov_vx() * self.cov_vx()
    }

    /// Lower-triangular Cholesky factor of the per-direction block.
    fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.var_v().sqrt();
        let l21 = self.cov_vx() / l11;
        let l22 = (self.var_x() - l21 * l21).sqrt();
        (l11, l21, l22)
    }
}

/// Fundamental solution of the prototype operator, evaluated at z with pole
/// z0; requires t > t0.
///
/// The value is the product over directions of the bivariate Gaussian density
/// of (v_j - v0_j, x_j - x0_j - s v0_j) with the covariance of
/// [`GaussianKernelParams`], s = t - t0.
pub fn gamma_l0(z: &GroupPoint, z0: &GroupPoint, sigma2: f64) -> Result<f64> {
    if z.n() != z0.n() {
        return Err(CoreError::DimensionMismatch {
            left: z.n(),
            right: z0.n(),
        });
    }
    let s = z.t() - z0.t();
    if !(s > 0.0) {
        return Err(CoreError::TimeDirection {
            t0: z0.t(),
            t1: z.t(),
        });
    }
    let p = GaussianKernelParams::new(s, sigma2, z.n())?;
    let det = p.det();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let (vv, vx, xx) = (p.var_v(), p.cov_vx(), p.var_x());
    let mut value = 1.0;
    for j in 0..z.n() {
        let dv = z.v()[j] - z0.v()[j];
        let dx = z.x()[j] - z0.x()[j] - s * z0.v()[j];
        let q = (xx * dv * dv - 2.0 * vx * dv * dx + vv * dx * dx) / det;
        value *= norm * (-0.5 * q).exp();
    }
    Ok(value)
}

/// Joint samples of (V_s, X_s) for all directions, flattened per path.
#[derive(Debug, Clone, Serialize)]
pub struct McSamples {
    pub n: usize,
    pub s: f64,
    pub sigma2: f64,
    pub seed: u64,
    /// Velocity samples, row-major: paths x n.
    pub v: Vec<f64>,
    /// Position samples, row-major: paths x n.
    pub x: Vec<f64>,
}

impl McSamples {
    pub fn paths(&self) -> usize {
        self.v.len() / self.n
    }

    pub fn v_of(&self, path: usize) -> &[f64] {
        &self.v[path * self.n..(path + 1) * self.n]
    }

    pub fn x_of(&self, path: usize) -> &[f64] {
        &self.x[path * self.n..(path + 1) * self.n]
    }
}

/// Exact joint sampling of the integrated Brownian pair at elapsed time s.
///
/// No time-stepping is involved: (W_s, int_0^s W) is jointly Gaussian with
/// known covariance, so each (path, direction) consumes exactly two normal
/// draws from its own counter-derived stream. Identical seeds give
/// bit-identical samples regardless of thread count.
pub fn langevin_mc(
    z0: &GroupPoint,
    s: f64,
    paths: usize,
    seed: u64,
    sigma2: f64,
) -> Result<McSamples> {
    if paths == 0 {
        return Err(CoreError::Validation("need at least one path".into()));
    }
    let n = z0.n();
    let p = GaussianKernelParams::new(s, sigma2, n)?;
    let (l11, l21, l22) = p.cholesky();

    let mut v = vec![0.0; paths * n];
    let mut x = vec![0.0; paths * n];
    v.par_chunks_mut(n)
        .zip(x.par_chunks_mut(n))
        .enumerate()
        .for_each(|(path, (vrow, xrow))| {
            for j in 0..n {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream((path as u64) * n as u64 + j as u64);
                let g1: f64 = StandardNormal.sample(&mut rng);
                let g2: f64 = StandardNormal.sample(&mut rng);
                vrow[j] = z0.v()[j] + l11 * g1;
                xrow[j] = z0.x()[j] + s * z0.v()[j] + l21 * g1 + l22 * g2;
            }
        });
    Ok(McSamples {
        n,
        s,
        sigma2,
        seed,
        v,
        x,
    })
}

/// Product-Gaussian kernel density estimate with its standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KdeEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// KDE of the sample cloud at the phase point (v, x); `bandwidth` lists the
/// per-direction widths `[bw_v..., bw_x...]` (length 2n, all positive).
/// Requires at least 10^3 samples.
pub fn density_estimate(
    samples: &McSamples,
    v: &[f64],
    x: &[f64],
    bandwidth: &[f64],
) -> Result<f64> {
    Ok(density_estimate_detailed(samples, v, x, bandwidth)?.value)
}

/// Same as [`density_estimate`] but also reports the Monte-Carlo standard
/// error of the estimate (sample standard deviation of the kernel weights
/// over sqrt(paths)).
pub fn density_estimate_detailed(
    samples: &McSamples,
    v: &[f64],
    x: &[f64],
    bandwidth: &[f64],
) -> Result<KdeEstimate> {
    let n = samples.n;
    let paths = samples.paths();
    if paths < 1000 {
        return Err(CoreError::Statistics {
            got: paths,
            need: 1000,
        });
    }
    if v.len() != n || x.len() != n || bandwidth.len() != 2 * n {
        return Err(CoreError::Validation(
            "evaluation point and bandwidth must match the sample dimension".into(),
        ));
    }
    if bandwidth.iter().any(|&b| !(b > 0.0)) {
        return Err(CoreError::Validation("bandwidths must be positive".into()));
    }
    let norm: f64 = bandwidth
        .iter()
        .map(|b| 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * b))
        .product();
    let weights: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let vs = samples.v_of(p);
            let xs = samples.x_of(p);
            let mut q = 0.0;
            for j in 0..n {
                let dv = (v[j] - vs[j]) / bandwidth[j];
                let dx = (x[j] - xs[j]) / bandwidth[n + j];
                q += dv * dv + dx * dx;
            }
            norm * (-0.5 * q).exp()
        })
        .collect();
    let mean = weights.iter().sum::<f64>() / paths as f64;
    let var = weights
        .iter()
        .map(|w| (w - mean) * (w - mean))
        .sum::<f64>()
        / (paths as f64 - 1.0);
    Ok(KdeEstimate {
        value: mean,
        std_error: (var / paths as f64).sqrt(),
    })
}

/// Reference bandwidths `factor * sd_dim * paths^(-1/6)` per dimension
/// (`[v..., x...]`), the scaling under which the KDE bias stays below its
/// standard error at the sample sizes used here.
pub fn reference_bandwidth(samples: &McSamples, factor: f64) -> Vec<f64> {
    let paths = samples.paths() as f64;
    let rate = paths.powf(-1.0 / 6.0);
    let sd = |data: &[f64], j: usize| -> f64 {
        let m = (0..samples.paths())
            .map(|p| data[p * samples.n + j])
            .sum::<f64>()
            / paths;
        let var = (0..samples.paths())
            .map(|p| {
                let d = data[p * samples.n + j] - m;
                d * d
            })
            .sum::<f64>()
            / (paths - 1.0);
        var.sqrt()
    };
    let mut bw = Vec::with_capacity(2 * samples.n);
    for j in 0..samples.n {
        bw.push(factor * sd(&samples.v, j) * rate);
    }
    for j in 0..samples.n {
        bw.push(factor * sd(&samples.x, j) * rate);
    }
    bw
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::{compose, dilate, inverse};
    use crate::quad::gauss_legendre_on;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    const SQRT3_OVER_PI: f64 = 0.551_328_895_421_792_1;

    #[test]
    fn gamma_peak_value() {
        let z = GroupPoint::scalar(0.0, 0.0, 1.0);
        let z0 = GroupPoint::identity(1);
        let g = gamma_l0(&z, &z0, 0.5).unwrap();
        assert!((g - SQRT3_OVER_PI).abs() <= 1e-12, "gamma = {g}");
    }

    #[test]
    fn gamma_needs_forward_time() {
        let z = GroupPoint::scalar(0.0, 0.0, -1.0);
        let z0 = GroupPoint::identity(1);
        assert!(matches!(
            gamma_l0(&z, &z0, 0.5),
            Err(CoreError::TimeDirection { .. })
        ));
    }

    #[test]
    fn gamma_translation_covariance() {
        // Gamma(z; z0) = Gamma(z0^{-1} o z; origin).
        let mut rng = StdRng::seed_from_u64(41);
        let origin = GroupPoint::identity(1);
        for _ in 0..200 {
            let z0 = GroupPoint::scalar(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let z = GroupPoint::scalar(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                z0.t() + rng.gen_range(0.1..2.0),
            );
            let direct = gamma_l0(&z, &z0, 0.5).unwrap();
            let moved = compose(&inverse(&z0), &z).unwrap();
            let via_origin = gamma_l0(&moved, &origin, 0.5).unwrap();
            assert!((direct - via_origin).abs() <= 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn gamma_dilation_covariance() {
        // Gamma(d_r z; 0) * r^(4n) = Gamma(z; 0).
        let mut rng = StdRng::seed_from_u64(43);
        let origin = GroupPoint::identity(1);
        for _ in 0..200 {
            let z = GroupPoint::scalar(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.1..2.0),
            );
            let r = rng.gen_range(0.5..2.0);
            let zd = dilate(r, &z).unwrap();
            let lhs = gamma_l0(&zd, &origin, 0.5).unwrap() * r.powi(4);
            let rhs = gamma_l0(&z, &origin, 0.5).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
        }
        // n = 2 scales with r^8.
        let origin2 = GroupPoint::identity(2);
        let z = GroupPoint::new(vec![0.3, -0.2], vec![0.1, 0.4], 1.0).unwrap();
        let zd = dilate(1.3, &z).unwrap();
        let lhs = gamma_l0(&zd, &origin2, 0.5).unwrap() * 1.3f64.powi(8);
        let rhs = gamma_l0(&z, &origin2, 0.5).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * rhs);
    }

    #[test]
    fn gamma_normalizes_to_one() {
        // Tensor Gauss-Legendre over +-8 marginal sd captures the mass.
        let z0 = GroupPoint::scalar(0.2, -0.1, 0.3);
        let s = 0.7;
        let p = GaussianKernelParams::new(s, 0.5, 1).unwrap();
        let sdv = p.var_v().sqrt();
        let sdx = p.var_x().sqrt();
        let center_x = z0.x()[0] + s * z0.v()[0];
        let (vs, wv) = gauss_legendre_on(64, z0.v()[0] - 8.0 * sdv, z0.v()[0] + 8.0 * sdv);
        let (xs, wx) = gauss_legendre_on(64, center_x - 8.0 * sdx, center_x + 8.0 * sdx);
        let mut mass = 0.0;
        for (v, wv) in vs.iter().zip(&wv) {
            for (x, wx) in xs.iter().zip(&wx) {
                let z = GroupPoint::scalar(*v, *x, z0.t() + s);
                mass += wv * wx * gamma_l0(&z, &z0, 0.5).unwrap();
            }
        }
        assert!((mass - 1.0).abs() <= 1e-8, "mass = {mass}");
    }

    #[test]
    fn gamma_chapman_kolmogorov() {
        // int Gamma(z; w) Gamma(w; z0) dw = Gamma(z; z0), quadrature on n = 1.
        let z0 = GroupPoint::identity(1);
        let z = GroupPoint::scalar(0.4, -0.3, 1.0);
        let t_mid = 0.4;
        let p1 = GaussianKernelParams::new(t_mid, 0.5, 1).unwrap();
        let sdv = p1.var_v().sqrt();
        let sdx = p1.var_x().sqrt();
        let (vs, wv) = gauss_legendre_on(96, -8.0 * sdv, 8.0 * sdv);
        let (xs, wx) = gauss_legendre_on(96, -8.0 * sdx, 8.0 * sdx);
        let mut conv = 0.0;
        for (v, wv) in vs.iter().zip(&wv) {
            for (x, wx) in xs.iter().zip(&wx) {
                let w = GroupPoint::scalar(*v, *x, t_mid);
                conv += wv
                    * wx
                    * gamma_l0(&z, &w, 0.5).unwrap()
                    * gamma_l0(&w, &z0, 0.5).unwrap();
            }
        }
        let direct = gamma_l0(&z, &z0, 0.5).unwrap();
        assert!(
            (conv - direct).abs() <= 1e-4,
            "semigroup defect {}",
            (conv - direct).abs()
        );
    }

    #[test]
    fn gamma_solves_the_pde_to_second_order() {
        // Centered differences of d_t Gamma + v d_x Gamma - sigma^2 lap_v Gamma
        // must shrink by ~4x when h halves.
        let z0 = GroupPoint::identity(1);
        let residual = |z: &GroupPoint, h: f64| -> f64 {
            let g = |v: f64, x: f64, t: f64| {
                gamma_l0(&GroupPoint::scalar(v, x, t), &z0, 0.5).unwrap()
            };
            let (v, x, t) = (z.v()[0], z.x()[0], z.t());
            let dt = (g(v, x, t + h) - g(v, x, t - h)) / (2.0 * h);
            let dx = (g(v, x + h, t) - g(v, x - h, t)) / (2.0 * h);
            let dvv = (g(v + h, x, t) - 2.0 * g(v, x, t) + g(v - h, x, t)) / (h * h);
            dt + v * dx - 0.5 * dvv
        };
        let mut rng = StdRng::seed_from_u64(47);
        let mut ratios = Vec::new();
        for _ in 0..100 {
            let z = GroupPoint::scalar(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.5..2.0),
            );
            let r1 = residual(&z, 1e-2).abs();
            let r2 = residual(&z, 5e-3).abs();
            if r1 > 1e-10 {
                ratios.push(r1 / r2);
            }
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = ratios[ratios.len() / 2];
        assert!(
            median > 3.0 && median < 5.0,
            "median decay ratio {median} not second order"
        );
    }

    #[test]
    fn mc_mean_matches_drift() {
        let z0 = GroupPoint::scalar(0.5, -0.2, 0.0);
        let s = 0.8;
        let paths = 200_000;
        let samples = langevin_mc(&z0, s, paths, 7, 0.5).unwrap();
        let mean_x = samples.x.iter().sum::<f64>() / paths as f64;
        let expected = z0.x()[0] + s * z0.v()[0];
        let se = (GaussianKernelParams::new(s, 0.5, 1).unwrap().var_x() / paths as f64).sqrt();
        assert!(
            (mean_x - expected).abs() <= 4.0 * se,
            "mean {mean_x} vs {expected} (se {se})"
        );
    }

    #[test]
    fn mc_covariance_matches_formula() {
        let z0 = GroupPoint::identity(1);
        let s = 1.3;
        let paths = 1_000_000;
        let samples = langevin_mc(&z0, s, paths, 11, 0.5).unwrap();
        let p = GaussianKernelParams::new(s, 0.5, 1).unwrap();
        let nf = paths as f64;
        let mv = samples.v.iter().sum::<f64>() / nf;
        let mx = samples.x.iter().sum::<f64>() / nf;
        let mut cvv = 0.0;
        let mut cvx = 0.0;
        let mut cxx = 0.0;
        for i in 0..paths {
            let dv = samples.v[i] - mv;
            let dx = samples.x[i] - mx;
            cvv += dv * dv;
            cvx += dv * dx;
            cxx += dx * dx;
        }
        cvv /= nf - 1.0;
        cvx /= nf - 1.0;
        cxx /= nf - 1.0;
        // Standard error of a Gaussian variance estimate: Var * sqrt(2/N).
        let rel = (2.0 / nf).sqrt();
        assert!((cvv - p.var_v()).abs() <= 4.0 * p.var_v() * rel);
        assert!((cxx - p.var_x()).abs() <= 4.0 * p.var_x() * rel);
        let se_cov = ((p.var_v() * p.var_x() + p.cov_vx().powi(2)) / nf).sqrt();
        assert!((cvx - p.cov_vx()).abs() <= 4.0 * se_cov);
    }

    /// Independent Euler-Maruyama cross-check of the covariance formulas.
    #[test]
    fn euler_maruyama_agrees_with_exact_covariance() {
        let s = 1.0;
        let sigma2: f64 = 0.5;
        let paths = 30_000;
        let steps = 1000;
        let dt = s / steps as f64;
        let root = (2.0 * sigma2 * dt).sqrt();
        let mut rng = StdRng::seed_from_u64(13);
        let mut sum_vv = 0.0;
        let mut sum_vx = 0.0;
        let mut sum_xx = 0.0;
        for _ in 0..paths {
            let mut v = 0.0;
            let mut x = 0.0;
            for _ in 0..steps {
                x += v * dt;
                let g: f64 = StandardNormal.sample(&mut rng);
                v += root * g;
            }
            sum_vv += v * v;
            sum_vx += v * x;
            sum_xx += x * x;
        }
        let nf = paths as f64;
        let p = GaussianKernelParams::new(s, sigma2, 1).unwrap();
        let rel = (2.0 / nf).sqrt();
        assert!((sum_vv / nf - p.var_v()).abs() <= 5.0 * p.var_v() * rel);
        assert!((sum_xx / nf - p.var_x()).abs() <= 5.0 * p.var_x() * (rel + 2.0 * dt));
        let se_cov = ((p.var_v() * p.var_x() + p.cov_vx().powi(2)) / nf).sqrt();
        assert!((sum_vx / nf - p.cov_vx()).abs() <= 5.0 * se_cov + 2.0 * dt * p.cov_vx());
    }

    #[test]
    fn mc_is_deterministic_under_seed() {
        let z0 = GroupPoint::identity(2);
        let a = langevin_mc(&z0, 0.5, 5000, 99, 0.5).unwrap();
        let b = langevin_mc(&z0, 0.5, 5000, 99, 0.5).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.x, b.x);
        let c = langevin_mc(&z0, 0.5, 5000, 100, 0.5).unwrap();
        assert_ne!(a.v, c.v);
    }

    #[test]
    fn kde_degenerate_cloud_peaks_at_kernel_height() {
        // All samples at one point: KDE there equals 1/(2 pi bw_v bw_x)^n.
        let samples = McSamples {
            n: 1,
            s: 1.0,
            sigma2: 0.5,
            seed: 0,
            v: vec![0.3; 2000],
            x: vec![-0.2; 2000],
        };
        let bw = [0.1, 0.2];
        let est = density_estimate(&samples, &[0.3], &[-0.2], &bw).unwrap();
        let expected = 1.0 / (2.0 * std::f64::consts::PI * bw[0] * bw[1]);
        assert!((est - expected).abs() <= 1e-12 * expected);
    }

    #[test]
    fn kde_requires_enough_samples() {
        let samples = McSamples {
            n: 1,
            s: 1.0,
            sigma2: 0.5,
            seed: 0,
            v: vec![0.0; 10],
            x: vec![0.0; 10],
        };
        assert!(matches!(
            density_estimate(&samples, &[0.0], &[0.0], &[0.1, 0.1]),
            Err(CoreError::Statistics { .. })
        ));
    }

    #[test]
    fn kde_matches_gamma_at_the_peak() {
        let z0 = GroupPoint::identity(1);
        let samples = langevin_mc(&z0, 1.0, 200_000, 5, 0.5).unwrap();
        let bw = reference_bandwidth(&samples, 0.4);
        let est = density_estimate_detailed(&samples, &[0.0], &[0.0], &bw).unwrap();
        let truth = gamma_l0(&GroupPoint::scalar(0.0, 0.0, 1.0), &z0, 0.5).unwrap();
        assert!(
            (est.value - truth).abs() <= 4.0 * est.std_error + 0.01 * truth,
            "kde {} vs gamma {truth} (se {})",
            est.value,
            est.std_error
        );
    }

    #[test]
    fn kde_standard_error_halves_with_four_times_the_paths() {
        // sqrt-scaling of the Monte-Carlo error, repeated-seed study.
        let z0 = GroupPoint::identity(1);
        let spread = |paths: usize| -> f64 {
            let values: Vec<f64> = (0..12)
                .map(|seed| {
                    let samples = langevin_mc(&z0, 1.0, paths, seed, 0.5).unwrap();
                    // Fixed bandwidth so only the sampling noise varies.
                    density_estimate(&samples, &[0.0], &[0.0], &[0.15, 0.08]).unwrap()
                })
                .collect();
            let m = values.iter().sum::<f64>() / values.len() as f64;
            (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64)
                .sqrt()
        };
        let s1 = spread(8_000);
        let s4 = spread(32_000);
        let ratio = s1 / s4;
        assert!(
            ratio > 1.3 && ratio < 3.2,
            "expected ~2x error reduction, got {ratio}"
        );
    }
}
