//! Spatially correlated Rayleigh fading for a uniform linear array.
//!
//! Correlation matrices follow the local scattering model: the received
//! signal is a superposition of planar waves whose arrival angles deviate
//! from the user's nominal angle by a Gaussian amount with standard
//! deviation equal to the ASD. Individual path gains are never drawn; only
//! the resulting covariance `R = beta * E[a(phi) a(phi)^H]` is formed, and
//! channel vectors are drawn as `CN(0, R)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type CVec = DVector<Complex64>;
pub type CMat = DMatrix<Complex64>;

/// Number of angle samples used to evaluate the scattering expectation.
pub const DEFAULT_RAYS: usize = 200;

/// The Gaussian angle deviation is truncated at this many ASDs.
pub const TRUNCATION_SDS: f64 = 4.0;

/// Uniform linear array: `antennas` elements spaced `spacing` wavelengths apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub antennas: usize,
    pub spacing: f64,
}

impl ArrayGeometry {
    pub fn new(antennas: usize, spacing: f64) -> Result<Self> {
        if antennas == 0 {
            return Err(Error::InvalidInput("array needs at least one antenna".into()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidInput(format!(
                "antenna spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self { antennas, spacing })
    }

    /// Half-wavelength spacing.
    pub fn half_wavelength(antennas: usize) -> Result<Self> {
        Self::new(antennas, 0.5)
    }
}

/// Large-scale description of one user as seen from the base station.
#[derive(Debug, Clone)]
pub struct UserProfile {
    /// Position in meters, base station at the origin.
    pub position: [f64; 2],
    pub nominal_angle: f64,
    pub asd: f64,
    pub shadowing_db: f64,
    /// Linear large-scale fading coefficient, `tr(R)/M`.
    pub beta: f64,
    pub correlation: CMat,
}

impl UserProfile {
    pub fn distance(&self) -> f64 {
        self.position[0].hypot(self.position[1])
    }
}

/// Nominal azimuth of a position relative to a base station at the origin.
pub fn nominal_angle(position: [f64; 2]) -> f64 {
    position[1].atan2(position[0])
}

/// ULA response `[1, e^{j2π δ cos φ}, ..., e^{j2π δ (M-1) cos φ}]`.
pub fn steering_vector(phi: f64, geom: &ArrayGeometry) -> CVec {
    let phase = 2.0 * PI * geom.spacing * phi.cos();
    CVec::from_fn(geom.antennas, |m, _| Complex64::from_polar(1.0, phase * m as f64))
}

/// Quadrature nodes (angle offsets) and normalized weights for the
/// truncated Gaussian angle deviation.
fn deviation_quadrature(asd: f64, n_rays: usize) -> Vec<(f64, f64)> {
    if asd == 0.0 || n_rays == 1 {
        return vec![(0.0, 1.0)];
    }
    let half_width = TRUNCATION_SDS * asd;
    let step = 2.0 * half_width / n_rays as f64;
    let mut nodes: Vec<(f64, f64)> = (0..n_rays)
        .map(|i| {
            let x = -half_width + (i as f64 + 0.5) * step;
            (x, (-0.5 * (x / asd).powi(2)).exp())
        })
        .collect();
    let total: f64 = nodes.iter().map(|&(_, w)| w).sum();
    for node in &mut nodes {
        node.1 /= total;
    }
    nodes
}

/// Spatial correlation matrix of a user with the given nominal angle, ASD
/// (radians) and large-scale gain.
///
/// The result is Toeplitz and Hermitian by construction with every diagonal
/// entry equal to `beta`.
pub fn correlation_matrix(
    nominal_angle: f64,
    asd: f64,
    beta: f64,
    geom: &ArrayGeometry,
    n_rays: usize,
) -> Result<CMat> {
    if !nominal_angle.is_finite() || !asd.is_finite() || !beta.is_finite() {
        return Err(Error::NonFinite("correlation_matrix arguments"));
    }
    if n_rays == 0 {
        return Err(Error::InvalidInput("n_rays must be at least 1".into()));
    }
    if beta <= 0.0 {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    if asd < 0.0 {
        return Err(Error::InvalidInput(format!("ASD must be non-negative, got {asd}")));
    }

    let m = geom.antennas;
    let quad = deviation_quadrature(asd, n_rays);
    // First column: c[d] = E[exp(j 2π δ d cos(Φ + x))].
    let mut column = vec![Complex64::new(0.0, 0.0); m];
    column[0] = Complex64::new(1.0, 0.0);
    for (d, c) in column.iter_mut().enumerate().skip(1) {
        *c = quad
            .iter()
            .map(|&(x, w)| {
                let phase = 2.0 * PI * geom.spacing * d as f64 * (nominal_angle + x).cos();
                Complex64::from_polar(w, phase)
            })
            .sum();
    }

    Ok(CMat::from_fn(m, m, |r, c| {
        if r >= c {
            column[r - c] * beta
        } else {
            column[c - r].conj() * beta
        }
    }))
}

/// Path loss in dB at carrier `f_ghz` and 2-D distance `d_m`.
pub fn path_loss_db(f_ghz: f64, d_m: f64) -> Result<f64> {
    if !(f_ghz > 0.0 && f_ghz.is_finite()) {
        return Err(Error::InvalidInput(format!("carrier frequency must be positive, got {f_ghz}")));
    }
    if !(d_m > 0.0 && d_m.is_finite()) {
        return Err(Error::InvalidInput(format!("distance must be positive, got {d_m}")));
    }
    Ok(32.4 + 20.0 * f_ghz.log10() + 37.6 * d_m.log10())
}

/// Draws per-user shadowing in dB.
///
/// Users in the same cluster are correlated with coefficient `intra_corr`,
/// users in different clusters are independent. Each entry has standard
/// deviation `std_db`.
pub fn sample_shadowing<R: Rng + ?Sized>(
    cluster_of: &[usize],
    std_db: f64,
    intra_corr: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&intra_corr) {
        return Err(Error::InvalidInput(format!(
            "intra-cluster correlation must lie in [0, 1], got {intra_corr}"
        )));
    }
    if !(std_db >= 0.0 && std_db.is_finite()) {
        return Err(Error::InvalidInput(format!("shadowing deviation must be non-negative, got {std_db}")));
    }
    let n_clusters = cluster_of.iter().max().map_or(0, |&c| c + 1);
    let common: Vec<f64> = (0..n_clusters).map(|_| rng.sample(StandardNormal)).collect();
    let shared = intra_corr.sqrt();
    let own = (1.0 - intra_corr).sqrt();
    Ok(cluster_of
        .iter()
        .map(|&c| {
            let e: f64 = rng.sample(StandardNormal);
            std_db * (shared * common[c] + own * e)
        })
        .collect())
}

/// Hermitian square root `R^{1/2}` of a correlation matrix, used to color
/// white Gaussian vectors.
#[derive(Debug, Clone)]
pub struct ChannelFactor {
    sqrt: CMat,
}

impl ChannelFactor {
    /// Factors `R` through its eigendecomposition. Eigenvalues below
    /// `1e-12` of the largest are clamped to zero; anything more negative
    /// than `-1e-10 * tr(R)/M` means `R` is not a covariance matrix.
    pub fn new(r: &CMat) -> Result<Self> {
        if !r.is_square() {
            return Err(Error::InvalidInput("correlation matrix must be square".into()));
        }
        if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("correlation matrix"));
        }
        let m = r.nrows();
        if m == 0 {
            return Ok(Self { sqrt: CMat::zeros(0, 0) });
        }
        let scale = large_scale_coefficient(r).abs();
        if scale == 0.0 {
            return Ok(Self { sqrt: CMat::zeros(m, m) });
        }
        let herm = (r + r.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let floor = -1e-10 * scale;
        if let Some(&worst) = eig.eigenvalues.iter().find(|&&l| l < floor) {
            return Err(Error::Factorization(format!(
                "correlation matrix has eigenvalue {worst:.3e} below the PSD floor {floor:.3e}"
            )));
        }
        // Eigenvalues at round-off level relative to the largest are noise.
        let cutoff = 1e-12 * eig.eigenvalues.max().max(0.0);
        let roots = eig
            .eigenvalues
            .map(|l| Complex64::new(if l > cutoff { l.sqrt() } else { 0.0 }, 0.0));
        let u = &eig.eigenvectors;
        let scaled = CMat::from_fn(m, m, |i, j| u[(i, j)] * roots[j]);
        Ok(Self { sqrt: scaled * u.adjoint() })
    }

    pub fn antennas(&self) -> usize {
        self.sqrt.nrows()
    }

    pub fn sqrt(&self) -> &CMat {
        &self.sqrt
    }

    /// Draws `h = R^{1/2} z` with `z ~ CN(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let z = standard_complex_normal(self.antennas(), rng);
        &self.sqrt * z
    }
}

/// Vector of i.i.d. `CN(0, 1)` entries.
pub fn standard_complex_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// Draws one channel realization `h ~ CN(0, R)`.
pub fn sample_channel<R: Rng + ?Sized>(r: &CMat, rng: &mut R) -> Result<CVec> {
    Ok(ChannelFactor::new(r)?.sample(rng))
}

/// `tr(R)/M`.
pub fn large_scale_coefficient(r: &CMat) -> f64 {
    if r.nrows() == 0 {
        return 0.0;
    }
    r.trace().re / r.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    fn geom(m: usize) -> ArrayGeometry {
        ArrayGeometry::half_wavelength(m).unwrap()
    }

    #[test]
    fn geometry_rejects_bad_inputs() {
        assert!(ArrayGeometry::new(0, 0.5).is_err());
        assert!(ArrayGeometry::new(4, 0.0).is_err());
        assert!(ArrayGeometry::new(4, f64::NAN).is_err());
    }

    #[test]
    fn steering_broadside_is_all_ones() {
        let a = steering_vector(PI / 2.0, &geom(4));
        for z in a.iter() {
            assert_abs_diff_eq!(z.re, 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let a = steering_vector(0.0, &geom(2));
        assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].re, -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(a[1].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn steering_sixty_degrees() {
        // exp(j 2π 0.5 * 2 * cos(π/3)) = exp(jπ)
        let a = steering_vector(PI / 3.0, &geom(3));
        assert_abs_diff_eq!(a[2].re, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[2].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steering_unit_modulus_and_mirror_symmetry() {
        let g = geom(16);
        for &phi in &[0.1, 0.7, 1.3, 2.9, 4.0] {
            let a = steering_vector(phi, &g);
            let b = steering_vector(2.0 * PI - phi, &g);
            assert_abs_diff_eq!(a[0].re, 1.0, epsilon = 1e-15);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_abs_diff_eq!(x.norm(), 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!((x - y).norm(), 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_asd_gives_rank_one() {
        let g = geom(6);
        let phi = 0.8;
        let r = correlation_matrix(phi, 0.0, 2.5, &g, DEFAULT_RAYS).unwrap();
        let a = steering_vector(phi, &g);
        let expected = &a * a.adjoint() * Complex64::new(2.5, 0.0);
        assert!((r - expected).norm() < 1e-12);
    }

    #[test]
    fn single_antenna_is_scalar_beta() {
        let r = correlation_matrix(0.3, 0.17, 0.42, &geom(1), DEFAULT_RAYS).unwrap();
        assert_eq!(r.nrows(), 1);
        assert_abs_diff_eq!(r[(0, 0)].re, 0.42, epsilon = 1e-15);
        assert_abs_diff_eq!(r[(0, 0)].im, 0.0, epsilon = 1e-15);
    }

    /// Independent check of `E[exp(j2πδ d cos(Φ + x))]`, `x ~ N(0, σ²)`,
    /// with composite Simpson over ±8σ (no truncation at 4σ).
    fn simpson_correlation(phi: f64, asd: f64, delta: f64, d: usize) -> Complex64 {
        let n = 20_000;
        let (a, b) = (-8.0 * asd, 8.0 * asd);
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let pdf = (-0.5 * (x / asd).powi(2)).exp() / (asd * (2.0 * PI).sqrt());
            Complex64::from_polar(pdf, 2.0 * PI * delta * d as f64 * (phi + x).cos())
        };
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(a + i as f64 * h) * w;
        }
        acc * (h / 3.0)
    }

    #[test]
    fn correlation_matches_quadrature_oracle_and_decays() {
        let asd = 10f64.to_radians();
        let r = correlation_matrix(0.0, asd, 1.0, &geom(8), DEFAULT_RAYS).unwrap();
        let mut last = f64::INFINITY;
        let mut last_oracle = f64::INFINITY;
        for d in 1..8 {
            let oracle = simpson_correlation(0.0, asd, 0.5, d);
            assert!((r[(d, 0)] - oracle).norm() < 1e-3, "lag {d}");
            let mag = r[(d, 0)].norm();
            assert!(mag < last, "lag {d}: {mag} !< {last}");
            assert!(oracle.norm() < last_oracle);
            last = mag;
            last_oracle = oracle.norm();
        }
    }

    #[test]
    fn correlation_is_hermitian_psd_with_requested_beta() {
        let g = geom(32);
        for &(phi, asd_deg, beta) in &[(0.2, 10.0, 1e-12), (1.4, 2.0, 3.0), (2.7, 25.0, 0.37)] {
            let r = correlation_matrix(phi, f64::to_radians(asd_deg), beta, &g, DEFAULT_RAYS).unwrap();
            assert!((&r - r.adjoint()).norm() <= 1e-10 * r.norm());
            assert!((large_scale_coefficient(&r) - beta).abs() <= 1e-9 * beta);
            for i in 0..32 {
                assert!((r[(i, i)].re - beta).abs() <= 1e-12 * beta);
            }
            let eig = SymmetricEigen::new(r.clone());
            assert!(eig.eigenvalues.min() >= -1e-10 * beta);
        }
    }

    #[test]
    fn correlation_rejects_bad_inputs() {
        let g = geom(4);
        assert!(correlation_matrix(f64::NAN, 0.1, 1.0, &g, 10).is_err());
        assert!(correlation_matrix(0.0, f64::INFINITY, 1.0, &g, 10).is_err());
        assert!(correlation_matrix(0.0, 0.1, 0.0, &g, 10).is_err());
        assert!(correlation_matrix(0.0, 0.1, 1.0, &g, 0).is_err());
    }

    #[test]
    fn path_loss_values() {
        assert_abs_diff_eq!(path_loss_db(2.0, 100.0).unwrap(), 113.620_599_913_279_6, epsilon = 1e-9);
        assert_abs_diff_eq!(path_loss_db(1.0, 1.0).unwrap(), 32.4, epsilon = 1e-12);
        // 32.4 + 20 log10(2) + 37.6 log10(200)
        assert_abs_diff_eq!(path_loss_db(2.0, 200.0).unwrap(), 124.939_327_8, epsilon = 1e-6);
        assert!(path_loss_db(2.0, 0.0).is_err());
        assert!(path_loss_db(0.0, 10.0).is_err());
    }

    #[test]
    fn shadowing_perfect_correlation_shares_one_draw() {
        let mut rng = rng::stream(1, &[0]);
        let s = sample_shadowing(&[0; 6], 10.0, 1.0, &mut rng).unwrap();
        for x in &s {
            assert_eq!(*x, s[0]);
        }
    }

    fn empirical_corr(pairs: &[(f64, f64)]) -> f64 {
        let n = pairs.len() as f64;
        let (ma, mb) = pairs.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / n, b + p.1 / n));
        let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
        for &(a, b) in pairs {
            sab += (a - ma) * (b - mb);
            saa += (a - ma).powi(2);
            sbb += (b - mb).powi(2);
        }
        sab / (saa * sbb).sqrt()
    }

    #[test]
    fn shadowing_independent_when_uncorrelated() {
        let mut rng = rng::stream(2, &[0]);
        let pairs: Vec<(f64, f64)> = (0..20_000)
            .map(|_| {
                let s = sample_shadowing(&[0, 0], 10.0, 0.0, &mut rng).unwrap();
                (s[0], s[1])
            })
            .collect();
        assert!(empirical_corr(&pairs).abs() < 0.03);
    }

    #[test]
    fn shadowing_intra_and_inter_cluster_correlation() {
        let mut rng = rng::stream(3, &[0]);
        let layout = [0, 0, 1, 1];
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        let mut var = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let s = sample_shadowing(&layout, 10.0, 0.99, &mut rng).unwrap();
            intra.push((s[0], s[1]));
            inter.push((s[1], s[2]));
            var += s[3] * s[3] / n as f64;
        }
        assert!(empirical_corr(&intra) >= 0.95);
        assert!(empirical_corr(&inter).abs() < 0.05);
        assert!((var - 100.0).abs() < 5.0, "variance {var}");
        assert!(sample_shadowing(&layout, 10.0, 1.5, &mut rng).is_err());
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let mut rng = rng::stream(4, &[0]);
        let h = sample_channel(&CMat::zeros(4, 4), &mut rng).unwrap();
        assert_eq!(h.norm(), 0.0);
    }

    #[test]
    fn white_channel_has_unit_variance() {
        let mut rng = rng::stream(5, &[0]);
        let f = ChannelFactor::new(&CMat::identity(4, 4)).unwrap();
        let n = 100_000;
        let mut power = [0.0; 4];
        for _ in 0..n {
            let h = f.sample(&mut rng);
            for (p, z) in power.iter_mut().zip(h.iter()) {
                *p += z.norm_sqr() / n as f64;
            }
        }
        for p in power {
            assert!((p - 1.0).abs() < 0.05, "variance {p}");
        }
    }

    #[test]
    fn rank_one_draws_follow_steering_vector() {
        let g = geom(8);
        let a = steering_vector(1.1, &g);
        let r = &a * a.adjoint();
        let f = ChannelFactor::new(&r).unwrap();
        let mut rng = rng::stream(6, &[0]);
        for _ in 0..20 {
            let h = f.sample(&mut rng);
            // h = c a  <=>  h - (a^H h / M) a = 0
            let c = a.dotc(&h) / Complex64::new(8.0, 0.0);
            assert!((&h - &a * c).norm() <= 1e-9 * h.norm().max(1e-300));
        }
    }

    #[test]
    fn empirical_covariance_converges() {
        let g = geom(8);
        let r = correlation_matrix(0.9, 10f64.to_radians(), 1.0, &g, DEFAULT_RAYS).unwrap();
        let f = ChannelFactor::new(&r).unwrap();
        let mut rng = rng::stream(7, &[0]);
        let n = 100_000;
        let mut acc = CMat::zeros(8, 8);
        for _ in 0..n {
            let h = f.sample(&mut rng);
            acc += &h * h.adjoint();
        }
        acc /= Complex64::new(n as f64, 0.0);
        assert!((acc - &r).norm() / r.norm() <= 0.03);
    }

    #[test]
    fn factor_rejects_indefinite_matrix() {
        let mut r = CMat::identity(3, 3);
        r[(2, 2)] = Complex64::new(-1.0, 0.0);
        assert!(matches!(ChannelFactor::new(&r), Err(Error::Factorization(_))));
    }

    #[test]
    fn large_scale_coefficient_examples() {
        assert_abs_diff_eq!(large_scale_coefficient(&(CMat::identity(8, 8) * Complex64::new(2.0, 0.0))), 2.0);
        let a = steering_vector(0.4, &geom(8));
        assert_abs_diff_eq!(large_scale_coefficient(&(&a * a.adjoint())), 1.0, epsilon = 1e-12);
        let r = correlation_matrix(0.4, 0.2, 0.37, &geom(8), DEFAULT_RAYS).unwrap();
        assert!((large_scale_coefficient(&r) - 0.37).abs() <= 1e-9 * 0.37);
    }
}
