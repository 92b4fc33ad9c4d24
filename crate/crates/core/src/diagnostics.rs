//! Conserved and slowly growing functionals of the vorticity, growth-exponent
//! fits and trend tests.
//!
//! All sums run in a fixed particle order so that repeated evaluations are
//! bit-identical; the quadratic energy sum is parallel over rows and reduced
//! sequentially.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynamics::VortexEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{ExteriorMapSpec, MappedPoint, Point};
use crate::kernels::{map_ensemble, KernelContext};

/// Mapped radii at which the smoothed tail mass is recorded.
pub const TAIL_RADII: [f64; 4] = [2.0, 4.0, 8.0, 16.0];

/// Default logistic width for the tail mass at radius `r`.
pub fn tail_lambda(r: f64) -> f64 {
    1.0 / (4.0 * r.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRecord {
    pub t: f64,
    pub mass: f64,
    pub alpha: f64,
    pub energy: f64,
    pub log_moment: f64,
    pub j_theta1: f64,
    pub j_theta2: f64,
    pub inertia: f64,
    pub center: Point,
    pub r_support_phys: f64,
    pub r_support_mapped: f64,
    pub tail_mass: Vec<(f64, f64)>,
    pub theta: u8,
    /// `sum_{i,j} gamma_i gamma_j log min(|T_i|, |T_j|)`; not part of the CSV.
    pub min_log_pair: f64,
}

impl DiagnosticRecord {
    pub fn compute(ctx: &KernelContext, ensemble: &VortexEnsemble, t: f64) -> Result<Self> {
        let mapped = map_ensemble(ctx, ensemble)?;
        let g = ensemble.strengths();
        let mass = ensemble.mass();
        let (inertia, center) = physical_moments(ensemble)?;
        let (j_theta1, j_theta2) = weighted_from_mapped(&mapped, g);
        Ok(Self {
            t,
            mass,
            alpha: ctx.alpha,
            energy: energy_from_mapped(ctx, &mapped, g)?.total(),
            log_moment: log_moment_from_mapped(&mapped, g),
            j_theta1,
            j_theta2,
            inertia,
            center,
            r_support_phys: ensemble
                .positions()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max),
            r_support_mapped: mapped.iter().map(|m| m.w.norm()).fold(1.0, f64::max),
            tail_mass: TAIL_RADII
                .iter()
                .map(|&r| (r, tail_from_mapped(&mapped, g, r, tail_lambda(r))))
                .collect(),
            theta: theta_selector(ctx.alpha, mass),
            min_log_pair: min_log_from_mapped(&mapped, g),
        })
    }
}

/// The three pieces of the generalized energy in vorticity form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts {
    /// `-(1/2pi) sum_{i != j} g_i g_j log |T_i - T_j|`
    pub free_space: f64,
    /// `(1/2pi) sum_{i,j} g_i g_j log(|T_i - T_j*| |T_j|)`
    pub image: f64,
    /// `-(alpha/pi) sum_i g_i log |T_i|`
    pub harmonic: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.free_space + self.image + self.harmonic
    }
}

/// Generalized energy `E = -int psi omega - (alpha/pi) int log|T| omega`.
///
/// The free-space self term is dropped; with `delta > 0` the pair distance is
/// `sqrt(|T_i - T_j|^2 + delta^2)`.
pub fn generalized_energy(ctx: &KernelContext, ensemble: &VortexEnsemble) -> Result<f64> {
    Ok(energy_parts(ctx, ensemble)?.total())
}

pub fn energy_parts(ctx: &KernelContext, ensemble: &VortexEnsemble) -> Result<EnergyParts> {
    let mapped = map_ensemble(ctx, ensemble)?;
    energy_from_mapped(ctx, &mapped, ensemble.strengths())
}

fn energy_from_mapped(
    ctx: &KernelContext,
    mapped: &[MappedPoint],
    g: &[f64],
) -> Result<EnergyParts> {
    let w: Vec<Complex64> = mapped.iter().map(|m| m.w).collect();
    let d2 = ctx.blob_delta * ctx.blob_delta;
    let rows: Vec<Result<(f64, f64)>> = (0..w.len())
        .into_par_iter()
        .map(|i| {
            let wi = w[i];
            let mut free = 0.0;
            let mut image = 0.0;
            for (j, (&wj, &gj)) in w.iter().zip(g).enumerate() {
                // |T_i - T_j*| |T_j| = |T_i conj(T_j) - 1|
                image += gj * (wi * wj.conj() - 1.0).norm().ln();
                if j != i {
                    let r2 = (wi - wj).norm_sqr() + d2;
                    if r2 == 0.0 {
                        return Err(Error::Singularity(format!(
                            "particles {i} and {j} coincide with zero blob radius"
                        )));
                    }
                    free += gj * 0.5 * r2.ln();
                }
            }
            Ok((free, image))
        })
        .collect();
    let mut free = 0.0;
    let mut image = 0.0;
    let mut harmonic = 0.0;
    for (i, row) in rows.into_iter().enumerate() {
        let (f, im) = row?;
        free += g[i] * f;
        image += g[i] * im;
        harmonic += g[i] * w[i].norm().ln();
    }
    Ok(EnergyParts {
        free_space: -free / (2.0 * PI),
        image: image / (2.0 * PI),
        harmonic: -ctx.alpha * harmonic / PI,
    })
}

/// `L = (1/2pi) sum_i g_i log |T_i|`.
pub fn log_moment(ctx: &KernelContext, ensemble: &VortexEnsemble) -> Result<f64> {
    let mapped = map_ensemble(ctx, ensemble)?;
    Ok(log_moment_from_mapped(&mapped, ensemble.strengths()))
}

fn log_moment_from_mapped(mapped: &[MappedPoint], g: &[f64]) -> f64 {
    mapped
        .iter()
        .zip(g)
        .map(|(m, &gi)| gi * m.w.norm().ln())
        .sum::<f64>()
        / (2.0 * PI)
}

/// `(sum g |T|^2 log|T|, sum g |T|^2 log^2|T|)`.
pub fn weighted_moments(ctx: &KernelContext, ensemble: &VortexEnsemble) -> Result<(f64, f64)> {
    let mapped = map_ensemble(ctx, ensemble)?;
    Ok(weighted_from_mapped(&mapped, ensemble.strengths()))
}

fn weighted_from_mapped(mapped: &[MappedPoint], g: &[f64]) -> (f64, f64) {
    let mut j1 = 0.0;
    let mut j2 = 0.0;
    for (m, &gi) in mapped.iter().zip(g) {
        let r2 = m.w.norm_sqr();
        let l = 0.5 * r2.ln();
        j1 += gi * r2 * l;
        j2 += gi * r2 * l * l;
    }
    (j1, j2)
}

/// Moment of inertia `sum g |x|^2` and center of vorticity `sum g x / m`.
pub fn physical_moments(ensemble: &VortexEnsemble) -> Result<(f64, Point)> {
    let mass = ensemble.mass();
    if mass == 0.0 {
        return Err(Error::ZeroMass);
    }
    let mut inertia = 0.0;
    let mut first = Complex64::new(0.0, 0.0);
    for (&x, &g) in ensemble.positions().iter().zip(ensemble.strengths()) {
        inertia += g * x.norm_sqr();
        first += x * g;
    }
    Ok((inertia, first / mass))
}

/// Logistic `e^s / (1 + e^s)`, overflow-safe.
#[inline]
pub fn eta(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

/// `f_r = sum g eta((|T|^2 - r^2) / (lambda r^2))`.
pub fn smoothed_tail_mass(
    ctx: &KernelContext,
    ensemble: &VortexEnsemble,
    r: f64,
    lambda: f64,
) -> Result<f64> {
    if !(r > 1.0) {
        return Err(Error::config("r", "tail radius must exceed 1"));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::config("lambda", "must lie in (0, 1]"));
    }
    let mapped = map_ensemble(ctx, ensemble)?;
    Ok(tail_from_mapped(&mapped, ensemble.strengths(), r, lambda))
}

fn tail_from_mapped(mapped: &[MappedPoint], g: &[f64], r: f64, lambda: f64) -> f64 {
    let r2 = r * r;
    mapped
        .iter()
        .zip(g)
        .map(|(m, &gi)| gi * eta((m.w.norm_sqr() - r2) / (lambda * r2)))
        .sum()
}

/// 2 when `alpha <= 0` or `alpha > m`, otherwise 1.
pub fn theta_selector(alpha: f64, m: f64) -> u8 {
    if alpha <= 0.0 || alpha > m {
        2
    } else {
        1
    }
}

/// `sum_{i,j} g_i g_j log min(|T_i|, |T_j|)`.
pub fn min_log_pair_moment(ctx: &KernelContext, ensemble: &VortexEnsemble) -> Result<f64> {
    let mapped = map_ensemble(ctx, ensemble)?;
    Ok(min_log_from_mapped(&mapped, ensemble.strengths()))
}

fn min_log_from_mapped(mapped: &[MappedPoint], g: &[f64]) -> f64 {
    // Sorted by |T|, particle k is the minimum of every pair it forms with
    // itself and with any later particle.
    let mut items: Vec<(f64, f64)> = mapped
        .iter()
        .zip(g)
        .map(|(m, &gi)| (m.w.norm(), gi))
        .collect();
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut tail: f64 = 0.0;
    let mut acc = 0.0;
    for &(r, gi) in items.iter().rev() {
        acc += gi * r.ln() * (gi + 2.0 * tail);
        tail += gi;
    }
    acc
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub fit_window: (f64, f64),
    /// RMS of the log residuals.
    pub residual: f64,
    pub samples: usize,
}

pub const MIN_FIT_SAMPLES: usize = 10;

/// Least squares for `log r = log M + p log(1 + t)` over `t_lo <= t <= t_hi`.
pub fn fit_growth_exponent(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<GrowthFit> {
    if !(t_lo < t_hi) {
        return Err(Error::Fit(format!("empty window [{t_lo}, {t_hi}]")));
    }
    let window: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_lo && t <= t_hi)
        .collect();
    if window.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!(
            "{} samples in [{t_lo}, {t_hi}], need at least {MIN_FIT_SAMPLES}",
            window.len()
        )));
    }
    if let Some(&(t, r)) = window.iter().find(|&&(t, r)| !(t > 0.0 && r > 0.0)) {
        return Err(Error::Fit(format!(
            "sample (t = {t}, r = {r}) must have t > 0 and r > 0"
        )));
    }
    let xs: Vec<f64> = window.iter().map(|&(t, _)| t.ln_1p()).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, r)| r.ln()).collect();
    let (intercept, slope) = least_squares_line(&xs, &ys);
    let n = xs.len() as f64;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(GrowthFit {
        exponent: slope,
        prefactor: intercept.exp(),
        fit_window: (t_lo, t_hi),
        residual: (rss / n).sqrt(),
        samples: window.len(),
    })
}

/// Ordinary least squares `y = a + b x`; returns `(a, b)`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (my - b * mx, b)
}

/// Means of the first and the last quarter of a time series (by sample
/// count).
pub fn quarter_means(values: &[f64]) -> Option<(f64, f64)> {
    let q = values.len() / 4;
    if q == 0 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&values[..q]), mean(&values[values.len() - q..])))
}

/// Linear and quadratic least-squares fits of `j(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEnvelope {
    pub intercept: f64,
    pub slope: f64,
    /// Coefficient of `t^2` in the quadratic fit.
    pub curvature: f64,
    /// Upward quadratic contribution at the end of the window relative to the
    /// mean level, `max(c, 0) T^2 / mean|j|`, with `T` the window length.
    pub superlinear_fraction: f64,
}

pub fn linear_envelope(series: &[(f64, f64)]) -> Option<LinearEnvelope> {
    if series.len() < 3 {
        return None;
    }
    let ts: Vec<f64> = series.iter().map(|p| p.0).collect();
    let js: Vec<f64> = series.iter().map(|p| p.1).collect();
    let (intercept, slope) = least_squares_line(&ts, &js);
    let curvature = quadratic_coefficient(&ts, &js)?;
    let span = ts[ts.len() - 1] - ts[0];
    let level = js.iter().map(|j| j.abs()).sum::<f64>() / js.len() as f64;
    let superlinear_fraction = if level > 0.0 {
        curvature.max(0.0) * span * span / level
    } else {
        0.0
    };
    Some(LinearEnvelope {
        intercept,
        slope,
        curvature,
        superlinear_fraction,
    })
}

/// `c` of the least-squares `a + b t + c t^2`, solved on centered and scaled
/// time for conditioning.
fn quadratic_coefficient(ts: &[f64], js: &[f64]) -> Option<f64> {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let scale = ts.iter().map(|t| (t - mt).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let u: Vec<f64> = ts.iter().map(|t| (t - mt) / scale).collect();
    // normal equations in the basis (1, u, u^2)
    let mut a = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (&ui, &ji) in u.iter().zip(js) {
        let basis = [1.0, ui, ui * ui];
        for r in 0..3 {
            b[r] += basis[r] * ji;
            for c in 0..3 {
                a[r][c] += basis[r] * basis[c];
            }
        }
    }
    let coeffs = solve3(a, b)?;
    Some(coeffs[2] / (scale * scale))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in (col + 1)..3 {
            let f = a[r][col] / a[col][col];
            for c in col..3 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = ((r + 1)..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopsReport {
    pub pairs: usize,
    /// Largest `|T(x) . T(y)^perp| / (min(|T(x)|, |T(y)|) |T(x) - T(y)|)`.
    pub max_cross_ratio: f64,
    /// Largest `||T'(x)|^2 - |T'(y)|^2| min(|T(x)|, |T(y)|)^2 / |T(x) - T(y)|`.
    pub derivative_ratio_sup: f64,
    /// `(lo, hi, sup)` of the same ratio for pairs with `lo <= min|T| < hi`.
    pub derivative_ratio_by_band: Vec<(f64, f64, f64)>,
}

const LOOPS_R_MAX: f64 = 64.0;
const LOOPS_TOL: f64 = 1e-12;

/// Samples random pairs of fluid points and checks
/// `|T(x) . T(y)^perp| <= min(|T(x)|, |T(y)|) |T(x) - T(y)|`, reporting the
/// first violation as an error. The derivative-difference ratio is only
/// measured, per dyadic band of `min(|T(x)|, |T(y)|)`.
pub fn check_loops_inequalities(
    map: &ExteriorMapSpec,
    n_random: usize,
    seed: u64,
) -> Result<LoopsReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_bands = LOOPS_R_MAX.log2() as usize;
    let mut bands = vec![0.0f64; n_bands];
    let mut max1 = 0.0f64;
    let mut sup2 = 0.0f64;
    let log_max = LOOPS_R_MAX.ln();
    let sample = |rng: &mut ChaCha8Rng| -> Result<MappedPoint> {
        let w = Complex64::from_polar(
            rng.gen_range(0.0..log_max).exp(),
            rng.gen_range(0.0..2.0 * PI),
        );
        map.map_point(map.s(w))
    };
    for _ in 0..n_random {
        let a = sample(&mut rng)?;
        let b = sample(&mut rng)?;
        let (tx, ty) = (a.w, b.w);
        let lhs = (tx.re * ty.im - tx.im * ty.re).abs();
        let rmin = tx.norm().min(ty.norm());
        let dist = (tx - ty).norm();
        let rhs = rmin * dist;
        if lhs > rhs + LOOPS_TOL * rhs.max(1.0) {
            return Err(Error::PropertyViolation(format!(
                "|T(x).T(y)^perp| = {lhs} > {rhs} for x = {}, y = {}",
                a.z, b.z
            )));
        }
        if rhs > 0.0 {
            max1 = max1.max(lhs / rhs);
        }
        if dist > 0.0 {
            let ratio = (a.dt.norm_sqr() - b.dt.norm_sqr()).abs() * rmin * rmin / dist;
            sup2 = sup2.max(ratio);
            let band = (rmin.log2().floor() as usize).min(n_bands - 1);
            bands[band] = bands[band].max(ratio);
        }
    }
    Ok(LoopsReport {
        pairs: n_random,
        max_cross_ratio: max1,
        derivative_ratio_sup: sup2,
        derivative_ratio_by_band: bands
            .iter()
            .enumerate()
            .map(|(k, &s)| (2f64.powi(k as i32), 2f64.powi(k as i32 + 1), s))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disk(alpha: f64, delta: f64) -> KernelContext {
        KernelContext::new(ExteriorMapSpec::disk(), alpha, delta).unwrap()
    }

    fn ens(pos: Vec<Complex64>, g: Vec<f64>) -> VortexEnsemble {
        VortexEnsemble::new(pos, g, 0.0, false).unwrap()
    }

    /// Brute-force evaluation of the energy double sum, written directly from
    /// its definition with physical-plane inversions.
    fn energy_oracle(alpha: f64, delta: f64, pos: &[Complex64], g: &[f64]) -> f64 {
        let mut e = 0.0;
        for i in 0..pos.len() {
            for j in 0..pos.len() {
                let (xi, xj) = (pos[i], pos[j]);
                if i != j {
                    let d = ((xi - xj).norm_sqr() + delta * delta).sqrt();
                    e -= g[i] * g[j] * d.ln() / (2.0 * PI);
                }
                let xj_star = xj / xj.norm_sqr();
                e += g[i] * g[j] * ((xi - xj_star).norm() * xj.norm()).ln() / (2.0 * PI);
            }
            e -= alpha / PI * g[i] * pos[i].norm().ln();
        }
        e
    }

    #[test]
    fn energy_examples() {
        let e = generalized_energy(&disk(0.0, 0.0), &ens(vec![c(2.0, 0.0)], vec![1.0])).unwrap();
        assert!((e - 3f64.ln() / (2.0 * PI)).abs() < 1e-15);
        assert!((e - 0.17485).abs() < 1e-5);
        assert_eq!(
            generalized_energy(&disk(0.0, 0.0), &ens(vec![], vec![])).unwrap(),
            0.0
        );

        let pos = vec![c(2.0, 0.5), c(-1.0, 3.0)];
        let g = vec![0.7, 1.3];
        for (alpha, delta) in [(0.0, 0.0), (1.5, 0.0), (-0.4, 0.2)] {
            let ctx = disk(alpha, delta);
            let e = generalized_energy(
                &ctx,
                &VortexEnsemble::new(pos.clone(), g.clone(), delta, false).unwrap(),
            )
            .unwrap();
            assert!((e - energy_oracle(alpha, delta, &pos, &g)).abs() < 1e-12);
        }
        let twin = ens(vec![c(2.0, 0.0), c(2.0, 0.0)], vec![1.0, 1.0]);
        assert!(matches!(
            generalized_energy(&disk(0.0, 0.0), &twin),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn log_moment_examples() {
        let ctx = disk(0.0, 0.0);
        let l = log_moment(&ctx, &ens(vec![c(E, 0.0)], vec![2.0 * PI])).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let on_boundary = ens(vec![c(1.0, 0.0), c(0.0, -1.0)], vec![1.0, 2.0]);
        assert_eq!(log_moment(&ctx, &on_boundary).unwrap(), 0.0);
        let two = ens(vec![c(E, 0.0), c(0.0, E * E)], vec![PI, PI]);
        assert!((log_moment(&ctx, &two).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn weighted_moment_examples() {
        let ctx = disk(0.0, 0.0);
        let (j1, j2) = weighted_moments(&ctx, &ens(vec![c(0.0, E)], vec![1.0])).unwrap();
        assert!((j1 - E * E).abs() < 1e-13 && (j2 - E * E).abs() < 1e-13);
        let on_boundary = ens(vec![c(1.0, 0.0), c(0.0, -1.0)], vec![1.0, 2.0]);
        assert_eq!(weighted_moments(&ctx, &on_boundary).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn physical_moment_examples() {
        let (i, center) = physical_moments(&ens(vec![c(3.0, 4.0)], vec![2.0])).unwrap();
        assert_eq!(i, 50.0);
        assert_eq!(center, c(3.0, 4.0));
        let even = VortexEnsemble::new(
            vec![c(2.1, 0.37), c(-2.1, -0.37), c(0.3, 1.9), c(-0.3, -1.9)],
            vec![0.31, 0.31, 0.17, 0.17],
            0.0,
            true,
        )
        .unwrap();
        assert_eq!(physical_moments(&even).unwrap().1, c(0.0, 0.0));
        assert!(matches!(
            physical_moments(&ens(vec![], vec![])),
            Err(Error::ZeroMass)
        ));
    }

    #[test]
    fn tail_mass_examples() {
        let ctx = disk(0.0, 0.0);
        let one = ens(vec![c(3.0, 0.0)], vec![0.8]);
        assert!((smoothed_tail_mass(&ctx, &one, 3.0, 0.5).unwrap() - 0.4).abs() < 1e-15);
        let cluster = ens(vec![c(2.0, 0.0), c(0.0, 2.5)], vec![0.5, 0.5]);
        let r = 20.0;
        let lambda = 0.2;
        let f = smoothed_tail_mass(&ctx, &cluster, r, lambda).unwrap();
        assert!(f <= (-1.0 / (2.0 * lambda)).exp());
        let near = smoothed_tail_mass(&ctx, &cluster, 1.0 + 1e-9, 0.01).unwrap();
        assert!((near - 1.0).abs() < 1e-12);
        assert!(smoothed_tail_mass(&ctx, &cluster, 0.5, 0.2).is_err());
        assert!(smoothed_tail_mass(&ctx, &cluster, 2.0, 1.5).is_err());
    }

    #[test]
    fn theta_examples() {
        assert_eq!(theta_selector(-0.1, 1.0), 2);
        assert_eq!(theta_selector(0.5, 1.0), 1);
        assert_eq!(theta_selector(1.2, 1.0), 2);
        assert_eq!(theta_selector(0.0, 1.0), 2);
        assert_eq!(theta_selector(1.0, 1.0), 1);
    }

    fn min_log_oracle(radii: &[f64], g: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..radii.len() {
            for j in 0..radii.len() {
                s += g[i] * g[j] * radii[i].min(radii[j]).ln();
            }
        }
        s
    }

    #[test]
    fn min_log_examples() {
        let ctx = disk(0.0, 0.0);
        let two = ens(vec![c(E, 0.0), c(0.0, E.powi(3))], vec![1.0, 1.0]);
        assert!((min_log_pair_moment(&ctx, &two).unwrap() - 6.0).abs() < 1e-14);
        let one = ens(vec![c(E, 0.0)], vec![1.0]);
        assert!((min_log_pair_moment(&ctx, &one).unwrap() - 1.0).abs() < 1e-15);
        let bdry = ens(vec![c(1.0, 0.0), c(-1.0, 0.0)], vec![1.0, 3.0]);
        assert_eq!(min_log_pair_moment(&ctx, &bdry).unwrap(), 0.0);
    }

    #[test]
    fn fit_examples() {
        let exact: Vec<(f64, f64)> = (1..=40)
            .map(|k| {
                let t = k as f64 * 0.5;
                (t, 3.0 * (1.0 + t).sqrt())
            })
            .collect();
        let fit = fit_growth_exponent(&exact, 0.5, 20.0).unwrap();
        assert!((fit.exponent - 0.5).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-12);
        assert!(fit.residual <= 1e-12);

        let flat: Vec<(f64, f64)> = (1..=20).map(|k| (k as f64, 2.7)).collect();
        assert!(
            fit_growth_exponent(&flat, 1.0, 20.0)
                .unwrap()
                .exponent
                .abs()
                < 1e-14
        );

        let even: Vec<(f64, f64)> = (0..=990)
            .map(|k| {
                let t = 10.0 + k as f64;
                (t, ((1.0 + t) * (2.0 + t).ln()).powf(0.25))
            })
            .collect();
        let p = fit_growth_exponent(&even, 10.0, 1000.0).unwrap().exponent;
        assert!((0.25..=0.33).contains(&p), "{p}");

        assert!(matches!(
            fit_growth_exponent(&flat[..5], 1.0, 20.0),
            Err(Error::Fit(_))
        ));
        let with_zero: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, 1.0)).collect();
        assert!(fit_growth_exponent(&with_zero, 0.0, 20.0).is_err());
    }

    #[test]
    fn envelope_of_linear_and_quadratic_series() {
        let lin: Vec<(f64, f64)> = (0..100)
            .map(|k| (k as f64 * 0.2, 3.0 + 0.5 * k as f64 * 0.2))
            .collect();
        let env = linear_envelope(&lin).unwrap();
        assert!((env.slope - 0.5).abs() < 1e-12 && env.superlinear_fraction < 1e-10);
        let quad: Vec<(f64, f64)> = (0..100)
            .map(|k| {
                let t = k as f64 * 0.2;
                (t, 1.0 + t * t)
            })
            .collect();
        let env = linear_envelope(&quad).unwrap();
        assert!((env.curvature - 1.0).abs() < 1e-9);
        assert!(env.superlinear_fraction > 1.0);
    }

    #[test]
    fn quarter_means_split() {
        let v: Vec<f64> = (0..8).map(|k| k as f64).collect();
        assert_eq!(quarter_means(&v), Some((0.5, 6.5)));
        assert_eq!(quarter_means(&v[..3]), None);
    }

    #[test]
    fn loops_examples() {
        // x = (2, 0), y = (0, 2) on the disk
        let (tx, ty) = (c(2.0, 0.0), c(0.0, 2.0));
        let lhs = (tx.re * ty.im - tx.im * ty.re).abs();
        let rhs = tx.norm().min(ty.norm()) * (tx - ty).norm();
        assert_eq!(lhs, 4.0);
        assert!((rhs - 4.0 * 2f64.sqrt()).abs() < 1e-15);

        let rep = check_loops_inequalities(&ExteriorMapSpec::disk(), 2000, 1).unwrap();
        assert_eq!(rep.derivative_ratio_sup, 0.0);
        assert!(rep.max_cross_ratio <= 1.0 + 1e-12);
        let rep =
            check_loops_inequalities(&ExteriorMapSpec::ellipse(0.5).unwrap(), 2000, 1).unwrap();
        assert!(rep.derivative_ratio_sup.is_finite() && rep.derivative_ratio_sup > 0.0);
    }

    proptest! {
        #[test]
        fn min_log_matches_brute_force(
            pts in proptest::collection::vec((0.0f64..3.0, 0.0f64..std::f64::consts::TAU, 0.0f64..2.0), 0..12)
        ) {
            let pos: Vec<Complex64> = pts.iter().map(|p| Complex64::from_polar(p.0.exp(), p.1)).collect();
            let g: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let radii: Vec<f64> = pos.iter().map(|z| z.norm()).collect();
            let got = min_log_pair_moment(&disk(0.0, 0.0), &ens(pos, g.clone())).unwrap();
            prop_assert!((got - min_log_oracle(&radii, &g)).abs() <= 1e-10 * (1.0 + got.abs()));
        }

        #[test]
        fn weighted_moment_holder_bound(
            pts in proptest::collection::vec((0.0f64..3.0, 0.0f64..std::f64::consts::TAU, 0.0f64..2.0), 1..12)
        ) {
            let pos: Vec<Complex64> = pts.iter().map(|p| Complex64::from_polar(p.0.exp(), p.1)).collect();
            let g: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let max_log = pos.iter().map(|z| z.norm().ln()).fold(0.0, f64::max);
            let (j1, j2) = weighted_moments(&disk(0.0, 0.0), &ens(pos, g)).unwrap();
            prop_assert!(j1 >= 0.0 && j2 >= 0.0);
            prop_assert!(j2 <= j1 * max_log * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn tail_mass_nonincreasing_in_r(
            pts in proptest::collection::vec((0.0f64..3.5, 0.0f64..std::f64::consts::TAU, 0.0f64..2.0), 1..12),
            lambda in 0.01f64..1.0,
            r in 1.01f64..30.0,
            dr in 0.0f64..10.0,
        ) {
            let pos: Vec<Complex64> = pts.iter().map(|p| Complex64::from_polar(p.0.exp(), p.1)).collect();
            let g: Vec<f64> = pts.iter().map(|p| p.2).collect();
            let e = ens(pos, g);
            let ctx = disk(0.0, 0.0);
            let a = smoothed_tail_mass(&ctx, &e, r, lambda).unwrap();
            let b = smoothed_tail_mass(&ctx, &e, r + dr, lambda).unwrap();
            prop_assert!(b <= a);
            // the recorded grid uses lambda(r) = 1/(4 log r), still monotone for r >= 2
            let f: Vec<f64> = TAIL_RADII
                .iter()
                .map(|&r| smoothed_tail_mass(&ctx, &e, r, tail_lambda(r)).unwrap())
                .collect();
            prop_assert!(f.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn theta_is_total(alpha in -1e6f64..1e6, m in 1e-9f64..1e6) {
            let t = theta_selector(alpha, m);
            prop_assert!(t == 1 || t == 2);
            prop_assert_eq!(t == 1, alpha > 0.0 && alpha <= m);
        }
    }
}
