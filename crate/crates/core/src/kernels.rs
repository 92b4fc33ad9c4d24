//! Green's function, harmonic field and the mapped Biot-Savart law.
//!
//! Everything is evaluated in the mapped plane `W = T(x)`, where the domain is
//! the exterior of the unit disk and the image of a source at `Y` sits at
//! `Y* = Y / |Y|^2`. For a planar vector `v`, the gradient pull-back through
//! `T` is `v DT^t`, which in complex form is multiplication by `conj(T'(x))`.
//! Hence a velocity `V^perp DT^t` is `i conj(T') V`.
//!
//! Blob regularization is applied in the mapped plane, `d^2 -> d^2 + delta^2`,
//! identically for the free-space and the image term.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::dynamics::VortexEnsemble;
use crate::error::{Error, Result};
use crate::geometry::{ExteriorMapSpec, MappedPoint, Point};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, PartialEq)]
pub struct KernelContext {
    pub map: ExteriorMapSpec,
    /// Circulation constant of the harmonic part of the flow.
    pub alpha: f64,
    /// Regularization length in the mapped plane.
    pub blob_delta: f64,
}

impl KernelContext {
    pub fn new(map: ExteriorMapSpec, alpha: f64, blob_delta: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::config("alpha", "must be finite"));
        }
        if !(blob_delta.is_finite() && blob_delta >= 0.0) {
            return Err(Error::config(
                "blob_delta",
                "must be finite and nonnegative",
            ));
        }
        Ok(Self {
            map,
            alpha,
            blob_delta,
        })
    }

    #[inline]
    fn delta2(&self) -> f64 {
        self.blob_delta * self.blob_delta
    }
}

/// A source in the mapped plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source {
    pub w: Complex64,
    pub w_image: Complex64,
    pub gamma: f64,
}

impl Source {
    pub fn new(w: Complex64, gamma: f64) -> Self {
        Self {
            w,
            w_image: w / w.norm_sqr(),
            gamma,
        }
    }
}

/// `G(x, y) = (1/2pi) log(|T(x) - T(y)| / (|T(x) - T(y)*| |T(y)|))`, unregularized.
pub fn green(ctx: &KernelContext, x: Point, y: Point) -> Result<f64> {
    let tx = ctx.map.forward_map(x)?;
    let ty = ctx.map.forward_map(y)?;
    let d = (tx - ty).norm();
    if d == 0.0 {
        return Err(Error::Singularity(format!(
            "green evaluated at coincident points {x}"
        )));
    }
    // |T(x) - T(y)*| |T(y)| = |T(x) conj(T(y)) - 1|, symmetric in x and y
    Ok((d / (tx * ty.conj() - 1.0).norm()).ln() / (2.0 * PI))
}

/// `H(x) = (1/2pi) DT^t(x) T(x)^perp / |T(x)|^2`, the harmonic field with unit
/// counterclockwise circulation.
pub fn harmonic_field(ctx: &KernelContext, x: Point) -> Result<Complex64> {
    let m = ctx.map.map_point(x)?;
    Ok(harmonic_at(&m))
}

#[inline]
pub(crate) fn harmonic_at(m: &MappedPoint) -> Complex64 {
    I * m.dt.conj() * m.w / (2.0 * PI * m.w.norm_sqr())
}

/// Velocity induced at `x` by a unit vortex at `y` together with its image.
pub fn bs_kernel(ctx: &KernelContext, x: Point, y: Point) -> Result<Complex64> {
    let mx = ctx.map.map_point(x)?;
    let ty = ctx.map.forward_map(y)?;
    if ctx.blob_delta == 0.0 && mx.w == ty {
        return Err(Error::Singularity(format!(
            "kernel evaluated at coincident points {x}"
        )));
    }
    let s = Source::new(ty, 1.0);
    Ok(pullback(&mx, pair_sum(mx.w, &[s], None, ctx.delta2())))
}

/// `sum_j gamma_j [ (X - Y_j)/(|X - Y_j|^2 + d2) - (X - Y_j*)/(|X - Y_j*|^2 + d2) ]`
/// in fixed source order, omitting the free-space term of `skip`.
#[inline]
pub(crate) fn pair_sum(
    x: Complex64,
    sources: &[Source],
    skip: Option<usize>,
    d2: f64,
) -> Complex64 {
    let mut acc_re = 0.0;
    let mut acc_im = 0.0;
    for (j, s) in sources.iter().enumerate() {
        let img = x - s.w_image;
        let inv_img = 1.0 / (img.norm_sqr() + d2);
        let mut re = -img.re * inv_img;
        let mut im = -img.im * inv_img;
        if skip != Some(j) {
            let free = x - s.w;
            let inv_free = 1.0 / (free.norm_sqr() + d2);
            re += free.re * inv_free;
            im += free.im * inv_free;
        }
        acc_re += s.gamma * re;
        acc_im += s.gamma * im;
    }
    Complex64::new(acc_re, acc_im)
}

/// Turns a mapped-plane sum into a physical velocity, `i conj(T') S / 2pi`.
#[inline]
pub(crate) fn pullback(m: &MappedPoint, sum: Complex64) -> Complex64 {
    I * m.dt.conj() * sum / (2.0 * PI)
}

/// Velocity at a mapped target from mapped sources, plus the harmonic part.
#[inline]
pub(crate) fn velocity_at(
    ctx: &KernelContext,
    target: &MappedPoint,
    sources: &[Source],
    skip: Option<usize>,
) -> Complex64 {
    pullback(target, pair_sum(target.w, sources, skip, ctx.delta2()))
        + ctx.alpha * harmonic_at(target)
}

/// Maps every particle of the ensemble.
pub fn map_ensemble(ctx: &KernelContext, ensemble: &VortexEnsemble) -> Result<Vec<MappedPoint>> {
    ensemble
        .positions()
        .iter()
        .map(|&z| ctx.map.map_point(z))
        .collect()
}

pub(crate) fn sources_of(mapped: &[MappedPoint], strengths: &[f64]) -> Vec<Source> {
    mapped
        .iter()
        .zip(strengths)
        .map(|(m, &g)| Source::new(m.w, g))
        .collect()
}

/// `u(x) = sum_j gamma_j K_delta(x, x_j) + alpha H(x)`.
///
/// With `skip = Some(i)` the free-space term of particle `i` is dropped while
/// its image term is kept, which is the self-interaction rule used to advect
/// particle `i`.
pub fn velocity(
    ctx: &KernelContext,
    ensemble: &VortexEnsemble,
    x: Point,
    skip: Option<usize>,
) -> Result<Complex64> {
    let target = ctx.map.map_point(x)?;
    let mapped = map_ensemble(ctx, ensemble)?;
    if ctx.blob_delta == 0.0 {
        if let Some(j) = mapped
            .iter()
            .enumerate()
            .position(|(j, m)| m.w == target.w && skip != Some(j))
        {
            return Err(Error::Singularity(format!(
                "velocity evaluated on particle {j} with zero blob radius"
            )));
        }
    }
    let sources = sources_of(&mapped, ensemble.strengths());
    Ok(velocity_at(ctx, &target, &sources, skip))
}

/// Velocities at many physical points, parallel over targets.
pub fn velocity_field(
    ctx: &KernelContext,
    ensemble: &VortexEnsemble,
    points: &[Point],
) -> Result<Vec<Complex64>> {
    let mapped = map_ensemble(ctx, ensemble)?;
    let sources = sources_of(&mapped, ensemble.strengths());
    points
        .par_iter()
        .map(|&x| {
            let t = ctx.map.map_point(x)?;
            Ok(velocity_at(ctx, &t, &sources, None))
        })
        .collect()
}

/// `psi(x) = sum_j gamma_j G_delta(x, x_j)`.
pub fn stream_at(ctx: &KernelContext, ensemble: &VortexEnsemble, x: Point) -> Result<f64> {
    if ensemble.is_empty() {
        return Ok(0.0);
    }
    let tx = ctx.map.forward_map(x)?;
    let d2 = ctx.delta2();
    let mut psi = 0.0;
    for (&z, &g) in ensemble.positions().iter().zip(ensemble.strengths()) {
        let ty = ctx.map.forward_map(z)?;
        let free = (tx - ty).norm_sqr();
        if d2 == 0.0 && free == 0.0 {
            return Err(Error::Singularity(format!(
                "stream function evaluated on a particle at {z}"
            )));
        }
        let img = (tx - ty / ty.norm_sqr()).norm_sqr();
        psi += g * ((free + d2).ln() - (img + d2).ln() - ty.norm_sqr().ln());
    }
    Ok(psi / (4.0 * PI))
}

/// Empirical probe of `sup_x sum_j gamma_j / |T(x) - T(x_j)|` over random
/// points of the mapped annulus `1 <= |W| <= 1.5 max_j |T(x_j)|`.
pub fn inverse_distance_probe<R: Rng>(
    ctx: &KernelContext,
    ensemble: &VortexEnsemble,
    n_points: usize,
    rng: &mut R,
) -> Result<f64> {
    let mapped = map_ensemble(ctx, ensemble)?;
    let r_out = 1.5 * mapped.iter().map(|m| m.w.norm()).fold(1.0, f64::max);
    let mut sup = 0.0f64;
    let mut drawn = 0;
    while drawn < n_points {
        let w = Complex64::new(rng.gen_range(-r_out..r_out), rng.gen_range(-r_out..r_out));
        if w.norm() < 1.0 || w.norm() > r_out {
            continue;
        }
        drawn += 1;
        let s: f64 = mapped
            .iter()
            .zip(ensemble.strengths())
            .map(|(m, &g)| g / (w - m.w).norm())
            .sum();
        sup = sup.max(s);
    }
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{jacobian_of, perp, row_mul, transpose};
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn disk_ctx(alpha: f64, delta: f64) -> KernelContext {
        KernelContext::new(ExteriorMapSpec::disk(), alpha, delta).unwrap()
    }

    fn ellipse_ctx(alpha: f64, delta: f64) -> KernelContext {
        KernelContext::new(ExteriorMapSpec::ellipse(0.5).unwrap(), alpha, delta).unwrap()
    }

    fn general_map() -> ExteriorMapSpec {
        ExteriorMapSpec::new(1.3, vec![c(0.2, -0.1), c(0.3, 0.1), c(0.0, 0.05)]).unwrap()
    }

    /// Direct evaluation of the exterior-disk Biot-Savart bracket for a unit
    /// vortex, written from scratch in real arithmetic.
    fn disk_bracket(x: (f64, f64), y: (f64, f64)) -> (f64, f64) {
        let ny = y.0 * y.0 + y.1 * y.1;
        let ys = (y.0 / ny, y.1 / ny);
        let a = (x.0 - y.0, x.1 - y.1);
        let b = (x.0 - ys.0, x.1 - ys.1);
        let na = a.0 * a.0 + a.1 * a.1;
        let nb = b.0 * b.0 + b.1 * b.1;
        let k = 1.0 / (2.0 * PI);
        (k * (-a.1 / na + b.1 / nb), k * (a.0 / na - b.0 / nb))
    }

    #[test]
    fn green_examples() {
        let ctx = disk_ctx(0.0, 0.0);
        assert!(green(&ctx, c(2.0, 0.0), c(0.0, 1.0)).unwrap().abs() < 1e-15);
        let g = green(&ctx, c(2.0, 0.0), c(0.0, 3.0)).unwrap();
        assert!((g - (13.0f64 / 37.0).ln() / (4.0 * PI)).abs() < 1e-14);
        assert!((g + 0.08324).abs() < 1e-5);
        assert!(matches!(
            green(&ctx, c(2.0, 0.0), c(2.0, 0.0)),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn harmonic_field_disk() {
        let ctx = disk_ctx(0.0, 0.0);
        let h = harmonic_field(&ctx, c(2.0, 0.0)).unwrap();
        assert!(h.re.abs() < 1e-17 && (h.im - 1.0 / (4.0 * PI)).abs() < 1e-15);
        for k in 0..16 {
            let x = Complex64::from_polar(1.0, 0.3 * k as f64);
            let h = harmonic_field(&ctx, x).unwrap();
            assert!((h.re * x.re + h.im * x.im).abs() < 1e-16);
        }
    }

    /// Midpoint rule on the polygon through `S(2 e^{i theta_k})`.
    fn circulation_of_h(map: ExteriorMapSpec) -> f64 {
        let ctx = KernelContext::new(map, 0.0, 0.0).unwrap();
        let n = 4096;
        let at = |k: f64| {
            ctx.map
                .s(Complex64::from_polar(2.0, 2.0 * PI * k / n as f64))
        };
        (0..n)
            .map(|k| {
                let k = k as f64;
                let ds = at(k + 1.0) - at(k);
                let h = harmonic_field(&ctx, (at(k + 1.0) + at(k)) / 2.0).unwrap();
                h.re * ds.re + h.im * ds.im
            })
            .sum()
    }

    #[test]
    fn harmonic_field_has_unit_circulation() {
        for map in [
            ExteriorMapSpec::disk(),
            ExteriorMapSpec::ellipse(0.5).unwrap(),
            general_map(),
        ] {
            let circ = circulation_of_h(map);
            assert!((circ - 1.0).abs() < 1e-3, "circulation {circ}");
        }
    }

    #[test]
    fn harmonic_field_is_tangent_on_ellipse() {
        let ctx = ellipse_ctx(0.0, 0.0);
        for k in 0..32 {
            let w = Complex64::from_polar(1.0, 0.2 * k as f64);
            let normal = ctx.map.s_prime(w) * w;
            let h = harmonic_field(&ctx, ctx.map.s(w)).unwrap();
            assert!((h.re * normal.re + h.im * normal.im).abs() < 1e-10 * h.norm() * normal.norm());
        }
    }

    #[test]
    fn disk_kernel_matches_direct_formula() {
        let ctx = disk_ctx(0.0, 0.0);
        let k = bs_kernel(&ctx, c(2.0, 0.0), c(0.0, 2.0)).unwrap();
        let (ex, ey) = disk_bracket((2.0, 0.0), (0.0, 2.0));
        assert!((k.re - ex).abs() < 1e-15 && (k.im - ey).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = Complex64::from_polar(rng.gen_range(1.0..6.0), rng.gen_range(0.0..2.0 * PI));
            let y = Complex64::from_polar(rng.gen_range(1.0..6.0), rng.gen_range(0.0..2.0 * PI));
            let k = bs_kernel(&ctx, x, y).unwrap();
            let (ex, ey) = disk_bracket((x.re, x.im), (y.re, y.im));
            assert!((k.re - ex).abs() <= 1e-12 && (k.im - ey).abs() <= 1e-12);
        }
    }

    #[test]
    fn row_and_transpose_forms_agree_on_the_disk() {
        // (v DT)^perp versus v^perp DT^t
        let map = ExteriorMapSpec::disk();
        let j = map.jacobian(c(1.7, -2.2)).unwrap();
        let v = c(0.3, -1.1);
        let a = perp(row_mul(v, &j));
        let b = row_mul(perp(v), &transpose(&j));
        assert!((a - b).norm() < 1e-15);
    }

    #[test]
    fn transpose_form_is_the_gradient_pullback() {
        // The fast complex path equals v^perp DT^t computed with matrices.
        let ctx = ellipse_ctx(0.0, 0.0);
        let x = c(1.9, 0.8);
        let y = c(-0.4, 1.6);
        let tx = ctx.map.forward_map(x).unwrap();
        let ty = ctx.map.forward_map(y).unwrap();
        let dtt = transpose(&jacobian_of(ctx.map.map_derivative(x).unwrap()));
        let a = tx - ty;
        let b = tx - ty / ty.norm_sqr();
        let expect = (row_mul(perp(a), &dtt) / a.norm_sqr()
            - row_mul(perp(b), &dtt) / b.norm_sqr())
            / (2.0 * PI);
        let k = bs_kernel(&ctx, x, y).unwrap();
        assert!((k - expect).norm() < 1e-14);
    }

    #[test]
    fn kernel_is_tangent_near_the_boundary() {
        for ctx in [
            disk_ctx(0.0, 0.0),
            ellipse_ctx(0.0, 0.0),
            KernelContext::new(general_map(), 0.0, 0.0).unwrap(),
        ] {
            for k in 0..24 {
                let th = 0.26 * k as f64;
                let wb = Complex64::from_polar(1.0, th);
                let x = ctx.map.s(Complex64::from_polar(1.0 + 1e-4, th));
                let normal = ctx.map.s_prime(wb) * wb;
                let normal = normal / normal.norm();
                let y = ctx.map.s(Complex64::from_polar(2.5, th + 1.0));
                let kv = bs_kernel(&ctx, x, y).unwrap();
                let kn = kv.re * normal.re + kv.im * normal.im;
                assert!(kn.abs() <= 1e-2 * kv.norm(), "normal {kn} vs {}", kv.norm());
            }
        }
    }

    #[test]
    fn kernel_bounded_for_distant_sources() {
        let ctx = ellipse_ctx(0.0, 0.0);
        let x = c(2.0, 1.0);
        let norms: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&r| bs_kernel(&ctx, x, c(r, r)).unwrap().norm())
            .collect();
        assert!(norms.iter().all(|n| n.is_finite()));
        assert!((norms[1] - norms[2]).abs() < 1e-3 * norms[1].max(1e-12) + 1e-6);
    }

    #[test]
    fn velocity_examples() {
        let e = VortexEnsemble::new(vec![c(2.0, 0.0)], vec![2.0 * PI], 0.0, false).unwrap();
        let u = velocity(&disk_ctx(0.0, 0.0), &e, c(2.0, 0.0), Some(0)).unwrap();
        assert!(u.re.abs() < 1e-15 && (u.im + 2.0 / 3.0).abs() < 1e-15);
        let u = velocity(&disk_ctx(2.0 * PI, 0.0), &e, c(2.0, 0.0), Some(0)).unwrap();
        assert!(u.re.abs() < 1e-15 && (u.im + 1.0 / 6.0).abs() < 1e-15);
        let empty = VortexEnsemble::new(vec![], vec![], 0.0, false).unwrap();
        assert_eq!(
            velocity(&disk_ctx(0.0, 0.0), &empty, c(3.0, 1.0), None).unwrap(),
            c(0.0, 0.0)
        );
        assert!(matches!(
            velocity(&disk_ctx(0.0, 0.0), &e, c(2.0, 0.0), None),
            Err(Error::Singularity(_))
        ));
    }

    #[test]
    fn stream_examples() {
        let e = VortexEnsemble::new(vec![c(0.0, 3.0)], vec![1.0], 0.0, false).unwrap();
        let psi = stream_at(&disk_ctx(0.0, 0.0), &e, c(2.0, 0.0)).unwrap();
        assert!(
            (psi - green(&disk_ctx(0.0, 0.0), c(2.0, 0.0), c(0.0, 3.0)).unwrap()).abs() < 1e-15
        );
        assert!((psi + 0.08324).abs() < 1e-5);
        let empty = VortexEnsemble::new(vec![], vec![], 0.0, false).unwrap();
        assert_eq!(
            stream_at(&disk_ctx(0.0, 0.0), &empty, c(2.0, 0.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn stream_vanishes_on_boundary() {
        let e = VortexEnsemble::new(vec![c(2.5, 0.3), c(-1.0, 2.0)], vec![0.7, 0.3], 0.0, false)
            .unwrap();
        for ctx in [ellipse_ctx(0.0, 0.0), disk_ctx(0.0, 0.0)] {
            for k in 0..12 {
                let x = ctx.map.boundary_point(0.5 * k as f64);
                assert!(stream_at(&ctx, &e, x).unwrap().abs() < 1e-10);
            }
        }
        // O(delta^2) once regularized
        for delta in [0.1, 0.05] {
            let ctx = ellipse_ctx(0.0, delta);
            let worst = (0..12)
                .map(|k| {
                    stream_at(&ctx, &e, ctx.map.boundary_point(0.5 * k as f64))
                        .unwrap()
                        .abs()
                })
                .fold(0.0, f64::max);
            assert!(worst < delta * delta, "{worst}");
        }
    }

    fn loop_integral(
        ctx: &KernelContext,
        e: &VortexEnsemble,
        center: Complex64,
        half: f64,
        normal_flux: bool,
    ) -> f64 {
        let n_side = 2000;
        let corners = [
            c(-half, -half),
            c(half, -half),
            c(half, half),
            c(-half, half),
        ];
        let mut pts = Vec::new();
        for k in 0..4 {
            let a = corners[k];
            let b = corners[(k + 1) % 4];
            for i in 0..n_side {
                pts.push((
                    center + a + (b - a) * ((i as f64 + 0.5) / n_side as f64),
                    (b - a) / n_side as f64,
                ));
            }
        }
        let xs: Vec<Complex64> = pts.iter().map(|p| p.0).collect();
        let us = velocity_field(ctx, e, &xs).unwrap();
        us.iter()
            .zip(&pts)
            .map(|(u, (_, ds))| {
                let dir = if normal_flux { c(ds.im, -ds.re) } else { *ds };
                u.re * dir.re + u.im * dir.im
            })
            .sum()
    }

    #[test]
    fn circulation_around_a_blob() {
        let delta = 0.05;
        let ctx = disk_ctx(0.0, delta);
        let e = VortexEnsemble::new(
            vec![c(3.0, 0.0), c(-3.0, 1.0)],
            vec![0.8, 0.5],
            delta,
            false,
        )
        .unwrap();
        // algebraic blob: a disk of mapped radius rho carries rho^2 / (rho^2 + delta^2)
        // of the strength, so 5% needs a square of side ~ 10 delta
        let circ = loop_integral(&ctx, &e, c(3.0, 0.0), 6.0 * delta, false);
        assert!((circ - 0.8).abs() < 0.05 * 0.8, "{circ}");
        let circ = loop_integral(&ctx, &e, c(3.0, 0.0), 2.0 * delta, false);
        assert!(circ > 0.8 * 0.8 && circ < 0.8 * 0.9, "{circ}");
    }

    #[test]
    fn divergence_free() {
        let ctx = ellipse_ctx(0.7, 0.02);
        let e = VortexEnsemble::new(vec![c(2.0, 0.5), c(0.0, 1.5)], vec![1.0, 0.4], 0.02, false)
            .unwrap();
        for center in [c(2.5, 1.5), c(-2.0, -1.0), c(0.0, -2.0)] {
            let flux = loop_integral(&ctx, &e, center, 0.3, true);
            assert!(flux.abs() < 1e-6, "{flux}");
        }
    }

    #[test]
    fn velocity_decays_like_inverse_square() {
        let ctx = ellipse_ctx(0.0, 0.0);
        let e = VortexEnsemble::new(vec![c(2.0, 0.5), c(0.0, 1.5)], vec![1.0, 0.4], 0.0, false)
            .unwrap();
        let u50 = velocity(&ctx, &e, c(50.0, 0.0), None).unwrap().norm();
        let u100 = velocity(&ctx, &e, c(100.0, 0.0), None).unwrap().norm();
        let ratio = u50 / u100;
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn inverse_distance_probe_is_finite() {
        let ctx = ellipse_ctx(1.0, 0.0);
        let e = VortexEnsemble::new(vec![c(2.0, 0.5), c(0.0, 1.5)], vec![0.6, 0.4], 0.0, false)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sup = inverse_distance_probe(&ctx, &e, 100, &mut rng).unwrap();
        assert!(sup.is_finite() && sup > 0.0);
    }

    proptest! {
        #[test]
        fn green_is_symmetric_and_nonpositive(
            r1 in 1.0f64..8.0, a1 in 0.0f64..std::f64::consts::TAU, r2 in 1.0f64..8.0, a2 in 0.0f64..std::f64::consts::TAU
        ) {
            for map in [ExteriorMapSpec::disk(), ExteriorMapSpec::ellipse(0.5).unwrap(), general_map()] {
                let ctx = KernelContext::new(map, 0.0, 0.0).unwrap();
                let x = ctx.map.s(Complex64::from_polar(r1, a1));
                let y = ctx.map.s(Complex64::from_polar(r2, a2));
                if (x - y).norm() < 1e-6 {
                    continue;
                }
                let gxy = green(&ctx, x, y).unwrap();
                let gyx = green(&ctx, y, x).unwrap();
                prop_assert!((gxy - gyx).abs() <= 1e-12);
                prop_assert!(gxy <= 1e-14);
            }
        }
    }
}
