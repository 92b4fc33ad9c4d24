//! Exterior conformal maps.
//!
//! A domain is described by the closed-form inverse of its exterior map,
//!
//! ```text
//! S(w) = w / beta + sum_{k=0}^{K} c_k w^{-k},    |w| >= 1,
//! ```
//!
//! so that the obstacle boundary is the image of the unit circle and the
//! forward map `T = S^{-1}` sends the fluid region onto `{|w| > 1}` with
//! `T(z) = beta z + h(z)`, `h` bounded. `T` itself is evaluated by Newton
//! iteration on `S(w) = z`.
//!
//! Points and planar vectors are stored as [`Complex64`]. The quarter turn
//! `a^perp = (-a2, a1)` is [`perp`].

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Point = Complex64;

/// Real 2x2 matrix, row major.
pub type Mat2 = [[f64; 2]; 2];

/// Counterclockwise quarter turn `(a1, a2) -> (-a2, a1)`.
#[inline]
pub fn perp(v: Complex64) -> Complex64 {
    Complex64::new(-v.im, v.re)
}

/// Inversion through the unit circle, `y -> y / |y|^2`.
#[inline]
pub fn inversion(y: Complex64) -> Complex64 {
    y / y.norm_sqr()
}

/// Row vector times matrix: `v M`.
#[inline]
pub fn row_mul(v: Complex64, m: &Mat2) -> Complex64 {
    Complex64::new(
        v.re * m[0][0] + v.im * m[1][0],
        v.re * m[0][1] + v.im * m[1][1],
    )
}

#[inline]
pub fn transpose(m: &Mat2) -> Mat2 {
    [[m[0][0], m[1][0]], [m[0][1], m[1][1]]]
}

pub const DEFAULT_NEWTON_TOL: f64 = 1e-12;
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
const RESTARTS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct ExteriorMapSpec {
    beta: f64,
    inverse_coeffs: Vec<Complex64>,
    newton_tol: f64,
    newton_max_iter: usize,
}

/// A point of the fluid region together with its image and the map
/// derivative there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MappedPoint {
    pub z: Point,
    /// `T(z)`
    pub w: Complex64,
    /// `T'(z)`
    pub dt: Complex64,
}

impl ExteriorMapSpec {
    pub fn new(beta: f64, inverse_coeffs: Vec<Complex64>) -> Result<Self> {
        Self::with_newton(
            beta,
            inverse_coeffs,
            DEFAULT_NEWTON_TOL,
            DEFAULT_NEWTON_MAX_ITER,
        )
    }

    pub fn with_newton(
        beta: f64,
        inverse_coeffs: Vec<Complex64>,
        newton_tol: f64,
        newton_max_iter: usize,
    ) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidMap(format!(
                "leading coefficient beta must be real and positive, got {beta}"
            )));
        }
        if inverse_coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidMap(
                "inverse coefficients must be finite".into(),
            ));
        }
        if !(newton_tol.is_finite() && newton_tol > 0.0) {
            return Err(Error::InvalidMap(format!(
                "newton_tol must be positive, got {newton_tol}"
            )));
        }
        if newton_max_iter == 0 {
            return Err(Error::InvalidMap(
                "newton_max_iter must be at least 1".into(),
            ));
        }
        Ok(Self {
            beta,
            inverse_coeffs,
            newton_tol,
            newton_max_iter,
        })
    }

    /// Exterior of the unit disk, `T = Id`.
    pub fn disk() -> Self {
        Self::new(1.0, Vec::new()).expect("disk map is valid")
    }

    /// Exterior of an ellipse via the Joukowski-type map `S(w) = w + c/w`,
    /// `0 < c < 1`.
    pub fn ellipse(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidMap(format!(
                "ellipse parameter must lie in (0, 1), got {c}"
            )));
        }
        Self::new(1.0, vec![Complex64::new(0.0, 0.0), Complex64::new(c, 0.0)])
    }

    /// Parses `"disk"` or `"ellipse:<c>"`.
    pub fn preset(name: &str) -> Result<Self> {
        let name = name.trim();
        if name == "disk" {
            return Ok(Self::disk());
        }
        if let Some(c) = name.strip_prefix("ellipse:") {
            let c: f64 = c
                .trim()
                .parse()
                .map_err(|_| Error::InvalidMap(format!("bad ellipse parameter in `{name}`")))?;
            return Self::ellipse(c);
        }
        Err(Error::InvalidMap(format!("unknown map preset `{name}`")))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn inverse_coeffs(&self) -> &[Complex64] {
        &self.inverse_coeffs
    }

    pub fn newton_tol(&self) -> f64 {
        self.newton_tol
    }

    pub fn newton_max_iter(&self) -> usize {
        self.newton_max_iter
    }

    /// True when `S` is affine (no negative powers), in which case `T` is
    /// computed in closed form.
    pub fn is_affine(&self) -> bool {
        self.inverse_coeffs
            .iter()
            .skip(1)
            .all(|c| *c == Complex64::new(0.0, 0.0))
    }

    /// True for the unit disk itself, where `T` is the identity.
    pub fn is_unit_disk(&self) -> bool {
        self.beta == 1.0 && self.is_affine() && self.constant_term() == Complex64::new(0.0, 0.0)
    }

    fn constant_term(&self) -> Complex64 {
        self.inverse_coeffs.first().copied().unwrap_or_default()
    }

    /// `S(w)` without the `|w| >= 1` check.
    pub fn s(&self, w: Complex64) -> Complex64 {
        // Horner in 1/w over the tail, highest power first.
        let inv = w.inv();
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.inverse_coeffs.iter().skip(1).rev() {
            acc = (acc + c) * inv;
        }
        w / self.beta + self.constant_term() + acc
    }

    /// `S'(w)`.
    pub fn s_prime(&self, w: Complex64) -> Complex64 {
        let inv = w.inv();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pow = inv * inv;
        for (k, c) in self.inverse_coeffs.iter().enumerate().skip(1) {
            acc -= c * (k as f64) * pow;
            pow *= inv;
        }
        Complex64::new(1.0 / self.beta, 0.0) + acc
    }

    /// `S''(w)`.
    pub fn s_second(&self, w: Complex64) -> Complex64 {
        let inv = w.inv();
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pow = inv * inv * inv;
        for (k, c) in self.inverse_coeffs.iter().enumerate().skip(1) {
            acc += c * ((k * (k + 1)) as f64) * pow;
            pow *= inv;
        }
        acc
    }

    /// `T^{-1}(w) = S(w)` for `|w| >= 1`.
    pub fn inverse_map(&self, w: Complex64) -> Result<Point> {
        if w.norm() < 1.0 - 1e-12 {
            return Err(Error::InsideUnitDisk { w });
        }
        Ok(self.s(w))
    }

    /// Boundary point `S(e^{i theta})`.
    pub fn boundary_point(&self, theta: f64) -> Point {
        self.s(Complex64::from_polar(1.0, theta))
    }

    fn boundary_slack(&self) -> f64 {
        10.0 * self.newton_tol
    }

    /// `T(z)`.
    pub fn forward_map(&self, z: Point) -> Result<Complex64> {
        self.forward_map_seeded(z, None)
    }

    /// `T(z)` with an optional Newton starting guess (typically the image of
    /// a nearby point), tried before the default seeds.
    pub fn forward_map_seeded(&self, z: Point, guess: Option<Complex64>) -> Result<Complex64> {
        if !z.is_finite() {
            return Err(Error::InversionFailure { z });
        }
        if self.is_affine() {
            let w = (z - self.constant_term()) * self.beta;
            return if w.norm() >= 1.0 - self.boundary_slack() {
                Ok(w)
            } else {
                Err(Error::InsideObstacle { z })
            };
        }

        let mut saw_interior = false;
        let mut try_seed = |seed: Complex64| -> Option<Complex64> {
            match self.newton(z, seed) {
                Some(w) if w.norm() >= 1.0 - self.boundary_slack() => Some(w),
                Some(_) => {
                    saw_interior = true;
                    None
                }
                None => None,
            }
        };

        if let Some(g) = guess {
            if let Some(w) = try_seed(g) {
                return Ok(w);
            }
        }
        if let Some(w) = try_seed(z * self.beta) {
            return Ok(w);
        }
        let radius = (self.beta * z.norm()).max(1.05);
        for k in 0..RESTARTS {
            let seed = Complex64::from_polar(radius, 2.0 * PI * k as f64 / RESTARTS as f64);
            if let Some(w) = try_seed(seed) {
                return Ok(w);
            }
        }
        if saw_interior {
            Err(Error::InsideObstacle { z })
        } else {
            Err(Error::InversionFailure { z })
        }
    }

    fn newton(&self, z: Point, seed: Complex64) -> Option<Complex64> {
        let tol = self.newton_tol.max(4.0 * f64::EPSILON * z.norm());
        let mut w = seed;
        for _ in 0..self.newton_max_iter {
            if !w.is_finite() || w.norm_sqr() < 1e-300 {
                return None;
            }
            let r = self.s(w) - z;
            if r.norm() <= tol {
                // one polishing step, kept only if it does not hurt
                let d = self.s_prime(w);
                let polished = w - r / d;
                if polished.is_finite() && (self.s(polished) - z).norm() <= r.norm() {
                    return Some(polished);
                }
                return Some(w);
            }
            let d = self.s_prime(w);
            if d.norm_sqr() == 0.0 || !d.is_finite() {
                return None;
            }
            w -= r / d;
        }
        if w.is_finite() && (self.s(w) - z).norm() <= tol {
            Some(w)
        } else {
            None
        }
    }

    /// `T'(z) = 1 / S'(T(z))`.
    pub fn map_derivative(&self, z: Point) -> Result<Complex64> {
        Ok(self.map_point(z)?.dt)
    }

    /// Real Jacobian `[[a, b], [-b, a]]` for `T'(z) = a + ib`, acting on row
    /// vectors: `v -> v DT` is the push-forward `T'(z) v`.
    pub fn jacobian(&self, z: Point) -> Result<Mat2> {
        Ok(jacobian_of(self.map_derivative(z)?))
    }

    pub fn map_point(&self, z: Point) -> Result<MappedPoint> {
        self.map_point_seeded(z, None)
    }

    pub fn map_point_seeded(&self, z: Point, guess: Option<Complex64>) -> Result<MappedPoint> {
        let w = self.forward_map_seeded(z, guess)?;
        Ok(MappedPoint {
            z,
            w,
            dt: self.s_prime(w).inv(),
        })
    }
}

/// `[[a, b], [-b, a]]` for `d = a + ib`.
pub fn jacobian_of(d: Complex64) -> Mat2 {
    [[d.re, d.im], [-d.im, d.re]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapValidationReport {
    /// sup |h'(z)| |z|^2 over the grid
    pub max_h_prime_times_z2: f64,
    /// sup |h''(z)| |z|^3 over the grid
    pub max_h_second_times_z3: f64,
    /// sup |T'|, the operator norm of DT
    pub max_dt_norm: f64,
    /// sup 1/|T'|, the operator norm of DT^{-1}
    pub max_dt_inv_norm: f64,
    /// min |S'| over the grid
    pub min_s_prime: f64,
    pub injectivity_ok: bool,
}

impl MapValidationReport {
    pub fn all_finite(&self) -> bool {
        self.max_h_prime_times_z2.is_finite()
            && self.max_h_second_times_z3.is_finite()
            && self.max_dt_norm.is_finite()
            && self.max_dt_inv_norm.is_finite()
    }
}

const BOUNDARY_SAMPLES: usize = 1024;
const CRITICAL_POINT_FLOOR: f64 = 1e-8;

/// Samples `{1 <= |w| <= r_max}` on a log-radial grid of roughly `n_samples`
/// points and reports the decay constants of `h = T - beta z`, the Jacobian
/// norm bounds and a grid-level injectivity verdict.
///
/// Injectivity is judged from the boundary: `S` has a simple pole at infinity,
/// so it is univalent on `{|w| >= 1}` exactly when the image of the unit
/// circle is a simple, positively oriented closed curve. The boundary polygon
/// is checked for orientation and self-intersections, and the grid for
/// critical points of `S`.
pub fn validate_map(spec: &ExteriorMapSpec, r_max: f64, n_samples: usize) -> MapValidationReport {
    let n_samples = n_samples.max(100);
    let r_max = r_max.max(1.0 + 1e-9);
    let n_r = ((n_samples as f64).sqrt().ceil() as usize).max(2);
    let n_theta = n_samples.div_ceil(n_r).max(4);
    let log_r_max = r_max.ln();

    let mut max_h1 = 0.0f64;
    let mut max_h2 = 0.0f64;
    let mut max_dt = 0.0f64;
    let mut max_dt_inv = 0.0f64;
    let mut min_sp = f64::INFINITY;
    for i in 0..n_r {
        let r = (log_r_max * i as f64 / (n_r - 1) as f64).exp();
        for j in 0..n_theta {
            let w = Complex64::from_polar(r, 2.0 * PI * j as f64 / n_theta as f64);
            let z = spec.s(w);
            let sp = spec.s_prime(w);
            let spp = spec.s_second(w);
            let t1 = sp.inv();
            let h1 = t1 - spec.beta;
            let h2 = -spp / (sp * sp * sp);
            let zn = z.norm();
            max_h1 = nan_max(max_h1, h1.norm() * zn * zn);
            max_h2 = nan_max(max_h2, h2.norm() * zn * zn * zn);
            max_dt = nan_max(max_dt, t1.norm());
            max_dt_inv = nan_max(max_dt_inv, sp.norm());
            min_sp = min_sp.min(sp.norm());
        }
    }

    let boundary: Vec<Complex64> = (0..BOUNDARY_SAMPLES)
        .map(|k| spec.boundary_point(2.0 * PI * k as f64 / BOUNDARY_SAMPLES as f64))
        .collect();
    let injectivity_ok = signed_area(&boundary) > 0.0
        && polygon_is_simple(&boundary)
        && min_sp > CRITICAL_POINT_FLOOR / spec.beta;

    MapValidationReport {
        max_h_prime_times_z2: max_h1,
        max_h_second_times_z3: max_h2,
        max_dt_norm: max_dt,
        max_dt_inv_norm: max_dt_inv,
        min_s_prime: min_sp,
        injectivity_ok,
    }
}

fn nan_max(acc: f64, v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        acc.max(v)
    }
}

fn signed_area(poly: &[Complex64]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a.re * b.im - b.re * a.im
        })
        .sum::<f64>()
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn segments_cross(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> bool {
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    (d1 * d2 <= 0.0) && (d3 * d4 <= 0.0)
}

/// Closed polygon without self-intersections (non-adjacent edges only).
fn polygon_is_simple(poly: &[Complex64]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        for j in (i + 2)..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_cross(a1, a2, b1, b2) {
                return false;
            }
        }
    }
    true
}
