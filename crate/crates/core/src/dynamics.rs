//! Blob discretization of the initial vorticity and RK4 transport.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::diagnostics::DiagnosticRecord;
use crate::error::{Error, Result};
use crate::geometry::{ExteriorMapSpec, MappedPoint, Point};
use crate::kernels::{sources_of, velocity_at, KernelContext};

/// Discretized vorticity.
///
/// In even-symmetric mode particles are stored in mirror pairs at indices
/// `(2k, 2k + 1)` with `x_{2k+1} = -x_{2k}` and equal strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct VortexEnsemble {
    positions: Vec<Point>,
    strengths: Vec<f64>,
    blob_delta: f64,
    even_symmetric: bool,
}

impl VortexEnsemble {
    pub fn new(
        positions: Vec<Point>,
        strengths: Vec<f64>,
        blob_delta: f64,
        even_symmetric: bool,
    ) -> Result<Self> {
        if positions.len() != strengths.len() {
            return Err(Error::InvalidEnsemble(format!(
                "{} positions but {} strengths",
                positions.len(),
                strengths.len()
            )));
        }
        if let Some(i) = strengths.iter().position(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidEnsemble(format!(
                "strength {i} is {} (must be finite and nonnegative)",
                strengths[i]
            )));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidEnsemble("non-finite position".into()));
        }
        if !(blob_delta.is_finite() && blob_delta >= 0.0) {
            return Err(Error::InvalidEnsemble(
                "blob_delta must be nonnegative".into(),
            ));
        }
        if even_symmetric {
            if positions.len() % 2 != 0 {
                return Err(Error::InvalidEnsemble(
                    "even-symmetric ensemble needs an even particle count".into(),
                ));
            }
            for k in (0..positions.len()).step_by(2) {
                if positions[k + 1] != -positions[k] || strengths[k + 1] != strengths[k] {
                    return Err(Error::InvalidEnsemble(format!(
                        "particles {k} and {} are not a mirror pair",
                        k + 1
                    )));
                }
            }
        }
        Ok(Self {
            positions,
            strengths,
            blob_delta,
            even_symmetric,
        })
    }

    pub fn positions(&self) -> &[Point] {
        &self.positions
    }

    pub fn strengths(&self) -> &[f64] {
        &self.strengths
    }

    pub fn blob_delta(&self) -> f64 {
        self.blob_delta
    }

    pub fn even_symmetric(&self) -> bool {
        self.even_symmetric
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Total circulation `m = sum gamma_i`.
    pub fn mass(&self) -> f64 {
        self.strengths.iter().sum()
    }

    pub fn mirror(&self, i: usize) -> Option<usize> {
        self.even_symmetric.then_some(i ^ 1)
    }

    /// Checks that every particle is strictly outside the obstacle.
    pub fn check_exterior(&self, map: &ExteriorMapSpec) -> Result<()> {
        for (i, &z) in self.positions.iter().enumerate() {
            match map.forward_map(z) {
                Ok(w) if w.norm() > 1.0 => {}
                Ok(_) | Err(Error::InsideObstacle { .. }) => {
                    return Err(Error::InvalidEnsemble(format!(
                        "particle {i} at {z} is not strictly exterior"
                    )))
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    fn with_positions(&self, positions: Vec<Point>) -> Self {
        Self {
            positions,
            strengths: self.strengths.clone(),
            blob_delta: self.blob_delta,
            even_symmetric: self.even_symmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Uniform,
    /// `(1 + cos(pi r / R)) / 2` on `r <= R`.
    CosineBump,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Uniform => "uniform",
            Profile::CosineBump => "cosine-bump",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "uniform" => Some(Profile::Uniform),
            "cosine-bump" => Some(Profile::CosineBump),
            _ => None,
        }
    }

    fn value(self, r: f64, radius: f64) -> f64 {
        match self {
            Profile::Uniform => 1.0,
            Profile::CosineBump => 0.5 * (1.0 + (PI * r / radius).cos()),
        }
    }
}

/// A compactly supported vorticity patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSpec {
    pub center: Point,
    pub radius: f64,
    pub profile: Profile,
    pub total_mass: f64,
    /// Cells per side of the discretization grid.
    pub grid_n: usize,
}

impl PatchSpec {
    pub fn spacing(&self) -> f64 {
        2.0 * self.radius / self.grid_n as f64
    }

    fn is_mirror_of(&self, other: &PatchSpec) -> bool {
        self.center == -other.center
            && self.radius == other.radius
            && self.profile == other.profile
            && self.total_mass == other.total_mass
            && self.grid_n == other.grid_n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub map: ExteriorMapSpec,
    pub patches: Vec<PatchSpec>,
    /// Circulation of the initial velocity around the obstacle.
    pub boundary_circulation: f64,
    pub dt: f64,
    pub t_end: f64,
    pub diagnostic_stride: usize,
    pub blob_delta: f64,
    pub even_symmetric: bool,
    pub seed: u64,
}

impl SimulationConfig {
    /// Number of RK4 steps, `floor(t_end / dt)` up to rounding noise.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt + 1e-9).floor() as usize
    }
}

const BOUNDARY_PROBE: usize = 4096;

/// Verifies that the closed disk of the patch lies strictly in the fluid.
pub fn check_patch(map: &ExteriorMapSpec, patch: &PatchSpec, index: usize) -> Result<()> {
    match map.forward_map(patch.center) {
        Ok(w) if w.norm() > 1.0 => {}
        Ok(_) | Err(Error::InsideObstacle { .. }) => {
            return Err(Error::PatchIntersectsObstacle { index })
        }
        Err(e) => return Err(e),
    }
    let gap = (0..BOUNDARY_PROBE)
        .map(|k| {
            (map.boundary_point(2.0 * PI * k as f64 / BOUNDARY_PROBE as f64) - patch.center).norm()
        })
        .fold(f64::INFINITY, f64::min);
    if gap <= patch.radius {
        return Err(Error::PatchIntersectsObstacle { index });
    }
    Ok(())
}

fn check_patch_shape(patch: &PatchSpec, index: usize) -> Result<()> {
    let key = |f: &str| format!("patch[{index}].{f}");
    if !(patch.radius.is_finite() && patch.radius > 0.0) {
        return Err(Error::config(key("radius"), "must be positive"));
    }
    if !(patch.total_mass.is_finite() && patch.total_mass > 0.0) {
        return Err(Error::config(key("mass"), "must be positive"));
    }
    if patch.grid_n == 0 {
        return Err(Error::config(key("grid_n"), "must be at least 1"));
    }
    if !patch.center.is_finite() {
        return Err(Error::config(key("center"), "must be finite"));
    }
    Ok(())
}

/// Cell-center quadrature of one patch, rescaled to its total mass.
fn discretize_patch(patch: &PatchSpec) -> Vec<(Point, f64)> {
    let n = patch.grid_n;
    let h = patch.spacing();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let offset = Complex64::new(
                -patch.radius + (i as f64 + 0.5) * h,
                -patch.radius + (j as f64 + 0.5) * h,
            );
            let r = offset.norm();
            if r > patch.radius {
                continue;
            }
            let gamma = patch.profile.value(r, patch.radius) * h * h;
            if gamma > 0.0 {
                out.push((patch.center + offset, gamma));
            }
        }
    }
    let total: f64 = out.iter().map(|p| p.1).sum();
    let scale = patch.total_mass / total;
    for p in &mut out {
        p.1 *= scale;
    }
    out
}

/// Lays blobs on the patches. In even mode patches must come in mirror pairs;
/// one patch of each pair is discretized and its particles are mirrored.
pub fn discretize(
    map: &ExteriorMapSpec,
    patches: &[PatchSpec],
    blob_delta: f64,
    even_symmetric: bool,
) -> Result<VortexEnsemble> {
    for (i, p) in patches.iter().enumerate() {
        check_patch_shape(p, i)?;
        check_patch(map, p, i)?;
    }
    let mut positions = Vec::new();
    let mut strengths = Vec::new();
    if even_symmetric {
        let mut used = vec![false; patches.len()];
        for i in 0..patches.len() {
            if used[i] {
                continue;
            }
            let partner = (i + 1..patches.len())
                .find(|&j| !used[j] && patches[j].is_mirror_of(&patches[i]))
                .ok_or_else(|| {
                    Error::config(
                        format!("patch[{i}]"),
                        "even-symmetric mode needs a mirror patch at -center",
                    )
                })?;
            used[i] = true;
            used[partner] = true;
            for (x, g) in discretize_patch(&patches[i]) {
                positions.push(x);
                positions.push(-x);
                strengths.push(g);
                strengths.push(g);
            }
        }
    } else {
        for p in patches {
            for (x, g) in discretize_patch(p) {
                positions.push(x);
                strengths.push(g);
            }
        }
    }
    let ensemble = VortexEnsemble::new(positions, strengths, blob_delta, even_symmetric)?;
    ensemble.check_exterior(map)?;
    Ok(ensemble)
}

/// `alpha = boundary circulation + m`, fixed at t = 0.
pub fn alpha_of(config: &SimulationConfig, ensemble: &VortexEnsemble) -> f64 {
    config.boundary_circulation + ensemble.mass()
}

/// RK4 integrator that carries the mapped positions of the previous stage as
/// Newton seeds.
pub struct Integrator<'a> {
    ctx: &'a KernelContext,
    seeds: Vec<Option<Complex64>>,
}

impl<'a> Integrator<'a> {
    pub fn new(ctx: &'a KernelContext) -> Self {
        Self {
            ctx,
            seeds: Vec::new(),
        }
    }

    fn map_all(&mut self, positions: &[Point], t: f64) -> Result<Vec<MappedPoint>> {
        if self.seeds.len() != positions.len() {
            self.seeds = vec![None; positions.len()];
        }
        let map = &self.ctx.map;
        let mapped: Vec<Result<MappedPoint>> = positions
            .par_iter()
            .zip(self.seeds.par_iter())
            .enumerate()
            .map(|(i, (&z, &seed))| match map.map_point_seeded(z, seed) {
                Ok(m) if m.w.norm() >= 1.0 => Ok(m),
                Ok(_) | Err(Error::InsideObstacle { .. }) => {
                    Err(Error::BoundaryPenetration { particle: i, t })
                }
                Err(e) => Err(e),
            })
            .collect();
        let mapped = mapped.into_iter().collect::<Result<Vec<_>>>()?;
        for (s, m) in self.seeds.iter_mut().zip(&mapped) {
            *s = Some(m.w);
        }
        Ok(mapped)
    }

    /// Velocities of the advanced particles (every particle, or the first of
    /// each mirror pair), evaluated against one frozen snapshot.
    fn rates(
        &mut self,
        ensemble: &VortexEnsemble,
        positions: &[Point],
        t: f64,
    ) -> Result<Vec<Complex64>> {
        let mapped = self.map_all(positions, t)?;
        let sources = sources_of(&mapped, ensemble.strengths());
        let stride = if ensemble.even_symmetric() { 2 } else { 1 };
        let ctx = self.ctx;
        Ok((0..positions.len())
            .into_par_iter()
            .step_by(stride)
            .map(|i| velocity_at(ctx, &mapped[i], &sources, Some(i)))
            .collect())
    }

    /// One classical RK4 step of size `dt` (negative values integrate
    /// backward). `t` only labels errors.
    pub fn step(&mut self, ensemble: &VortexEnsemble, dt: f64, t: f64) -> Result<VortexEnsemble> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(Error::config("dt", "must be finite and nonzero"));
        }
        let x0 = ensemble.positions();
        let even = ensemble.even_symmetric();
        let stage = |k: &[Complex64], c: f64| -> Vec<Point> { advance(x0, &[(k, c)], even) };

        let k1 = self.rates(ensemble, x0, t)?;
        let k2 = self.rates(ensemble, &stage(&k1, 0.5 * dt), t)?;
        let k3 = self.rates(ensemble, &stage(&k2, 0.5 * dt), t)?;
        let k4 = self.rates(ensemble, &stage(&k3, dt), t)?;
        let sixth = dt / 6.0;
        let x1 = advance(
            x0,
            &[
                (&k1, sixth),
                (&k2, 2.0 * sixth),
                (&k3, 2.0 * sixth),
                (&k4, sixth),
            ],
            even,
        );
        self.map_all(&x1, t)?;
        Ok(ensemble.with_positions(x1))
    }
}

/// `x0 + sum c k`, where `k` holds one rate per advanced particle; in even
/// mode the partner of each advanced particle is set to its exact negative.
fn advance(x0: &[Point], terms: &[(&[Complex64], f64)], even: bool) -> Vec<Point> {
    let mut out = x0.to_vec();
    let stride = if even { 2 } else { 1 };
    for (slot, i) in (0..x0.len()).step_by(stride).enumerate() {
        let mut x = x0[i];
        for (k, c) in terms {
            x += k[slot] * *c;
        }
        out[i] = x;
        if even {
            out[i + 1] = -x;
        }
    }
    out
}

/// Single RK4 step.
pub fn rk4_step(ctx: &KernelContext, ensemble: &VortexEnsemble, dt: f64) -> Result<VortexEnsemble> {
    Integrator::new(ctx).step(ensemble, dt, 0.0)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticRecord>,
    pub ensemble: VortexEnsemble,
    pub alpha: f64,
}

/// A failed run: the records gathered before the failure and the error.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub records: Vec<DiagnosticRecord>,
    /// Start time of the step that failed.
    pub t: f64,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at t = {}: {}", self.t, self.error)
    }
}

impl std::error::Error for RunFailure {}

pub fn run(config: &SimulationConfig) -> std::result::Result<RunOutput, RunFailure> {
    run_with_observer(config, |_, _| {})
}

/// Runs `config`, calling `observer(t, ensemble)` after every step (and once
/// at t = 0). Records are taken every `diagnostic_stride` steps at
/// `t = k dt`, starting with t = 0.
pub fn run_with_observer<F>(
    config: &SimulationConfig,
    mut observer: F,
) -> std::result::Result<RunOutput, RunFailure>
where
    F: FnMut(f64, &VortexEnsemble),
{
    let fail =
        |records: Vec<DiagnosticRecord>, t: f64, error: Error| RunFailure { records, t, error };
    let mut ensemble = discretize(
        &config.map,
        &config.patches,
        config.blob_delta,
        config.even_symmetric,
    )
    .map_err(|e| fail(Vec::new(), 0.0, e))?;
    let alpha = alpha_of(config, &ensemble);
    let ctx = KernelContext::new(config.map.clone(), alpha, config.blob_delta)
        .map_err(|e| fail(Vec::new(), 0.0, e))?;
    let stride = config.diagnostic_stride.max(1);

    let mut records = Vec::new();
    match DiagnosticRecord::compute(&ctx, &ensemble, 0.0) {
        Ok(r) => records.push(r),
        Err(e) => return Err(fail(records, 0.0, e)),
    }
    observer(0.0, &ensemble);

    let mut integrator = Integrator::new(&ctx);
    for k in 1..=config.n_steps() {
        let t_prev = (k - 1) as f64 * config.dt;
        let t = k as f64 * config.dt;
        ensemble = match integrator.step(&ensemble, config.dt, t_prev) {
            Ok(e) => e,
            Err(e) => return Err(fail(records, t_prev, e)),
        };
        observer(t, &ensemble);
        if k % stride == 0 {
            match DiagnosticRecord::compute(&ctx, &ensemble, t) {
                Ok(r) => records.push(r),
                Err(e) => return Err(fail(records, t, e)),
            }
        }
    }
    Ok(RunOutput {
        records,
        ensemble,
        alpha,
    })
}
