//! Riemannian gradient descent on (S²)ⁿ.
//!
//! Each iteration projects the Euclidean gradient onto the tangent space,
//! searches along the retracted anti-gradient curve and retracts.

use std::time::Instant;

use crate::diagnostics::{mapping_metrics, MappingMetrics};
use crate::energy::{energy_and_gradient, evaluate_energy};
use crate::error::{Error, Result};
use crate::linesearch::{initial_step, phi_derivative_at_zero, search, LineSearchOutcome, LineSearchParams, LineSearchStrategy};
use crate::mesh::SimplicialSurface;
use crate::sphere::{project_tangent, SphericalMapping, TangentField};
use crate::Vec3;

/// A smooth function on (S²)ⁿ driven by [`RgdDriver`].
pub trait Objective {
    fn value(&self, f: &SphericalMapping) -> Result<f64>;

    /// Value and Euclidean gradient.
    fn value_and_gradient(&self, f: &SphericalMapping) -> Result<(f64, Vec<Vec3>)>;

    /// Quantities written to every record.
    fn metrics(&self, f: &SphericalMapping) -> Result<MappingMetrics>;

    /// Extra stopping condition checked after every accepted step.
    fn target_reached(&self, _f: &SphericalMapping) -> bool {
        false
    }

    /// Quantity whose per-iteration decrease is tested for stalling.
    fn stall_measure(&self, _value: f64, metrics: &MappingMetrics) -> f64 {
        metrics.authalic
    }
}

/// E = |M| E_S / A(f).
pub struct NormalizedStretch<'a> {
    pub surface: &'a SimplicialSurface,
}

impl<'a> NormalizedStretch<'a> {
    pub fn new(surface: &'a SimplicialSurface) -> Self {
        Self { surface }
    }
}

impl Objective for NormalizedStretch<'_> {
    fn value(&self, f: &SphericalMapping) -> Result<f64> {
        Ok(evaluate_energy(self.surface, f.rows())?.normalized)
    }

    fn value_and_gradient(&self, f: &SphericalMapping) -> Result<(f64, Vec<Vec3>)> {
        let (report, grad) = energy_and_gradient(self.surface, f.rows())?;
        Ok((report.normalized, grad))
    }

    fn metrics(&self, f: &SphericalMapping) -> Result<MappingMetrics> {
        mapping_metrics(self.surface, f)
    }
}

/// grad E(f) = P_T(∇E(f)).
pub fn riemannian_gradient(surface: &SimplicialSurface, f: &SphericalMapping) -> Result<TangentField> {
    let (_, g) = energy_and_gradient(surface, f.rows())?;
    project_tangent(f, &g)
}

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once ‖grad E‖_F ≤ grad_tol; `None` means 1e−6·√n.
    pub grad_tol: Option<f64>,
    /// Stop once the stall measure decreases by less than this for
    /// `stall_window` consecutive iterations.
    pub energy_tol: f64,
    pub stall_window: usize,
    pub strategy: LineSearchStrategy,
    pub line_search: LineSearchParams,
    /// Log every this many iterations; 0 disables logging.
    pub log_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: None,
            energy_tol: 1e-12,
            stall_window: 3,
            strategy: LineSearchStrategy::Interpolant,
            line_search: LineSearchParams::default(),
            log_every: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if let Some(t) = self.grad_tol {
            if !(t >= 0.0) {
                return Err(Error::InvalidArgument(format!("grad_tol {t} is negative")));
            }
        }
        if !(self.energy_tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("energy_tol {} is negative", self.energy_tol)));
        }
        if self.stall_window == 0 {
            return Err(Error::InvalidArgument("stall_window must be at least 1".into()));
        }
        let ls = &self.line_search;
        if !(ls.c1 > 0.0 && ls.c1 < 1.0) {
            return Err(Error::InvalidArgument(format!("c1 {} outside (0, 1)", ls.c1)));
        }
        if !(ls.alpha_max > 0.0 && ls.alpha_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha_max {} must be positive", ls.alpha_max)));
        }
        Ok(())
    }

    pub fn grad_tol_for(&self, n: usize) -> f64 {
        self.grad_tol.unwrap_or(1e-6 * (n as f64).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RgdStatus {
    GradConverged,
    EnergyStalled,
    MaxIters,
    LineSearchFailed,
    /// The objective's own stopping condition fired.
    TargetReached,
}

impl RgdStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RgdStatus::GradConverged => "grad_converged",
            RgdStatus::EnergyStalled => "energy_stalled",
            RgdStatus::MaxIters => "max_iters",
            RgdStatus::LineSearchFailed => "line_search_failed",
            RgdStatus::TargetReached => "target_reached",
        }
    }
}

impl std::fmt::Display for RgdStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IterationRecord {
    /// 0 for the starting point.
    pub iter: usize,
    /// Objective value.
    pub value: f64,
    pub stretch: f64,
    pub image_area: f64,
    pub authalic: f64,
    pub normalized: f64,
    pub sd_over_mean: f64,
    /// ‖grad‖_F at this iterate.
    pub grad_norm: f64,
    /// Step that produced this iterate; 0 for the starting point.
    pub alpha: f64,
    pub folds: usize,
    /// Seconds since the solve started.
    pub elapsed: f64,
}

#[derive(Debug, Clone)]
pub struct RgdResult {
    pub f: SphericalMapping,
    pub initial: IterationRecord,
    /// One record per accepted iteration.
    pub records: Vec<IterationRecord>,
    pub status: RgdStatus,
}

impl RgdResult {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().unwrap_or(&self.initial)
    }
}

/// What one call of [`RgdDriver::step`] did.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// The mapping the step started from.
    pub from: SphericalMapping,
    pub direction: TangentField,
    pub search: LineSearchOutcome,
    pub record: IterationRecord,
}

/// Iteration state of one descent run.
pub struct RgdDriver<'a, O: Objective + ?Sized> {
    obj: &'a O,
    config: SolverConfig,
    grad_tol: f64,
    f: SphericalMapping,
    value: f64,
    egrad: Vec<Vec3>,
    rgrad: TangentField,
    prev_value: Option<f64>,
    stall_value: f64,
    stall_count: usize,
    start: Instant,
    initial: IterationRecord,
    records: Vec<IterationRecord>,
    status: Option<RgdStatus>,
}

impl<'a, O: Objective + ?Sized> RgdDriver<'a, O> {
    pub fn new(obj: &'a O, f0: SphericalMapping, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let start = Instant::now();
        let (value, egrad) = obj.value_and_gradient(&f0)?;
        let rgrad = project_tangent(&f0, &egrad)?;
        let metrics = obj.metrics(&f0)?;
        let initial = make_record(0, value, &metrics, rgrad.norm_fro(), 0.0, start);
        let grad_tol = config.grad_tol_for(f0.len());
        let mut driver = Self {
            obj,
            config,
            grad_tol,
            stall_value: obj.stall_measure(value, &metrics),
            f: f0,
            value,
            egrad,
            rgrad,
            prev_value: None,
            stall_count: 0,
            start,
            initial,
            records: Vec::new(),
            status: None,
        };
        if driver.initial.grad_norm <= grad_tol {
            driver.status = Some(RgdStatus::GradConverged);
        } else if obj.target_reached(&driver.f) {
            driver.status = Some(RgdStatus::TargetReached);
        }
        Ok(driver)
    }

    pub fn current(&self) -> &SphericalMapping {
        &self.f
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn gradient(&self) -> &TangentField {
        &self.rgrad
    }

    pub fn status(&self) -> Option<RgdStatus> {
        self.status
    }

    pub fn records(&self) -> &[IterationRecord] {
        &self.records
    }

    /// Performs one iteration. Returns `None` once the run has stopped.
    pub fn step(&mut self) -> Result<Option<StepReport>> {
        if self.status.is_some() {
            return Ok(None);
        }
        let d = self.rgrad.scaled(-1.0);
        let dphi0 = phi_derivative_at_zero(&self.f, &d, &self.egrad)?;
        if !(dphi0 < 0.0) {
            self.status = Some(RgdStatus::LineSearchFailed);
            return Ok(None);
        }
        let params = &self.config.line_search;
        let alpha0 = initial_step(self.prev_value, self.value, dphi0, params.alpha_max);
        let obj = self.obj;
        let phi = |g: &SphericalMapping| obj.value(g);
        let outcome = search(&phi, &self.f, &d, self.value, dphi0, alpha0, self.config.strategy, params)?;
        if !outcome.accepted {
            self.status = Some(RgdStatus::LineSearchFailed);
            return Ok(None);
        }

        let from = std::mem::replace(&mut self.f, outcome.f_new.clone());
        let (value, egrad) = self.obj.value_and_gradient(&self.f)?;
        self.prev_value = Some(self.value);
        self.value = value;
        self.egrad = egrad;
        self.rgrad = project_tangent(&self.f, &self.egrad)?;
        let metrics = self.obj.metrics(&self.f)?;
        let iter = self.records.len() + 1;
        let record = make_record(iter, value, &metrics, self.rgrad.norm_fro(), outcome.alpha, self.start);
        self.records.push(record);

        let stall = self.obj.stall_measure(value, &metrics);
        if self.stall_value - stall < self.config.energy_tol {
            self.stall_count += 1;
        } else {
            self.stall_count = 0;
        }
        self.stall_value = stall;

        if self.config.log_every > 0 && iter.is_multiple_of(self.config.log_every) {
            log::info!(
                "iter {iter}: E = {:.10e}, E_A = {:.6e}, |grad| = {:.3e}, alpha = {:.3e}, folds = {}",
                value,
                metrics.authalic,
                record.grad_norm,
                outcome.alpha,
                metrics.folds
            );
        }

        self.status = if record.grad_norm <= self.grad_tol {
            Some(RgdStatus::GradConverged)
        } else if self.obj.target_reached(&self.f) {
            Some(RgdStatus::TargetReached)
        } else if self.stall_count >= self.config.stall_window {
            Some(RgdStatus::EnergyStalled)
        } else if iter >= self.config.max_iters {
            Some(RgdStatus::MaxIters)
        } else {
            None
        };
        Ok(Some(StepReport {
            from,
            direction: d,
            search: outcome,
            record,
        }))
    }

    pub fn finish(self) -> RgdResult {
        RgdResult {
            f: self.f,
            initial: self.initial,
            records: self.records,
            status: self.status.unwrap_or(RgdStatus::MaxIters),
        }
    }

    pub fn run(mut self) -> Result<RgdResult> {
        while self.step()?.is_some() {}
        Ok(self.finish())
    }
}

fn make_record(
    iter: usize,
    value: f64,
    m: &MappingMetrics,
    grad_norm: f64,
    alpha: f64,
    start: Instant,
) -> IterationRecord {
    IterationRecord {
        iter,
        value,
        stretch: m.stretch,
        image_area: m.image_area,
        authalic: m.authalic,
        normalized: m.normalized,
        sd_over_mean: m.sd_over_mean,
        grad_norm,
        alpha,
        folds: m.folds,
        elapsed: start.elapsed().as_secs_f64(),
    }
}

/// Minimizes `obj` from f0.
pub fn minimize_objective<O: Objective + ?Sized>(
    obj: &O,
    f0: SphericalMapping,
    config: &SolverConfig,
) -> Result<RgdResult> {
    RgdDriver::new(obj, f0, *config)?.run()
}

/// Minimizes the normalized stretch energy of `surface` from f0.
pub fn minimize(surface: &SimplicialSurface, f0: SphericalMapping, config: &SolverConfig) -> Result<RgdResult> {
    if f0.len() != surface.num_vertices() {
        return Err(Error::ShapeMismatch {
            expected: surface.num_vertices(),
            got: f0.len(),
        });
    }
    minimize_objective(&NormalizedStretch::new(surface), f0, config)
}
