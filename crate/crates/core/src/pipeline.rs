//! The full parameterization: conformal start, FPI warm start, fold
//! correction, descent, fold correction.

use std::time::Instant;

use crate::bijectivity::{correct_bijectivity, BijectivityResult};
use crate::diagnostics::{mapping_metrics, MappingMetrics};
use crate::energy::image_area;
use crate::error::Result;
use crate::fpi::{conformal_initial_map, fpi_minimize, FpiConfig, FpiResult};
use crate::mesh::SimplicialSurface;
use crate::rgd::{minimize, RgdResult, SolverConfig};
use crate::sphere::SphericalMapping;

/// Where the fold correction runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionStages {
    Off,
    AfterFpi,
    AfterRgd,
    Both,
}

impl CorrectionStages {
    pub fn after_fpi(self) -> bool {
        matches!(self, CorrectionStages::AfterFpi | CorrectionStages::Both)
    }

    pub fn after_rgd(self) -> bool {
        matches!(self, CorrectionStages::AfterRgd | CorrectionStages::Both)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamConfig {
    /// Warm-start budget; 0 skips the FPI stage.
    pub fpi: FpiConfig,
    pub rgd: SolverConfig,
    pub correction: CorrectionStages,
    /// Hemisphere radius of the fold correction.
    pub correction_radius: f64,
}

impl Default for ParamConfig {
    fn default() -> Self {
        Self {
            fpi: FpiConfig::default(),
            rgd: SolverConfig::default(),
            correction: CorrectionStages::Both,
            correction_radius: 1.2,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimings {
    pub init: f64,
    pub fpi: f64,
    pub rgd: f64,
    pub correction: f64,
    pub total: f64,
}

/// One line of the convergence log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub stretch: f64,
    pub authalic: f64,
    pub normalized: f64,
    pub sd_over_mean: f64,
    pub grad_norm: f64,
    pub alpha: f64,
    pub folds: usize,
    pub elapsed: f64,
}

#[derive(Debug, Clone)]
pub struct ParamResult {
    /// The input rescaled so that |M| equals the area of the initial map.
    pub surface: SimplicialSurface,
    pub scale: f64,
    pub initial: SphericalMapping,
    pub fpi: Option<FpiResult>,
    pub fpi_correction: Option<BijectivityResult>,
    pub rgd: RgdResult,
    pub rgd_correction: Option<BijectivityResult>,
    pub f: SphericalMapping,
    pub metrics: MappingMetrics,
    pub timings: StageTimings,
}

impl ParamResult {
    /// FPI iterations followed by accepted descent iterations, numbered
    /// consecutively; FPI rows carry α = 0. Times are measured from the
    /// start of the descent stage for its rows and from the start of FPI
    /// for the warm-up rows.
    pub fn log_rows(&self) -> Vec<LogRow> {
        let mut rows = Vec::new();
        if let Some(fpi) = &self.fpi {
            for r in fpi.records.iter().skip(1) {
                rows.push(LogRow {
                    iter: r.iter,
                    stretch: r.stretch,
                    authalic: r.authalic,
                    normalized: r.normalized,
                    sd_over_mean: r.sd_over_mean,
                    grad_norm: r.grad_norm,
                    alpha: 0.0,
                    folds: r.folds,
                    elapsed: r.elapsed,
                });
            }
        }
        let offset = rows.len();
        for r in &self.rgd.records {
            rows.push(LogRow {
                iter: offset + r.iter,
                stretch: r.stretch,
                authalic: r.authalic,
                normalized: r.normalized,
                sd_over_mean: r.sd_over_mean,
                grad_norm: r.grad_norm,
                alpha: r.alpha,
                folds: r.folds,
                elapsed: r.elapsed,
            });
        }
        rows
    }

    /// Folds right before the final correction.
    pub fn folds_before_correction(&self) -> usize {
        self.rgd.last().folds
    }
}

pub fn parameterize(surface: &SimplicialSurface, config: &ParamConfig) -> Result<ParamResult> {
    let t0 = Instant::now();
    let initial = conformal_initial_map(surface)?;
    let area = image_area(surface, initial.rows())?;
    let scale = (area / surface.total_area()).sqrt();
    let surface = surface.scaled_to_area(area)?;
    let mut timings = StageTimings {
        init: t0.elapsed().as_secs_f64(),
        ..StageTimings::default()
    };

    let mut f = initial.clone();
    let fpi = if config.fpi.max_iters > 0 {
        let t = Instant::now();
        let r = fpi_minimize(&surface, &f, &config.fpi)?;
        timings.fpi = t.elapsed().as_secs_f64();
        f = r.f.clone();
        Some(r)
    } else {
        None
    };
    let fpi_correction = if config.correction.after_fpi() {
        let t = Instant::now();
        let r = correct_bijectivity(&surface, &f, config.correction_radius)?;
        timings.correction += t.elapsed().as_secs_f64();
        f = r.f.clone();
        Some(r)
    } else {
        None
    };

    let t = Instant::now();
    let rgd = minimize(&surface, f, &config.rgd)?;
    timings.rgd = t.elapsed().as_secs_f64();
    let mut f = rgd.f.clone();
    let rgd_correction = if config.correction.after_rgd() {
        let t = Instant::now();
        let r = correct_bijectivity(&surface, &f, config.correction_radius)?;
        timings.correction += t.elapsed().as_secs_f64();
        f = r.f.clone();
        Some(r)
    } else {
        None
    };
    let metrics = mapping_metrics(&surface, &f)?;
    timings.total = t0.elapsed().as_secs_f64();
    Ok(ParamResult {
        surface,
        scale,
        initial,
        fpi,
        fpi_correction,
        rgd,
        rgd_correction,
        f,
        metrics,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::make_icosphere;

    #[test]
    fn ellipsoid_pipeline() {
        let s = make_icosphere(2, [1.0, 0.8, 0.6]);
        let cfg = ParamConfig {
            rgd: SolverConfig {
                max_iters: 30,
                ..SolverConfig::default()
            },
            ..ParamConfig::default()
        };
        let r = parameterize(&s, &cfg).unwrap();
        assert_eq!(r.metrics.folds, 0);
        assert!(r.f.max_unit_deviation() < 1e-12);
        assert!((r.surface.total_area() - image_area(&s, r.initial.rows()).unwrap()).abs() < 1e-9);
        let rows = r.log_rows();
        let warm = r.fpi.as_ref().unwrap().records.len() - 1;
        assert_eq!(rows.len(), warm + r.rgd.records.len());
        assert!(rows.windows(2).all(|w| w[1].iter == w[0].iter + 1));
        assert!(r.metrics.authalic < r.rgd.initial.authalic);
    }

    #[test]
    fn stages_can_be_skipped() {
        let s = make_icosphere(1, [1.0, 0.9, 0.7]);
        let cfg = ParamConfig {
            fpi: FpiConfig {
                max_iters: 0,
                ..FpiConfig::default()
            },
            rgd: SolverConfig {
                max_iters: 5,
                ..SolverConfig::default()
            },
            correction: CorrectionStages::Off,
            ..ParamConfig::default()
        };
        let r = parameterize(&s, &cfg).unwrap();
        assert!(r.fpi.is_none() && r.fpi_correction.is_none() && r.rgd_correction.is_none());
        assert_eq!(r.log_rows().len(), r.rgd.records.len());
    }
}
