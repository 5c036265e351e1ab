//! Attendance functions: the probability that a trip of a given journey type
//! passes a location during a time step, computed from closed-form flux
//! integrals over the activity distributions.

mod flux;
mod pde;
mod table;

use serde::{Deserialize, Serialize};

use crate::distributions::{ConditionalSchedule, Density1D};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

pub use flux::{
    attendance, attendance_by_time_quadrature, attendance_table, flux, flux_left, flux_right,
    flux_unoriented, g_x,
};
pub use pde::pde_residual;
pub use table::AttendanceTable;

/// Which end of the trip carries the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleVariant {
    /// Departure time drawn given the origin.
    StartingTime,
    /// Arrival time drawn given the destination.
    ArrivalTime,
}

/// Direction of travel through a location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Right,
    Left,
}

/// The laws defining one journey type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JourneyTypeSpec {
    pub label: String,
    pub schedule_variant: ScheduleVariant,
    /// Speed in space units per hour.
    pub velocity: Density1D,
    pub origin: Density1D,
    pub destination: Density1D,
    /// Departure-time law given the origin, or arrival-time law given the
    /// destination, per `schedule_variant`.
    pub schedule: ConditionalSchedule,
}

impl JourneyTypeSpec {
    /// Checks that origin and destination live inside `domain` and that
    /// speeds are strictly positive.
    pub fn validate(&self, domain: (f64, f64)) -> Result<()> {
        let (vlo, _) = self.velocity.support();
        if !(vlo > 0.0) {
            return Err(Error::InvalidJourney(format!(
                "{}: velocity support must lie in (0, inf)",
                self.label
            )));
        }
        for (name, d) in [("origin", &self.origin), ("destination", &self.destination)] {
            let (lo, hi) = d.support();
            if lo < domain.0 || hi > domain.1 {
                return Err(Error::InvalidJourney(format!(
                    "{}: {name} support [{lo}, {hi}] leaves the domain [{}, {}]",
                    self.label, domain.0, domain.1
                )));
            }
        }
        Ok(())
    }

    /// The same journey seen in the mirrored domain `x ↦ center - x`.
    pub fn mirrored(&self, center: f64) -> Self {
        Self {
            label: self.label.clone(),
            schedule_variant: self.schedule_variant,
            velocity: self.velocity.clone(),
            origin: self.origin.mirrored(center),
            destination: self.destination.mirrored(center),
            schedule: self.schedule.mirrored_in_space(center),
        }
    }
}

/// `n_steps` consecutive bins of width `step` starting at `t_start` (hours).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub n_steps: usize,
    pub step: f64,
}

impl Default for TimeGrid {
    /// A day of 24 one-hour bins.
    fn default() -> Self {
        Self {
            t_start: 0.0,
            n_steps: 24,
            step: 1.0,
        }
    }
}

impl TimeGrid {
    pub fn new(t_start: f64, n_steps: usize, step: f64) -> Result<Self> {
        let g = Self {
            t_start,
            n_steps,
            step,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite() && self.t_start.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "step {} must be positive and t_start finite",
                self.step
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::InvalidGrid("grid needs at least one step".into()));
        }
        Ok(())
    }

    /// Bin edges, `n_steps + 1` of them.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .map(|i| self.t_start + i as f64 * self.step)
            .collect()
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.n_steps as f64 * self.step
    }

    /// Bin containing `t`, bins being half-open `[a, b)`.
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(t >= self.t_start) {
            return None;
        }
        let i = ((t - self.t_start) / self.step).floor() as usize;
        if i >= self.n_steps {
            return None;
        }
        // Guard against floor() landing one bin off at an edge.
        let edges = (
            self.t_start + i as f64 * self.step,
            self.t_start + (i + 1) as f64 * self.step,
        );
        if t < edges.0 {
            i.checked_sub(1)
        } else if t >= edges.1 {
            (i + 1 < self.n_steps).then_some(i + 1)
        } else {
            Some(i)
        }
    }
}

/// Attendance values `a_k(i, x)` at an arbitrary location.
///
/// Fisher information integrates over all locations, so it needs attendance
/// as a function of `x` rather than a table at fixed counters.
pub trait AttendanceSource: Sync {
    fn n_journeys(&self) -> usize;

    fn n_steps(&self) -> usize;

    /// Values at `x`, journey-major: entry `k * n_steps + i`.
    fn profile(&self, x: f64) -> Result<Vec<f64>>;
}

/// Attendance computed from journey specifications.
#[derive(Debug, Clone)]
pub struct TheoreticalAttendance {
    pub specs: Vec<JourneyTypeSpec>,
    pub grid: TimeGrid,
    pub quad: QuadratureSpec,
}

impl AttendanceSource for TheoreticalAttendance {
    fn n_journeys(&self) -> usize {
        self.specs.len()
    }

    fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    fn profile(&self, x: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.specs.len() * self.grid.n_steps);
        for spec in &self.specs {
            out.extend(attendance(spec, &self.grid, x, &self.quad)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_are_half_open() {
        let g = TimeGrid::default();
        assert_eq!(g.bin_of(0.0), Some(0));
        assert_eq!(g.bin_of(8.25), Some(8));
        assert_eq!(g.bin_of(9.0), Some(9));
        assert_eq!(g.bin_of(23.999), Some(23));
        assert_eq!(g.bin_of(24.0), None);
        assert_eq!(g.bin_of(-0.1), None);
    }

    #[test]
    fn odd_steps_place_edges_consistently() {
        let g = TimeGrid::new(0.1, 30, 0.1).unwrap();
        for (i, e) in g.edges().iter().enumerate().take(30) {
            assert_eq!(g.bin_of(*e), Some(i));
        }
    }

    #[test]
    fn invalid_grids_are_rejected() {
        assert!(TimeGrid::new(0.0, 0, 1.0).is_err());
        assert!(TimeGrid::new(0.0, 3, 0.0).is_err());
    }
}
