use rayon::prelude::*;

use super::{AttendanceTable, Direction, JourneyTypeSpec, ScheduleVariant, TimeGrid};
use crate::distributions::Density1D;
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Quadrature results below this are rounding noise and clamp to zero.
const NEGATIVE_TOL: f64 = -1e-12;

// One oriented flux has the shape
//   factor(x) · ∫ f_v(dv) ∫_{side of x} f_s(t + sign·|x - u|/v | u) μ(du)
// where μ is the law of the anchored end (origin for starting-time
// schedules, destination for arrival-time schedules) and `factor` is the
// probability that the free end lies beyond x in the travel direction.
pub(super) struct Branch<'a> {
    pub(super) factor: f64,
    pub(super) anchor: &'a Density1D,
    pub(super) free: &'a Density1D,
    below: bool,
    pub(super) sign: f64,
}

pub(super) fn branch(spec: &JourneyTypeSpec, x: f64, dir: Direction) -> Branch<'_> {
    match (spec.schedule_variant, dir) {
        (ScheduleVariant::StartingTime, Direction::Right) => Branch {
            factor: spec.destination.survival(x),
            anchor: &spec.origin,
            free: &spec.destination,
            below: true,
            sign: -1.0,
        },
        (ScheduleVariant::StartingTime, Direction::Left) => Branch {
            factor: spec.destination.cdf(x),
            anchor: &spec.origin,
            free: &spec.destination,
            below: false,
            sign: -1.0,
        },
        (ScheduleVariant::ArrivalTime, Direction::Right) => Branch {
            factor: spec.origin.cdf(x),
            anchor: &spec.destination,
            free: &spec.origin,
            below: false,
            sign: 1.0,
        },
        (ScheduleVariant::ArrivalTime, Direction::Left) => Branch {
            factor: spec.origin.survival(x),
            anchor: &spec.destination,
            free: &spec.origin,
            below: true,
            sign: 1.0,
        },
    }
}

// Nodes of the anchor law restricted to u < x (below) or u >= x.
fn side_nodes(
    d: &Density1D,
    x: f64,
    below: bool,
    quad: &QuadratureSpec,
) -> Result<Vec<(f64, f64)>> {
    if let Some(atom) = d.atom() {
        let keep = if below { atom < x } else { atom >= x };
        return Ok(if keep { vec![(atom, 1.0)] } else { Vec::new() });
    }
    let (lo, hi) = d.support();
    if below {
        d.quadrature_nodes(lo, x, quad)
    } else {
        d.quadrature_nodes(x, hi, quad)
    }
}

fn velocity_nodes(spec: &JourneyTypeSpec, quad: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = spec.velocity.support();
    spec.velocity.quadrature_nodes(lo, hi, quad)
}

/// Directionality kernel: the probability that a trip anchored at `u`
/// continues past `x`.
///
/// For starting-time schedules this is `S_e(x)` when `u < x` and `F_e(x)`
/// otherwise, with `S_e`, `F_e` the destination survival and distribution
/// functions. For arrival-time schedules the roles of origin and destination
/// swap: `S_0(x)` when `u < x`, `F_0(x)` otherwise, `u` being the
/// destination.
pub fn g_x(spec: &JourneyTypeSpec, x: f64, u: f64) -> f64 {
    let free = match spec.schedule_variant {
        ScheduleVariant::StartingTime => &spec.destination,
        ScheduleVariant::ArrivalTime => &spec.origin,
    };
    if u < x {
        free.survival(x)
    } else {
        free.cdf(x)
    }
}

/// Oriented passage rate at `(t, x)`.
pub fn flux(
    spec: &JourneyTypeSpec,
    dir: Direction,
    t: f64,
    x: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let b = branch(spec, x, dir);
    if b.factor == 0.0 {
        return Ok(0.0);
    }
    let us = side_nodes(b.anchor, x, b.below, quad)?;
    let mut total = 0.0;
    for (v, wv) in velocity_nodes(spec, quad)? {
        let mut inner = 0.0;
        for &(u, wu) in &us {
            inner += wu * spec.schedule.density(t + b.sign * (x - u).abs() / v, u);
        }
        total += wv * inner;
    }
    finite(b.factor * total, x)
}

pub fn flux_right(spec: &JourneyTypeSpec, t: f64, x: f64, quad: &QuadratureSpec) -> Result<f64> {
    flux(spec, Direction::Right, t, x, quad)
}

pub fn flux_left(spec: &JourneyTypeSpec, t: f64, x: f64, quad: &QuadratureSpec) -> Result<f64> {
    flux(spec, Direction::Left, t, x, quad)
}

/// Total passage rate at `(t, x)`, integrating the kernel [`g_x`] against
/// the whole anchor law in one pass (split at `x`).
pub fn flux_unoriented(
    spec: &JourneyTypeSpec,
    t: f64,
    x: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let anchor = match spec.schedule_variant {
        ScheduleVariant::StartingTime => &spec.origin,
        ScheduleVariant::ArrivalTime => &spec.destination,
    };
    let sign = match spec.schedule_variant {
        ScheduleVariant::StartingTime => -1.0,
        ScheduleVariant::ArrivalTime => 1.0,
    };
    let mut us = side_nodes(anchor, x, true, quad)?;
    us.extend(side_nodes(anchor, x, false, quad)?);
    let mut total = 0.0;
    for (v, wv) in velocity_nodes(spec, quad)? {
        let mut inner = 0.0;
        for &(u, wu) in &us {
            let g = g_x(spec, x, u);
            if g > 0.0 {
                inner += wu * g * spec.schedule.density(t + sign * (x - u).abs() / v, u);
            }
        }
        total += wv * inner;
    }
    finite(total, x)
}

fn finite(v: f64, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteIntegrand { at: x })
    }
}

fn clamp_attendance(v: f64) -> Result<f64> {
    if v < NEGATIVE_TOL {
        Err(Error::NegativeAttendance { value: v })
    } else {
        Ok(v.max(0.0))
    }
}

/// Attendance at `x` for every bin of `grid`.
///
/// The time integral of the flux over a bin is taken exactly through the
/// schedule CDF, so only the spatial and velocity integrals use quadrature.
/// [`attendance_by_time_quadrature`] integrates the flux numerically instead.
pub fn attendance(
    spec: &JourneyTypeSpec,
    grid: &TimeGrid,
    x: f64,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    grid.validate()?;
    let edges = grid.edges();
    let vs = velocity_nodes(spec, quad)?;
    let mut out = vec![0.0; grid.n_steps];
    let mut cdfs = vec![0.0; edges.len()];
    for dir in [Direction::Right, Direction::Left] {
        let b = branch(spec, x, dir);
        if b.factor == 0.0 {
            continue;
        }
        for &(u, wu) in &side_nodes(b.anchor, x, b.below, quad)? {
            for &(v, wv) in &vs {
                let lag = b.sign * (x - u).abs() / v;
                for (c, e) in cdfs.iter_mut().zip(&edges) {
                    *c = spec.schedule.cdf(e + lag, u);
                }
                let w = b.factor * wu * wv;
                for (o, c) in out.iter_mut().zip(cdfs.windows(2)) {
                    *o += w * (c[1] - c[0]);
                }
            }
        }
    }
    out.into_iter()
        .map(|a| finite(a, x).and_then(clamp_attendance))
        .collect()
}

/// Attendance at `x` by numerical time integration of [`flux_unoriented`]
/// over each bin with the same rule as in space.
pub fn attendance_by_time_quadrature(
    spec: &JourneyTypeSpec,
    grid: &TimeGrid,
    x: f64,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    grid.validate()?;
    let edges = grid.edges();
    edges
        .windows(2)
        .map(|e| {
            let nodes = crate::quadrature::nodes_pieces(e, quad)?;
            let mut s = 0.0;
            for (t, w) in nodes {
                s += w * flux_unoriented(spec, t, x, quad)?;
            }
            clamp_attendance(s)
        })
        .collect()
}

/// Attendance of every journey at every location.
pub fn attendance_table(
    specs: &[JourneyTypeSpec],
    grid: &TimeGrid,
    locations: &[f64],
    quad: &QuadratureSpec,
) -> Result<AttendanceTable> {
    grid.validate()?;
    quad.validate()?;
    let cells: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|k| (0..locations.len()).map(move |j| (k, j)))
        .collect();
    let columns = cells
        .par_iter()
        .map(|&(k, j)| attendance(&specs[k], grid, locations[j], quad))
        .collect::<Result<Vec<_>>>()?;
    let (k_n, i_n, j_n) = (specs.len(), grid.n_steps, locations.len());
    let mut values = vec![0.0; k_n * i_n * j_n];
    for (&(k, j), col) in cells.iter().zip(columns) {
        for (i, a) in col.into_iter().enumerate() {
            values[(k * i_n + i) * j_n + j] = a;
        }
    }
    AttendanceTable::new(
        specs.iter().map(|s| s.label.clone()).collect(),
        *grid,
        locations.to_vec(),
        values,
    )
}
