//! Individual trips and the passage counts they generate at counters.
//!
//! Two generators are provided: [`simulate_day`] draws every trip and counts
//! crossings, [`simulate_poisson_day`] draws counts directly from Poisson
//! laws with rates `N_k a_k(i, x_j)`.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::attendance::{AttendanceTable, JourneyTypeSpec, ScheduleVariant, TimeGrid};
use crate::error::{Error, Result};

/// Trips simulated per parallel work unit.
const CHUNK: u64 = 4096;

/// One realized trip. `t_anchor` is the departure time for starting-time
/// schedules and the arrival time for arrival-time schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trip {
    pub journey: usize,
    pub variant: ScheduleVariant,
    pub v: f64,
    pub x0: f64,
    pub xe: f64,
    pub t_anchor: f64,
}

impl Trip {
    /// `+1` for rightward (including zero-length) trips, `-1` otherwise.
    pub fn eps(&self) -> i8 {
        if self.xe >= self.x0 {
            1
        } else {
            -1
        }
    }

    pub fn duration(&self) -> f64 {
        (self.xe - self.x0).abs() / self.v
    }

    pub fn t0(&self) -> f64 {
        match self.variant {
            ScheduleVariant::StartingTime => self.t_anchor,
            ScheduleVariant::ArrivalTime => self.t_anchor - self.duration(),
        }
    }

    pub fn te(&self) -> f64 {
        match self.variant {
            ScheduleVariant::StartingTime => self.t_anchor + self.duration(),
            ScheduleVariant::ArrivalTime => self.t_anchor,
        }
    }
}

/// Draws velocity, origin and destination independently, then the schedule
/// time given the anchored end.
pub fn draw_trip<R: Rng + ?Sized>(spec: &JourneyTypeSpec, journey: usize, rng: &mut R) -> Trip {
    let v = spec.velocity.sample(rng);
    let x0 = spec.origin.sample(rng);
    let xe = spec.destination.sample(rng);
    let anchor = match spec.schedule_variant {
        ScheduleVariant::StartingTime => x0,
        ScheduleVariant::ArrivalTime => xe,
    };
    Trip {
        journey,
        variant: spec.schedule_variant,
        v,
        x0,
        xe,
        t_anchor: spec.schedule.sample(anchor, rng),
    }
}

/// Time at which the trip passes `x`, if `x` lies on its path (endpoints
/// included).
pub fn crossing_time(trip: &Trip, x: f64) -> Option<f64> {
    let (lo, hi) = if trip.x0 <= trip.xe {
        (trip.x0, trip.xe)
    } else {
        (trip.xe, trip.x0)
    };
    if !(x >= lo && x <= hi) {
        return None;
    }
    Some(match trip.variant {
        ScheduleVariant::StartingTime => trip.t_anchor + (x - trip.x0).abs() / trip.v,
        ScheduleVariant::ArrivalTime => trip.t_anchor - (trip.xe - x).abs() / trip.v,
    })
}

/// Aggregated counts of one day at the counters, optionally with the
/// per-journey breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDataset {
    pub day: u64,
    pub seed: u64,
    pub grid: TimeGrid,
    pub locations: Vec<f64>,
    pub journey_labels: Vec<String>,
    /// `n(i, x_j)` at index `i * J + j`.
    pub counts: Vec<u64>,
    /// `n_k(i, x_j)` at index `(k * I + i) * J + j`.
    pub hidden: Option<Vec<u64>>,
}

impl CountDataset {
    /// Dataset from the per-journey counts; aggregates are their sums.
    pub fn from_hidden(
        day: u64,
        seed: u64,
        grid: TimeGrid,
        locations: Vec<f64>,
        journey_labels: Vec<String>,
        hidden: Vec<u64>,
    ) -> Result<Self> {
        let cells = grid.n_steps * locations.len();
        if hidden.len() != journey_labels.len() * cells {
            return Err(Error::ShapeMismatch(format!(
                "{} hidden counts for {} journeys x {cells} cells",
                hidden.len(),
                journey_labels.len()
            )));
        }
        let mut counts = vec![0u64; cells];
        for block in hidden.chunks(cells.max(1)) {
            for (c, h) in counts.iter_mut().zip(block) {
                *c += h;
            }
        }
        Ok(Self {
            day,
            seed,
            grid,
            locations,
            journey_labels,
            counts,
            hidden: Some(hidden),
        })
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps
    }

    pub fn n_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.locations.len() + j]
    }

    pub fn hidden_count(&self, k: usize, i: usize, j: usize) -> Option<u64> {
        let idx = (k * self.grid.n_steps + i) * self.locations.len() + j;
        self.hidden.as_ref().map(|h| h[idx])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Same day restricted to the first `j` counters.
    pub fn truncated(&self, j: usize) -> Self {
        let j = j.min(self.n_locations());
        let jn = self.n_locations();
        let pick = |v: &[u64], rows: usize| -> Vec<u64> {
            (0..rows)
                .flat_map(|r| v[r * jn..r * jn + j].iter().copied())
                .collect()
        };
        Self {
            day: self.day,
            seed: self.seed,
            grid: self.grid,
            locations: self.locations[..j].to_vec(),
            journey_labels: self.journey_labels.clone(),
            counts: pick(&self.counts, self.grid.n_steps),
            hidden: self
                .hidden
                .as_ref()
                .map(|h| pick(h, self.journey_labels.len() * self.grid.n_steps)),
        }
    }

    /// Checks that the dataset lines up with an attendance table.
    pub fn check_aligned(&self, table: &AttendanceTable) -> Result<()> {
        if self.grid != *table.grid() || self.locations != table.locations() {
            return Err(Error::ShapeMismatch(
                "count dataset and attendance table disagree on grid or locations".into(),
            ));
        }
        Ok(())
    }
}

/// Writes aggregate counts of several days:
/// `day,counter_id,location,time_step,count`, ordered by day, counter, time.
pub fn counts_to_csv(days: &[CountDataset]) -> String {
    let mut s = String::from("day,counter_id,location,time_step,count\n");
    for d in days {
        for (j, x) in d.locations.iter().enumerate() {
            for i in 0..d.n_steps() {
                let _ = writeln!(s, "{},{j},{x:.16e},{i},{}", d.day, d.count(i, j));
            }
        }
    }
    s
}

/// Hidden counts with an extra `journey` column, ordered by day, counter,
/// time, journey. Days without hidden counts are skipped.
pub fn hidden_to_csv(days: &[CountDataset]) -> String {
    let mut s = String::from("day,counter_id,location,time_step,journey,count\n");
    for d in days {
        if d.hidden.is_none() {
            continue;
        }
        for (j, x) in d.locations.iter().enumerate() {
            for i in 0..d.n_steps() {
                for (k, label) in d.journey_labels.iter().enumerate() {
                    let n = d.hidden_count(k, i, j).unwrap_or(0);
                    let _ = writeln!(s, "{},{j},{x:.16e},{i},{label},{n}", d.day);
                }
            }
        }
    }
    s
}

/// Parses the aggregate layout of [`counts_to_csv`] into one dataset per day.
pub fn counts_from_csv(text: &str, grid: TimeGrid, path: &Path) -> Result<Vec<CountDataset>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "day,counter_id,location,time_step,count" => {}
        _ => {
            return Err(err(
                1,
                "expected header day,counter_id,location,time_step,count".into(),
            ))
        }
    }
    // Per day, per counter id: location and counts per step.
    type Counter = (f64, Vec<Option<u64>>);
    let mut days: Vec<(u64, Vec<Counter>)> = Vec::new();
    for (n, line) in lines {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(err(
                line_no,
                format!("expected 5 fields, found {}", f.len()),
            ));
        }
        let day: u64 = f[0]
            .parse()
            .map_err(|e| err(line_no, format!("day: {e}")))?;
        let j: usize = f[1]
            .parse()
            .map_err(|e| err(line_no, format!("counter_id: {e}")))?;
        let x: f64 = f[2]
            .parse()
            .map_err(|e| err(line_no, format!("location: {e}")))?;
        let i: usize = f[3]
            .parse()
            .map_err(|e| err(line_no, format!("time_step: {e}")))?;
        let c: u64 = f[4]
            .parse()
            .map_err(|e| err(line_no, format!("count: {e}")))?;
        if i >= grid.n_steps {
            return Err(err(
                line_no,
                format!("time_step {i} outside the {}-step grid", grid.n_steps),
            ));
        }
        let slot = match days.iter().position(|d| d.0 == day) {
            Some(p) => p,
            None => {
                days.push((day, Vec::new()));
                days.len() - 1
            }
        };
        let counters = &mut days[slot].1;
        if j >= counters.len() {
            counters.resize(j + 1, (f64::NAN, vec![None; grid.n_steps]));
        }
        let entry = &mut counters[j];
        if entry.0.is_nan() {
            entry.0 = x;
        } else if entry.0 != x {
            return Err(err(line_no, format!("counter {j} has two locations")));
        }
        if entry.1[i].replace(c).is_some() {
            return Err(err(line_no, "duplicate cell".into()));
        }
    }
    days.into_iter()
        .map(|(day, counters)| {
            let jn = counters.len();
            let mut counts = vec![0u64; grid.n_steps * jn];
            let mut locations = Vec::with_capacity(jn);
            for (j, (x, steps)) in counters.into_iter().enumerate() {
                if x.is_nan() {
                    return Err(err(0, format!("day {day}: counter {j} missing")));
                }
                locations.push(x);
                for (i, c) in steps.into_iter().enumerate() {
                    counts[i * jn + j] =
                        c.ok_or_else(|| err(0, format!("day {day}: counter {j} lacks step {i}")))?;
                }
            }
            Ok(CountDataset {
                day,
                seed: 0,
                grid,
                locations,
                journey_labels: Vec::new(),
                counts,
                hidden: None,
            })
        })
        .collect()
}

pub fn read_counts_csv(path: &Path, grid: TimeGrid) -> Result<Vec<CountDataset>> {
    let text = std::fs::read_to_string(path)?;
    counts_from_csv(&text, grid, path)
}

fn trip_rng(base: &ChaCha8Rng, journey: usize, index: u64) -> ChaCha8Rng {
    let mut r = base.clone();
    r.set_stream(journey as u64);
    r.set_word_pos((index as u128) << 32);
    r
}

/// Simulates `n_trips[k]` trips of each journey type and counts crossings.
///
/// Trip `p` of journey `k` uses its own ChaCha stream keyed by `seed`, so the
/// result does not depend on how work is split across threads.
pub fn simulate_day(
    specs: &[JourneyTypeSpec],
    n_trips: &[u64],
    locations: &[f64],
    grid: &TimeGrid,
    day: u64,
    seed: u64,
) -> Result<CountDataset> {
    grid.validate()?;
    if specs.len() != n_trips.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} journey specs but {} trip totals",
            specs.len(),
            n_trips.len()
        )));
    }
    let base = ChaCha8Rng::seed_from_u64(seed);
    let jn = locations.len();
    let cells = grid.n_steps * jn;
    let mut hidden = vec![0u64; specs.len() * cells];
    for (k, spec) in specs.iter().enumerate() {
        let n = n_trips[k];
        let chunks: Vec<u64> = (0..n.div_ceil(CHUNK)).collect();
        let partial = chunks
            .par_iter()
            .map(|&c| {
                let mut local = vec![0u64; cells];
                for p in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    let mut rng = trip_rng(&base, k, p);
                    let trip = draw_trip(spec, k, &mut rng);
                    for (j, &x) in locations.iter().enumerate() {
                        if let Some(i) = crossing_time(&trip, x).and_then(|t| grid.bin_of(t)) {
                            local[i * jn + j] += 1;
                        }
                    }
                }
                local
            })
            .reduce(
                || vec![0u64; cells],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        hidden[k * cells..(k + 1) * cells].copy_from_slice(&partial);
    }
    CountDataset::from_hidden(
        day,
        seed,
        *grid,
        locations.to_vec(),
        specs.iter().map(|s| s.label.clone()).collect(),
        hidden,
    )
}

/// Draws `n_k(i, x_j) ~ Poisson(nu_k a_k(i, x_j))` independently, cells
/// visited in (journey, time, location) order.
pub fn simulate_poisson_day(
    table: &AttendanceTable,
    nu: &[f64],
    day: u64,
    seed: u64,
) -> Result<CountDataset> {
    if nu.len() != table.n_journeys() {
        return Err(Error::ShapeMismatch(format!(
            "{} rates for {} journeys",
            nu.len(),
            table.n_journeys()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (i_n, j_n) = (table.n_steps(), table.n_locations());
    let mut hidden = Vec::with_capacity(nu.len() * i_n * j_n);
    for (k, &n) in nu.iter().enumerate() {
        for i in 0..i_n {
            for j in 0..j_n {
                let rate = n * table.get(k, i, j);
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(Error::NegativeRate { journey: k, rate });
                }
                hidden.push(poisson(rate, &mut rng));
            }
        }
    }
    CountDataset::from_hidden(
        day,
        seed,
        *table.grid(),
        table.locations().to_vec(),
        table.journey_labels().to_vec(),
        hidden,
    )
}

fn poisson<R: RngCore>(rate: f64, rng: &mut R) -> u64 {
    if rate == 0.0 {
        return 0;
    }
    let d = Poisson::new(rate).expect("positive finite rate");
    d.sample(rng) as u64
}

/// Mean over days of `hidden / n_trips`, the empirical attendance.
///
/// `n_trips[d][k]` is the number of journey-`k` trips generated on day `d`.
pub fn empirical_attendance(
    days: &[CountDataset],
    n_trips: &[Vec<u64>],
) -> Result<AttendanceTable> {
    let first = days
        .first()
        .ok_or_else(|| Error::ShapeMismatch("no days to average".into()))?;
    if n_trips.len() != days.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} days but {} trip-count rows",
            days.len(),
            n_trips.len()
        )));
    }
    let kn = first.journey_labels.len();
    let cells = first.n_steps() * first.n_locations();
    let mut acc = vec![0.0; kn * cells];
    for (d, n) in days.iter().zip(n_trips) {
        if d.grid != first.grid || d.locations != first.locations || d.journey_labels.len() != kn {
            return Err(Error::ShapeMismatch(format!(
                "day {} has a different layout",
                d.day
            )));
        }
        let hidden = d
            .hidden
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch(format!("day {} has no hidden counts", d.day)))?;
        if n.len() != kn {
            return Err(Error::ShapeMismatch(format!(
                "day {}: {} trip totals",
                d.day,
                n.len()
            )));
        }
        for k in 0..kn {
            if n[k] == 0 {
                return Err(Error::ZeroPopulation {
                    journey: k,
                    day: d.day,
                });
            }
            let inv = 1.0 / n[k] as f64;
            for c in 0..cells {
                acc[k * cells + c] += hidden[k * cells + c] as f64 * inv;
            }
        }
    }
    let scale = 1.0 / days.len() as f64;
    acc.iter_mut().for_each(|a| *a *= scale);
    AttendanceTable::new(
        first.journey_labels.clone(),
        first.grid,
        first.locations.clone(),
        acc,
    )
}
