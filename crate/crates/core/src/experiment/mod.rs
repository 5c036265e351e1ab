//! Experiment orchestration: counter placement, day generation, estimation
//! runs and the studies built on them. Every command writes plain CSV/JSON
//! files plus a `manifest.json` with their hashes, and returns the same
//! results in memory.

mod commands;
mod config;
pub mod guiding;
mod manifest;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::attendance::{attendance_table, AttendanceTable};
use crate::distributions::Density1D;
use crate::error::Result;
use crate::microsim::{empirical_attendance, simulate_day, simulate_poisson_day, CountDataset};
use crate::seed::SeedTree;

pub use commands::{
    cmd_attendance, cmd_consistency, cmd_estimate, cmd_pde_check, cmd_simulate, cmd_strategies,
    AttendanceReport, ConsistencyReport, ConsistencyRow, EstimateInputs, EstimateReport,
    PdeCheckRow, ReplicateEstimate, SimulateReport, StrategiesReport, StrategyReport,
};
pub use config::{
    AttendanceMode, ConsistencyConfig, CounterConfig, DayLaw, ExperimentConfig, Generator,
    PdeCheckConfig, Resample, Strategy,
};
pub use manifest::{ManifestEntry, OutputDir};

/// `j` independent draws from `density`, in draw order.
pub fn draw_counters<R: Rng + ?Sized>(density: &Density1D, j: usize, rng: &mut R) -> Vec<f64> {
    (0..j).map(|_| density.sample(rng)).collect()
}

/// `j` independent draws from `density`, sorted ascending.
pub fn place_counters<R: Rng + ?Sized>(density: &Density1D, j: usize, rng: &mut R) -> Vec<f64> {
    let mut xs = draw_counters(density, j, rng);
    xs.sort_by(f64::total_cmp);
    xs
}

/// Trips per journey on one day under the configured law.
pub fn day_populations(cfg: &ExperimentConfig, seed: SeedTree) -> Vec<f64> {
    match cfg.day_law {
        DayLaw::Fixed => cfg.true_n.clone(),
        DayLaw::Lognormal { sigma } => {
            let mut rng = seed.rng();
            cfg.true_n
                .iter()
                .map(|n| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (n * (sigma * z - 0.5 * sigma * sigma).exp()).round()
                })
                .collect()
        }
    }
}

/// Theoretical attendance of the configured journeys at `locations`.
pub fn theoretical_table(cfg: &ExperimentConfig, locations: &[f64]) -> Result<AttendanceTable> {
    attendance_table(&cfg.journeys, &cfg.grid, locations, &cfg.quadrature)
}

/// One day of counts at `locations` with `n` trips per journey.
///
/// `table` must be the theoretical table at `locations` when the generator
/// is Poisson; it is ignored for trajectories.
pub fn generate_day(
    cfg: &ExperimentConfig,
    table: &AttendanceTable,
    locations: &[f64],
    n: &[f64],
    day: u64,
    seed: SeedTree,
) -> Result<CountDataset> {
    match cfg.generator {
        Generator::Poisson => simulate_poisson_day(table, n, day, seed.seed()),
        Generator::Trajectory => {
            let trips: Vec<u64> = n.iter().map(|v| v.round() as u64).collect();
            simulate_day(
                &cfg.journeys,
                &trips,
                locations,
                &cfg.grid,
                day,
                seed.seed(),
            )
        }
    }
}

/// Attendance averaged over `days` simulated learning days, each with its
/// own population drawn from the day law.
pub fn learned_table(
    cfg: &ExperimentConfig,
    theoretical: &AttendanceTable,
    days: usize,
    seeds: SeedTree,
) -> Result<AttendanceTable> {
    let locations = theoretical.locations().to_vec();
    let mut data = Vec::with_capacity(days);
    let mut pops = Vec::with_capacity(days);
    for d in 0..days as u64 {
        let n = day_populations(cfg, seeds.child("learning_law", d));
        let day = generate_day(
            cfg,
            theoretical,
            &locations,
            &n,
            d,
            seeds.child("learning", d),
        )?;
        pops.push(n.iter().map(|v| v.round() as u64).collect());
        data.push(day);
    }
    // The Poisson generator draws from real-valued rates; normalize by the
    // rounded populations in both cases.
    empirical_attendance(&data, &pops)
}

/// The table an estimator is given under the configured attendance mode.
pub fn estimation_table(
    cfg: &ExperimentConfig,
    theoretical: &AttendanceTable,
    seeds: SeedTree,
) -> Result<AttendanceTable> {
    match cfg.attendance_mode {
        AttendanceMode::Theoretical => Ok(theoretical.clone()),
        AttendanceMode::Empirical { days } => learned_table(cfg, theoretical, days, seeds),
    }
}

/// Linear-interpolation sample quantile of sorted data.
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let h = (xs.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    xs[lo] + (h - lo as f64) * (xs[hi] - xs[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::ks_statistic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dirac_counters_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(
            place_counters(&Density1D::dirac(0.5).unwrap(), 3, &mut rng),
            vec![0.5; 3]
        );
    }

    #[test]
    fn uniform_counters_pass_ks() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = Density1D::uniform(0.0, 1.0).unwrap();
        let xs = place_counters(&d, 10_000, &mut rng);
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        assert!(ks_statistic(&xs, |x| d.cdf(x)) < 0.02);
    }

    #[test]
    fn lognormal_day_law_keeps_the_mean() {
        let cfg = guiding::config();
        let seeds = SeedTree::new(1);
        let days = 4000;
        let mut mean = [0.0; 4];
        for d in 0..days {
            for (m, n) in mean
                .iter_mut()
                .zip(day_populations(&cfg, seeds.child("d", d)))
            {
                *m += n / days as f64;
            }
        }
        for (m, n) in mean.iter().zip(&cfg.true_n) {
            // sd of the mean is about 0.1 n / sqrt(4000)
            assert!((m / n - 1.0).abs() < 4.0 * 0.1 / (days as f64).sqrt());
        }
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 0.25), 2.0);
        assert_eq!(quantile_sorted(&xs, 0.05), 1.2);
    }
}
