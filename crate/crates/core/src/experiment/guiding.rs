//! The reference scenario: activities L (left), R (right) and U (spread
//! uniformly) on `[0, 1]`, four journey types LR, RL, RU, UL, walkers at
//! speed 2 and a day of 24 one-hour steps.

use crate::attendance::{JourneyTypeSpec, ScheduleVariant, TimeGrid};
use crate::distributions::{ConditionalSchedule, Density1D};
use crate::em::EmConfig;
use crate::quadrature::QuadratureSpec;

use super::config::{
    AttendanceMode, ConsistencyConfig, CounterConfig, DayLaw, ExperimentConfig, Generator,
    PdeCheckConfig, Resample, Strategy,
};

/// Daily trips per journey type, in the order LR, RL, RU, UL.
pub const TRUE_N: [f64; 4] = [150_000.0, 120_000.0, 30_000.0, 40_000.0];

pub fn activity_l() -> Density1D {
    Density1D::mixture(&[0.7, 0.3], &[0.15, 0.35], &[0.08, 0.12], 0.0, 1.0).expect("valid")
}

pub fn activity_r() -> Density1D {
    activity_l().mirrored(1.0)
}

pub fn activity_u() -> Density1D {
    Density1D::uniform(0.0, 1.0).expect("valid")
}

fn schedule(weights: &[f64], means: &[f64], sds: &[f64]) -> ConditionalSchedule {
    ConditionalSchedule::independent(
        Density1D::mixture(weights, means, sds, 0.0, 24.0).expect("valid"),
    )
    .expect("valid")
}

/// End of the L activity: mostly morning, some early afternoon.
pub fn leave_l() -> ConditionalSchedule {
    schedule(&[0.8, 0.2], &[8.0, 13.0], &[0.75, 1.5])
}

/// End of the R activity: lunch break and evening.
pub fn leave_r() -> ConditionalSchedule {
    schedule(&[0.25, 0.75], &[12.5, 17.5], &[1.0, 1.0])
}

/// End of the U activity: afternoon and evening.
pub fn leave_u() -> ConditionalSchedule {
    schedule(&[0.3, 0.7], &[14.0, 18.5], &[2.0, 1.2])
}

fn journey(
    label: &str,
    origin: Density1D,
    destination: Density1D,
    schedule: ConditionalSchedule,
) -> JourneyTypeSpec {
    JourneyTypeSpec {
        label: label.into(),
        schedule_variant: ScheduleVariant::StartingTime,
        velocity: Density1D::dirac(2.0).expect("valid"),
        origin,
        destination,
        schedule,
    }
}

pub fn journeys() -> Vec<JourneyTypeSpec> {
    vec![
        journey("LR", activity_l(), activity_r(), leave_l()),
        journey("RL", activity_r(), activity_l(), leave_r()),
        journey("RU", activity_r(), activity_u(), leave_r()),
        journey("UL", activity_u(), activity_l(), leave_u()),
    ]
}

/// Uniform, boundary-weighted and center-weighted counter placements.
pub fn strategies() -> Vec<Strategy> {
    vec![
        Strategy {
            label: "d_u".into(),
            density: Density1D::uniform(0.0, 1.0).expect("valid"),
        },
        Strategy {
            label: "d_b".into(),
            density: Density1D::cos4(0.0, 1.0).expect("valid"),
        },
        Strategy {
            label: "d_c".into(),
            density: Density1D::sin4(0.0, 1.0).expect("valid"),
        },
    ]
}

pub fn config() -> ExperimentConfig {
    ExperimentConfig {
        domain: (0.0, 1.0),
        grid: TimeGrid::default(),
        journeys: journeys(),
        true_n: TRUE_N.to_vec(),
        counters: CounterConfig {
            count: 50,
            density: Density1D::uniform(0.0, 1.0).expect("valid"),
            resample: Resample::PerReplicate,
        },
        seed: 2024,
        replicates: 1,
        days: 1,
        day_law: DayLaw::default(),
        generator: Generator::Poisson,
        em: EmConfig::default(),
        quadrature: QuadratureSpec::default(),
        attendance_mode: AttendanceMode::Theoretical,
        consistency: ConsistencyConfig::default(),
        strategies: strategies(),
        level: 0.95,
        dense_locations: 512,
        pde_check: PdeCheckConfig::default(),
        output_dir: None,
    }
}
