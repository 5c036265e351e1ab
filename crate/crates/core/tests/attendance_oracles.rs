use disagg::attendance::{
    attendance, flux_left, flux_right, flux_unoriented, JourneyTypeSpec, ScheduleVariant, TimeGrid,
};
use disagg::distributions::{ConditionalSchedule, Density1D};
use disagg::experiment::guiding;
use disagg::quadrature::QuadratureSpec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn uniform(lo: f64, hi: f64) -> Density1D {
    Density1D::uniform(lo, hi).unwrap()
}

fn spec(variant: ScheduleVariant, velocity: Density1D) -> JourneyTypeSpec {
    JourneyTypeSpec {
        label: "test".into(),
        schedule_variant: variant,
        velocity,
        origin: uniform(0.0, 0.6),
        destination: uniform(0.3, 1.0),
        schedule: ConditionalSchedule::independent(uniform(6.0, 10.0)).unwrap(),
    }
}

// Trips drawn by inverse transform straight from the uniform laws above,
// crossing times from the straight-line motion.
fn monte_carlo(
    variant: ScheduleVariant,
    v_range: Option<(f64, f64)>,
    x: f64,
    grid: &TimeGrid,
    trips: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = vec![0u64; grid.n_steps];
    for _ in 0..trips {
        let x0 = rng.random_range(0.0..0.6);
        let xe = rng.random_range(0.3..1.0);
        let anchor = rng.random_range(6.0..10.0);
        let v = v_range.map_or(2.0, |(a, b)| rng.random_range(a..b));
        let (lo, hi) = if x0 <= xe { (x0, xe) } else { (xe, x0) };
        if !(x >= lo && x <= hi) {
            continue;
        }
        let t = match variant {
            ScheduleVariant::StartingTime => anchor + (x - x0).abs() / v,
            ScheduleVariant::ArrivalTime => anchor - (xe - x).abs() / v,
        };
        let i = ((t - grid.t_start) / grid.step).floor();
        if i >= 0.0 && (i as usize) < grid.n_steps {
            counts[i as usize] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / trips as f64).collect()
}

fn assert_within_binomial(theory: &[f64], empirical: &[f64], trips: usize) {
    for (i, (a, e)) in theory.iter().zip(empirical).enumerate() {
        let sigma = (a * (1.0 - a) / trips as f64).sqrt();
        assert!(
            (a - e).abs() <= 5.0 * sigma + 1e-9,
            "step {i}: theory {a}, simulation {e}, sigma {sigma}"
        );
    }
}

#[test]
fn starting_time_attendance_matches_simulated_crossings() {
    let grid = TimeGrid::new(4.0, 10, 1.0).unwrap();
    let quad = QuadratureSpec::gauss_legendre(32, 8);
    for x in [0.2, 0.45, 0.8] {
        let a = attendance(
            &spec(
                ScheduleVariant::StartingTime,
                Density1D::dirac(2.0).unwrap(),
            ),
            &grid,
            x,
            &quad,
        )
        .unwrap();
        let e = monte_carlo(ScheduleVariant::StartingTime, None, x, &grid, 200_000);
        assert_within_binomial(&a, &e, 200_000);
    }
}

#[test]
fn arrival_time_attendance_matches_simulated_crossings() {
    let grid = TimeGrid::new(4.0, 10, 1.0).unwrap();
    let quad = QuadratureSpec::gauss_legendre(32, 8);
    for x in [0.2, 0.45, 0.8] {
        let a = attendance(
            &spec(ScheduleVariant::ArrivalTime, Density1D::dirac(2.0).unwrap()),
            &grid,
            x,
            &quad,
        )
        .unwrap();
        let e = monte_carlo(ScheduleVariant::ArrivalTime, None, x, &grid, 200_000);
        assert_within_binomial(&a, &e, 200_000);
    }
}

#[test]
fn spread_velocities_match_simulated_crossings() {
    let grid = TimeGrid::new(4.0, 20, 0.5).unwrap();
    let quad = QuadratureSpec::gauss_legendre(32, 8);
    let s = spec(ScheduleVariant::StartingTime, uniform(1.0, 3.0));
    for x in [0.35, 0.7] {
        let a = attendance(&s, &grid, x, &quad).unwrap();
        let e = monte_carlo(
            ScheduleVariant::StartingTime,
            Some((1.0, 3.0)),
            x,
            &grid,
            200_000,
        );
        assert_within_binomial(&a, &e, 200_000);
    }
}

#[test]
fn no_trip_crosses_outside_the_hull_of_origins_and_destinations() {
    let s = spec(
        ScheduleVariant::StartingTime,
        Density1D::dirac(2.0).unwrap(),
    );
    let grid = TimeGrid::default();
    let quad = QuadratureSpec::default();
    for x in [-0.5, 1.5] {
        assert!(attendance(&s, &grid, x, &quad)
            .unwrap()
            .iter()
            .all(|&a| a == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oriented_fluxes_sum_to_the_total(k in 0usize..4, t in 0.0f64..24.0, x in 0.0f64..1.0, arrival in any::<bool>()) {
        let mut s = guiding::journeys()[k].clone();
        if arrival {
            s.schedule_variant = ScheduleVariant::ArrivalTime;
        }
        let q = QuadratureSpec::default();
        let sum = flux_right(&s, t, x, &q).unwrap() + flux_left(&s, t, x, &q).unwrap();
        let total = flux_unoriented(&s, t, x, &q).unwrap();
        prop_assert!((sum - total).abs() <= 1e-10 * total.abs().max(1.0));
    }

    #[test]
    fn mirroring_space_swaps_directions(k in 0usize..4, t in 0.0f64..24.0, x in 0.0f64..1.0) {
        let s = guiding::journeys()[k].clone();
        let m = s.mirrored(1.0);
        let q = QuadratureSpec::default();
        let r = flux_right(&s, t, x, &q).unwrap();
        let l = flux_left(&m, t, 1.0 - x, &q).unwrap();
        prop_assert!((r - l).abs() <= 1e-9 * r.abs().max(1e-6), "{} vs {}", r, l);
    }

    #[test]
    fn attendance_is_a_probability_profile(k in 0usize..4, x in 0.0f64..1.0) {
        let s = &guiding::journeys()[k];
        let a = attendance(s, &TimeGrid::default(), x, &QuadratureSpec::gauss_legendre(16, 8)).unwrap();
        prop_assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        // A trip crosses a point at most once.
        prop_assert!(a.iter().sum::<f64>() <= 1.0 + 1e-9);
    }

    #[test]
    fn fluxes_are_nonnegative(k in 0usize..4, t in 0.0f64..24.0, x in 0.0f64..1.0) {
        let s = &guiding::journeys()[k];
        let q = QuadratureSpec::gauss_legendre(16, 8);
        prop_assert!(flux_right(s, t, x, &q).unwrap() >= 0.0);
        prop_assert!(flux_left(s, t, x, &q).unwrap() >= 0.0);
    }
}
