//! Finite-difference residual of the transport equations satisfied by the
//! oriented fluxes, for both schedule variants.

use disagg::attendance::{pde_residual, Direction, ScheduleVariant};
use disagg::experiment::guiding;

fn main() -> disagg::Result<()> {
    let cfg = guiding::config();
    let points = &cfg.pde_check.points;
    for variant in [ScheduleVariant::StartingTime, ScheduleVariant::ArrivalTime] {
        println!("{variant:?}");
        for spec in &cfg.journeys {
            let mut spec = spec.clone();
            spec.schedule_variant = variant;
            for dir in [Direction::Right, Direction::Left] {
                let coarse = pde_residual(&spec, dir, points, 1e-2, &cfg.quadrature)?;
                let fine = pde_residual(&spec, dir, points, 5e-3, &cfg.quadrature)?;
                println!(
                    "  {:>3} {dir:?}: residual {coarse:.2e} -> {fine:.2e}, ratio {:.2}",
                    spec.label,
                    coarse / fine
                );
            }
        }
    }
    Ok(())
}
