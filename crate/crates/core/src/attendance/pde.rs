use super::flux::{branch, flux};
use super::{Direction, JourneyTypeSpec};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureSpec;

/// Below this the risk term `f / S` (or `f / F`) is not evaluated.
const RISK_FLOOR: f64 = 1e-12;

/// Largest strong-form residual of the transport equation over `points`.
///
/// With `P` the probability that the free end of the trip lies beyond `x`,
/// `f_a` the anchor density at `x` and `f_f` the free-end density, the
/// oriented flux of a Dirac-velocity journey satisfies
///
/// ```text
/// starting time:  ∂ₜν ± v∂ₓν = v P f_s(t|x) f_a(x) - v ν f_f(x) / P
/// arrival time:   ∂ₜν ± v∂ₓν = v ν f_f(x) / P - v P f_s(t|x) f_a(x)
/// ```
///
/// with `+` for rightward and `-` for leftward flux. Derivatives are central
/// differences with step `h` in both `t` and `x`, so the residual decays as
/// `h²` until quadrature noise over `h` takes over.
pub fn pde_residual(
    spec: &JourneyTypeSpec,
    dir: Direction,
    points: &[(f64, f64)],
    h: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    let v = spec.velocity.atom().ok_or_else(|| {
        Error::InvalidJourney(format!(
            "{}: residual check needs a Dirac velocity",
            spec.label
        ))
    })?;
    if !(h > 0.0) {
        return Err(Error::Domain(format!(
            "finite-difference step {h} must be positive"
        )));
    }
    let adv = match dir {
        Direction::Right => v,
        Direction::Left => -v,
    };
    let mut worst: f64 = 0.0;
    for &(t, x) in points {
        let b = branch(spec, x, dir);
        if b.factor < RISK_FLOOR {
            return Err(Error::SingularRisk { x, value: b.factor });
        }
        let nu = flux(spec, dir, t, x, quad)?;
        let dt = (flux(spec, dir, t + h, x, quad)? - flux(spec, dir, t - h, x, quad)?) / (2.0 * h);
        let dx = (flux(spec, dir, t, x + h, quad)? - flux(spec, dir, t, x - h, quad)?) / (2.0 * h);
        let source = v * b.factor * spec.schedule.density(t, x) * b.anchor.density(x)?;
        let death = v * nu * b.free.density(x)? / b.factor;
        // `sign` is -1 for starting-time and +1 for arrival-time schedules.
        let r = dt + adv * dx + b.sign * (source - death);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attendance::ScheduleVariant;
    use crate::distributions::{ConditionalSchedule, Density1D};

    fn smooth(variant: ScheduleVariant) -> JourneyTypeSpec {
        JourneyTypeSpec {
            label: "S".into(),
            schedule_variant: variant,
            velocity: Density1D::dirac(2.0).unwrap(),
            origin: Density1D::mixture(&[0.6, 0.4], &[0.3, 0.5], &[0.15, 0.2], 0.0, 1.0).unwrap(),
            destination: Density1D::mixture(&[1.0], &[0.6], &[0.2], 0.0, 1.0).unwrap(),
            schedule: ConditionalSchedule::shifted(
                Density1D::mixture(&[1.0], &[10.0], &[1.5], 0.0, 24.0).unwrap(),
                0.5,
            )
            .unwrap(),
        }
    }

    #[test]
    fn residual_is_small_on_smooth_specs() {
        let q = QuadratureSpec::default();
        let pts = [(9.0, 0.3), (10.5, 0.5), (11.0, 0.7)];
        for variant in [ScheduleVariant::StartingTime, ScheduleVariant::ArrivalTime] {
            for dir in [Direction::Right, Direction::Left] {
                let r = pde_residual(&smooth(variant), dir, &pts, 1e-4, &q).unwrap();
                assert!(r < 1e-6, "{variant:?} {dir:?}: {r}");
            }
        }
    }

    #[test]
    fn vanishing_survival_is_singular() {
        let mut s = smooth(ScheduleVariant::StartingTime);
        s.destination = Density1D::uniform(0.0, 0.5).unwrap();
        let r = pde_residual(
            &s,
            Direction::Right,
            &[(10.0, 0.6)],
            1e-3,
            &QuadratureSpec::default(),
        );
        assert!(matches!(r, Err(Error::SingularRisk { .. })));
    }

    #[test]
    fn non_dirac_velocity_is_rejected() {
        let mut s = smooth(ScheduleVariant::StartingTime);
        s.velocity = Density1D::uniform(1.0, 3.0).unwrap();
        assert!(pde_residual(
            &s,
            Direction::Right,
            &[(10.0, 0.5)],
            1e-3,
            &QuadratureSpec::default()
        )
        .is_err());
    }
}
