//! Hourly attendance of the guiding journeys at a few locations, with the
//! rightward and leftward parts of the flux at one instant.

use disagg::attendance::{attendance, flux_left, flux_right, flux_unoriented};
use disagg::experiment::guiding;
use disagg::quadrature::QuadratureSpec;

fn main() -> disagg::Result<()> {
    let cfg = guiding::config();
    let quad = QuadratureSpec::default();
    let probes = [0.2, 0.5, 0.8];

    for spec in &cfg.journeys {
        println!("{}", spec.label);
        println!("  hour {}", probes.map(|x| format!("{x:>10}")).join(""));
        let profiles: Vec<Vec<f64>> = probes
            .iter()
            .map(|&x| attendance(spec, &cfg.grid, x, &quad))
            .collect::<disagg::Result<_>>()?;
        for i in 0..cfg.grid.n_steps {
            let row: String = profiles.iter().map(|p| format!("{:>10.5}", p[i])).collect();
            println!("  {i:>4} {row}");
        }
        let daily: Vec<f64> = profiles.iter().map(|p| p.iter().sum()).collect();
        println!(
            "  day  {}",
            daily
                .iter()
                .map(|v| format!("{v:>10.5}"))
                .collect::<String>()
        );
    }

    let lr = &cfg.journeys[0];
    let (t, x) = (8.5, 0.5);
    let r = flux_right(lr, t, x, &quad)?;
    let l = flux_left(lr, t, x, &quad)?;
    let total = flux_unoriented(lr, t, x, &quad)?;
    println!(
        "\n{} flux at t = {t}, x = {x}: right {r:.6} + left {l:.6} = {total:.6}",
        lr.label
    );
    Ok(())
}
