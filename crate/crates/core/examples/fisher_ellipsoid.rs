//! Fisher information of the guiding example under uniform counters and the
//! resulting 95% confidence ellipsoid for several numbers of counters.

use disagg::attendance::TheoreticalAttendance;
use disagg::experiment::guiding;
use disagg::statmodel::{confidence_ellipsoid, fisher_information};

fn main() -> disagg::Result<()> {
    let cfg = guiding::config();
    let source = TheoreticalAttendance {
        specs: cfg.journeys.clone(),
        grid: cfg.grid,
        quad: cfg.quadrature,
    };
    let fisher = fisher_information(&source, &cfg.counters.density, &cfg.true_n, &cfg.quadrature)?;
    println!("Fisher eigenvalues: {:?}", fisher.eigenvalues());

    for j in [15, 50, 200] {
        let e = confidence_ellipsoid(&fisher, &cfg.true_n, j, cfg.level)?;
        let axes: Vec<String> = e.semi_axes().iter().map(|a| format!("{a:.0}")).collect();
        println!("J = {j:>3}: semi-axes [{}]", axes.join(", "));
        let s = e.slice((2, 0))?;
        println!("         (RU, LR) slice area {:.3e}", s.area());
    }
    Ok(())
}
