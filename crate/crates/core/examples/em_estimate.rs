//! Estimates the journey sizes from one Poisson day at 50 uniform counters
//! and reports the geometric convergence of EM.

use disagg::em::{em_convergence_rate, run_em, EmConfig};
use disagg::experiment::{generate_day, guiding, place_counters, theoretical_table};
use disagg::seed::SeedTree;

fn main() -> disagg::Result<()> {
    let cfg = guiding::config();
    let seeds = SeedTree::new(cfg.seed);
    let counters = place_counters(
        &cfg.counters.density,
        cfg.counters.count,
        &mut seeds.child("counters", 0).rng(),
    );
    let table = theoretical_table(&cfg, &counters)?;
    let data = generate_day(
        &cfg,
        &table,
        &counters,
        &cfg.true_n,
        0,
        seeds.child("noise", 0),
    )?;

    let state = run_em(&table, &data, &cfg.em)?;
    println!(
        "{} iterations, converged: {}",
        state.iterations, state.converged
    );
    for ((label, truth), est) in cfg.labels().iter().zip(&cfg.true_n).zip(&state.nu) {
        println!(
            "  {label:>3}: true {truth:>9.0}  estimate {est:>11.1}  rel. error {:+.4}",
            est / truth - 1.0
        );
    }

    let reference = run_em(
        &table,
        &data,
        &EmConfig {
            rel_tol: 1e-15,
            max_iters: 50_000,
            ..cfg.em.clone()
        },
    )?;
    let fit = em_convergence_rate(&state, &reference.nu)?;
    println!(
        "error contracts by {:.4} per iteration (R^2 = {:.4})",
        fit.rate, fit.r_squared
    );
    Ok(())
}
