//! Estimation error against the number of counters, on a reduced ladder.

use disagg::experiment::{cmd_consistency, guiding};

fn main() -> disagg::Result<()> {
    let mut cfg = guiding::config();
    cfg.consistency.ladder = vec![5, 10, 20, 40];
    cfg.consistency.replicates = 12;
    let out = std::env::temp_dir().join("disagg_consistency");
    let report = cmd_consistency(&cfg, &out)?;
    println!("   J  journey  median |rel err|   rel RMSE");
    for row in &report.rows {
        println!(
            "{:>4}  {:>7}  {:>16.4}  {:>9.4}",
            row.j, row.journey, row.median_abs_rel_error, row.rmse_rel
        );
    }
    println!(
        "pooled RMSE against 1/sqrt(J): R^2 = {:.3}",
        report.pooled_r_squared
    );
    Ok(())
}
