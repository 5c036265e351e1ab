//! Compares uniform, boundary-weighted and centre-weighted counter
//! placements by the size of their confidence ellipsoids.

use disagg::experiment::{cmd_strategies, guiding};

fn main() -> disagg::Result<()> {
    let mut cfg = guiding::config();
    cfg.counters.count = 15;
    let out = std::env::temp_dir().join("disagg_strategies");
    let report = cmd_strategies(&cfg, &out)?;
    for r in &report.reports {
        println!(
            "{:>4}: det(shape) = {:.3e}, (RU, LR) slice area = {:.3e}",
            r.strategy_label,
            r.determinant,
            r.ellipsoid.slice((2, 0))?.area()
        );
    }
    println!("smallest ellipsoid first: {}", report.ranking.join(" < "));
    println!("files in {}", out.display());
    Ok(())
}
