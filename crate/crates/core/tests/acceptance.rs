//! Acceptance suite. Prints one `[PASS]` or `[FAIL]` line per criterion and
//! exits with status 1 if any criterion fails.
#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use disagg::attendance::{
    attendance, flux_left, flux_right, flux_unoriented, pde_residual, AttendanceSource, Direction,
    ScheduleVariant, TheoreticalAttendance, TimeGrid,
};
use disagg::distributions::Density1D;
use disagg::em::{e_step, em_convergence_rate, m_step, run_em, EmConfig};
use disagg::experiment::{
    cmd_attendance, cmd_consistency, cmd_estimate, cmd_pde_check, cmd_simulate, cmd_strategies,
    generate_day, guiding, place_counters, theoretical_table, ExperimentConfig,
};
use disagg::microsim::{simulate_day, CountDataset};
use disagg::quadrature::QuadratureSpec;
use disagg::seed::SeedTree;
use disagg::statmodel::{confidence_ellipsoid, fisher_information, score};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use common::*;

const E_STEP_TOL: f64 = 1e-12;
const M_STEP_REL_TOL: f64 = 1e-8;
const LL_MONOTONE_TOL: f64 = 1e-9;
const SCORE_REL_TOL: f64 = 1e-6;
const EM_VS_MLE_REL_TOL: f64 = 1e-4;
const EM_FIT_MIN_R2: f64 = 0.95;
const LADDER_MIN_R2: f64 = 0.8;
const COVERAGE_BAND: (f64, f64) = (0.90, 0.99);
const AXIS_RATIO_TOL: f64 = 1e-12;
const LLN_SIGMAS: f64 = 4.0;
const LLN_MIN_SHARE: f64 = 0.99;
const DECOMPOSITION_TOL: f64 = 1e-10;
const PDE_RATIO_BAND: (f64, f64) = (3.5, 4.5);
const FISHER_MC_SIGMAS: f64 = 3.0;
/// Ranking observed on first computation with the guiding example, smallest
/// ellipsoid first.
const PINNED_STRATEGY_RANKING: [&str; 3] = ["d_c", "d_u", "d_b"];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn budget(detail: &mut String, start: Instant, limit: Duration) -> bool {
    let took = start.elapsed();
    detail.push_str(&format!(
        "; {:.1}s (budget {}s)",
        took.as_secs_f64(),
        limit.as_secs()
    ));
    took <= limit
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut e_worst = 0.0f64;
    let mut m_worst = 0.0f64;
    for k in 1..=3usize {
        for n in 0..=8u64 {
            for _ in 0..20 {
                let nu: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..50.0)).collect();
                let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let (table, data) = one_cell(&a, n);
                let z = e_step(&nu, &table, &data).unwrap();
                let lambda: Vec<f64> = nu.iter().zip(&a).map(|(v, x)| v * x).collect();
                let oracle = posterior_mean_by_enumeration(n, &lambda);
                for (zk, ok) in z.iter().zip(&oracle) {
                    e_worst = e_worst.max((zk - ok).abs());
                }
            }
        }
    }
    // M step on random multi-cell responsibilities against a 1D maximizer of
    // Σ z ln(ν a) - ν a for each journey.
    for _ in 0..200 {
        let k = rng.random_range(1..=3usize);
        let cells = rng.random_range(1..=6usize);
        let a: Vec<f64> = (0..k * cells)
            .map(|_| rng.random_range(0.01..1.0))
            .collect();
        let z: Vec<f64> = (0..k * cells).map(|_| rng.random_range(0.0..8.0)).collect();
        let table = column_table(k, cells, &a);
        let nu = m_step(&z, &table).unwrap();
        for kk in 0..k {
            let zs: f64 = z[kk * cells..(kk + 1) * cells].iter().sum();
            let as_: f64 = a[kk * cells..(kk + 1) * cells].iter().sum();
            let best = argmax_concave(|v| zs / v - as_, 1e-12, 1e6);
            m_worst = m_worst.max((nu[kk] - best).abs() / best.max(1e-300));
        }
    }
    let mut detail = format!("E step max |diff| {e_worst:.2e} (tol {E_STEP_TOL:e}), M step max rel {m_worst:.2e} (tol {M_STEP_REL_TOL:e})");
    let fast = budget(&mut detail, start, Duration::from_secs(10));
    outcome(
        e_worst <= E_STEP_TOL && m_worst <= M_STEP_REL_TOL && fast,
        detail,
    )
}

fn one_cell(a: &[f64], n: u64) -> (disagg::attendance::AttendanceTable, CountDataset) {
    let table = column_table(a.len(), 1, a);
    let data = CountDataset {
        day: 0,
        seed: 0,
        grid: *table.grid(),
        locations: table.locations().to_vec(),
        journey_labels: table.journey_labels().to_vec(),
        counts: vec![n],
        hidden: None,
    };
    (table, data)
}

// `cells` time steps at one location.
fn column_table(k: usize, cells: usize, a: &[f64]) -> disagg::attendance::AttendanceTable {
    disagg::attendance::AttendanceTable::new(
        (0..k).map(|m| format!("k{m}")).collect(),
        TimeGrid::new(0.0, cells, 1.0).unwrap(),
        vec![0.5],
        a.to_vec(),
    )
    .unwrap()
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = EmConfig {
        rel_tol: 1e-13,
        max_iters: 200_000,
        ..EmConfig::default()
    };
    let mut ll_drop = 0.0f64;
    let mut score_worst = 0.0f64;
    let mut mle_worst = 0.0f64;
    for _ in 0..100 {
        let i = rng.random_range(1..=2usize);
        let j = rng.random_range(1..=2usize);
        // More journeys than cells leaves a ridge of maximizers.
        let k = rng.random_range(1..=3usize.min(i * j));
        let nu_true: Vec<f64> = (0..k).map(|_| rng.random_range(20.0..500.0)).collect();
        let (table, data) = random_instance(&mut rng, k, i, j, &nu_true);
        if data.total() == 0 {
            continue;
        }
        let state = run_em(&table, &data, &cfg).unwrap();
        for w in state.ll_trace.windows(2) {
            ll_drop = ll_drop.max((w[0] - w[1]) / w[0].abs().max(1.0));
        }
        // Relative score: each component against the expected-count scale of
        // that journey. Components on the boundary only need a nonpositive score.
        let g = score(&table, &state.nu, &data).unwrap();
        let totals = table.journey_totals();
        for ((gk, ak), nk) in g.iter().zip(&totals).zip(&state.nu) {
            let rel = gk / ak;
            let bad = if *nk > 1e-6 * data.total() as f64 {
                rel.abs()
            } else {
                rel.max(0.0)
            };
            score_worst = score_worst.max(bad);
        }
        let mle = aggregated_mle(&table_rows(&table), &data.counts);
        let scale = mle.iter().cloned().fold(1.0, f64::max);
        let diff = state
            .nu
            .iter()
            .zip(&mle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / scale;
        mle_worst = mle_worst.max(diff);
    }
    let mut detail = format!(
        "max LL decrease {ll_drop:.2e} rel (tol {LL_MONOTONE_TOL:e}), max rel score {score_worst:.2e} (tol {SCORE_REL_TOL:e}), max EM vs MLE {mle_worst:.2e} (tol {EM_VS_MLE_REL_TOL:e})"
    );
    let fast = budget(&mut detail, start, Duration::from_secs(120));
    outcome(
        ll_drop <= LL_MONOTONE_TOL
            && score_worst < SCORE_REL_TOL
            && mle_worst <= EM_VS_MLE_REL_TOL
            && fast,
        detail,
    )
}

fn guiding_day(cfg: &ExperimentConfig) -> (disagg::attendance::AttendanceTable, CountDataset) {
    let seeds = SeedTree::new(cfg.seed);
    let counters = place_counters(
        &cfg.counters.density,
        cfg.counters.count,
        &mut seeds.child("counters", 0).rng(),
    );
    let table = theoretical_table(cfg, &counters).unwrap();
    let data = generate_day(
        cfg,
        &table,
        &counters,
        &cfg.true_n,
        0,
        seeds.child("noise", 0),
    )
    .unwrap();
    (table, data)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let cfg = guiding::config();
    let (table, data) = guiding_day(&cfg);
    let state = run_em(&table, &data, &cfg.em).unwrap();
    let reference = run_em(
        &table,
        &data,
        &EmConfig {
            rel_tol: 1e-15,
            max_iters: 100_000,
            ..cfg.em.clone()
        },
    )
    .unwrap();
    let fit = em_convergence_rate(&state, &reference.nu).unwrap();
    let mut detail = format!(
        "J = {}, {} iterations, rate {:.5}, R^2 {:.5} (min {EM_FIT_MIN_R2})",
        table.n_locations(),
        state.iterations,
        fit.rate,
        fit.r_squared
    );
    let fast = budget(&mut detail, start, Duration::from_secs(30));
    outcome(
        fit.r_squared > EM_FIT_MIN_R2 && fit.rate < 1.0 && fast,
        detail,
    )
}

fn criterion_4(out: &Path) -> Outcome {
    let start = Instant::now();
    let cfg = guiding::config();
    let report = cmd_consistency(&cfg, &out.join("consistency")).unwrap();
    let ladder = &cfg.consistency.ladder;
    let labels = cfg.labels();
    let mut endpoints_ok = true;
    let mut monotone_steps = 0;
    let mut steps = 0;
    let mut parts = Vec::new();
    for label in &labels {
        let med: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| &r.journey == label)
            .map(|r| r.median_abs_rel_error)
            .collect();
        endpoints_ok &= med[med.len() - 1] < med[0];
        for w in med.windows(2) {
            steps += 1;
            monotone_steps += (w[1] < w[0]) as usize;
        }
        parts.push(format!("{label} {:.4}->{:.4}", med[0], med[med.len() - 1]));
    }
    let r2 = report.pooled_r_squared;
    let mut detail = format!(
        "{} replicates, J {}..{}; median rel err {}; consecutive decreases {monotone_steps}/{steps}; pooled RMSE~1/sqrt(J) R^2 {r2:.3} (min {LADDER_MIN_R2})",
        cfg.consistency.replicates,
        ladder[0],
        ladder[ladder.len() - 1],
        parts.join(", ")
    );
    let fast = budget(&mut detail, start, Duration::from_secs(600));
    outcome(endpoints_ok && r2 > LADDER_MIN_R2 && fast, detail)
}

fn criterion_5(out: &Path) -> Outcome {
    let start = Instant::now();
    let mut cfg = guiding::config();
    cfg.replicates = 200;
    let report = cmd_estimate(&cfg, None, &out.join("coverage")).unwrap();
    let c = report.coverage;
    let mut detail = format!(
        "{} replicates at J = {}, coverage {:.3} (band [{}, {}])",
        report.estimates.len(),
        cfg.counters.count,
        c,
        COVERAGE_BAND.0,
        COVERAGE_BAND.1
    );
    let fast = budget(&mut detail, start, Duration::from_secs(600));
    outcome(
        (COVERAGE_BAND.0..=COVERAGE_BAND.1).contains(&c) && fast,
        detail,
    )
}

fn criterion_6() -> Outcome {
    let cfg = guiding::config();
    let src = TheoreticalAttendance {
        specs: cfg.journeys.clone(),
        grid: cfg.grid,
        quad: coarse_quad(),
    };
    let fisher =
        fisher_information(&src, &cfg.counters.density, &cfg.true_n, &coarse_quad()).unwrap();
    let mut worst = 0.0f64;
    for j in [1usize, 15, 50, 123] {
        let a = confidence_ellipsoid(&fisher, &cfg.true_n, j, cfg.level)
            .unwrap()
            .semi_axes();
        let b = confidence_ellipsoid(&fisher, &cfg.true_n, 4 * j, cfg.level)
            .unwrap()
            .semi_axes();
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x / y - 2.0).abs());
        }
    }
    outcome(
        worst <= AXIS_RATIO_TOL,
        format!("max |axis(J)/axis(4J) - 2| = {worst:.2e} (tol {AXIS_RATIO_TOL:e})"),
    )
}

fn coarse_quad() -> QuadratureSpec {
    QuadratureSpec::gauss_legendre(8, 8)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = guiding::config();
    let lr = cfg.journeys[0].clone();
    let probes = [0.1, 0.3, 0.5, 0.7, 0.9];
    let trips = 1_000_000u64;
    let data = simulate_day(
        std::slice::from_ref(&lr),
        &[trips],
        &probes,
        &cfg.grid,
        0,
        77,
    )
    .unwrap();
    let mut inside = 0;
    let mut cells = 0;
    for (j, &x) in probes.iter().enumerate() {
        let a = attendance(&lr, &cfg.grid, x, &cfg.quadrature).unwrap();
        for (i, ai) in a.iter().enumerate() {
            let emp = data.count(i, j) as f64 / trips as f64;
            let sigma = (ai * (1.0 - ai) / trips as f64).sqrt();
            cells += 1;
            inside += ((emp - ai).abs() <= LLN_SIGMAS * sigma) as usize;
        }
    }
    let share = inside as f64 / cells as f64;
    let mut detail = format!("{inside}/{cells} cells within {LLN_SIGMAS} binomial sigma ({share:.4}, min {LLN_MIN_SHARE})");
    let fast = budget(&mut detail, start, Duration::from_secs(120));
    outcome(share >= LLN_MIN_SHARE && fast, detail)
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = guiding::config();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut decomposition = 0.0f64;
    let mut ratios = Vec::new();
    for variant in [ScheduleVariant::StartingTime, ScheduleVariant::ArrivalTime] {
        for spec in &cfg.journeys {
            let mut spec = spec.clone();
            spec.schedule_variant = variant;
            for _ in 0..100 {
                let t = rng.random_range(0.0..24.0);
                let x = rng.random_range(0.0..1.0);
                let r = flux_right(&spec, t, x, &cfg.quadrature).unwrap();
                let l = flux_left(&spec, t, x, &cfg.quadrature).unwrap();
                let total = flux_unoriented(&spec, t, x, &cfg.quadrature).unwrap();
                decomposition = decomposition.max((r + l - total).abs());
            }
            for dir in [Direction::Right, Direction::Left] {
                let coarse =
                    pde_residual(&spec, dir, &cfg.pde_check.points, 1e-2, &cfg.quadrature).unwrap();
                let fine =
                    pde_residual(&spec, dir, &cfg.pde_check.points, 5e-3, &cfg.quadrature).unwrap();
                ratios.push(coarse / fine);
            }
        }
    }
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ratios_ok = ratios
        .iter()
        .all(|r| (PDE_RATIO_BAND.0..=PDE_RATIO_BAND.1).contains(r));
    let mut detail = format!(
        "decomposition max |diff| {decomposition:.2e} (tol {DECOMPOSITION_TOL:e}); {} residual ratios for h 1e-2 -> 5e-3 in [{lo:.3}, {hi:.3}] (band [{}, {}])",
        ratios.len(),
        PDE_RATIO_BAND.0,
        PDE_RATIO_BAND.1
    );
    let fast = budget(&mut detail, start, Duration::from_secs(60));
    outcome(
        decomposition < DECOMPOSITION_TOL && ratios_ok && fast,
        detail,
    )
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let cfg = guiding::config();
    let quad = coarse_quad();
    let src = TheoreticalAttendance {
        specs: cfg.journeys.clone(),
        grid: cfg.grid,
        quad,
    };
    let density = Density1D::uniform(0.0, 1.0).unwrap();
    let fisher = fisher_information(&src, &density, &cfg.true_n, &quad).unwrap();

    // Score of one counter with random location and Poisson counts at the
    // true sizes; its covariance estimates the per-counter Fisher matrix.
    let k = cfg.journeys.len();
    let i_n = cfg.grid.n_steps;
    let samples = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sum = vec![vec![0.0; k]; k];
    let mut sum_sq = vec![vec![0.0; k]; k];
    for _ in 0..samples {
        let x = density.sample(&mut rng);
        let prof = src.profile(x).unwrap();
        let mut s = vec![0.0; k];
        for i in 0..i_n {
            let lam: f64 = (0..k).map(|kk| cfg.true_n[kk] * prof[kk * i_n + i]).sum();
            if lam <= 0.0 {
                continue;
            }
            let n = Poisson::new(lam).unwrap().sample(&mut rng);
            for kk in 0..k {
                s[kk] += prof[kk * i_n + i] * (n / lam - 1.0);
            }
        }
        for p in 0..k {
            for q in 0..k {
                let v = s[p] * s[q];
                sum[p][q] += v;
                sum_sq[p][q] += v * v;
            }
        }
    }
    let m = samples as f64;
    let mut worst_z = 0.0f64;
    for p in 0..k {
        for q in 0..k {
            let mean = sum[p][q] / m;
            let var = (sum_sq[p][q] / m - mean * mean) * m / (m - 1.0);
            let se = (var / m).sqrt();
            worst_z = worst_z.max((mean - fisher.matrix[p][q]).abs() / se);
        }
    }
    let symmetric = fisher.max_asymmetry() == 0.0;
    let pd = fisher.eigenvalues()[0] > 0.0;
    let mut detail = format!(
        "{samples} counters, max |MC - quadrature| = {worst_z:.2} MC sigma (max {FISHER_MC_SIGMAS}); symmetric {symmetric}, smallest eigenvalue {:.3e}",
        fisher.eigenvalues()[0]
    );
    let fast = budget(&mut detail, start, Duration::from_secs(120));
    outcome(
        worst_z <= FISHER_MC_SIGMAS && symmetric && pd && fast,
        detail,
    )
}

fn criterion_10(out: &Path) -> Outcome {
    let start = Instant::now();
    let mut cfg = guiding::config();
    cfg.counters.count = 15;
    let a = cmd_strategies(&cfg, &out.join("strategies_a")).unwrap();
    let b = cmd_strategies(&cfg, &out.join("strategies_b")).unwrap();
    let pd = a.reports.iter().all(|r| r.ellipsoid.is_positive_definite());
    let same = a.ranking == b.ranking
        && a.reports
            .iter()
            .zip(&b.reports)
            .all(|(x, y)| x.determinant == y.determinant);
    let pinned = a.ranking == PINNED_STRATEGY_RANKING;
    let boundary_best = a.ranking.first().map(String::as_str) == Some("d_b");
    let areas: Vec<String> = a
        .reports
        .iter()
        .map(|r| {
            format!(
                "{} {:.3e}",
                r.strategy_label,
                r.ellipsoid.slice((2, 0)).unwrap().area()
            )
        })
        .collect();
    let mut detail = format!(
        "ranking {:?} (pinned {:?}); (RU, LR) slice areas {}; boundary strategy smallest: {boundary_best}",
        a.ranking,
        PINNED_STRATEGY_RANKING,
        areas.join(", ")
    );
    let fast = budget(&mut detail, start, Duration::from_secs(60));
    outcome(pd && same && pinned && fast, detail)
}

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn criterion_11(out: &Path) -> Outcome {
    let start = Instant::now();
    let mut cfg = guiding::config();
    cfg.counters.count = 12;
    cfg.replicates = 3;
    cfg.days = 2;
    cfg.dense_locations = 16;
    cfg.consistency.ladder = vec![4, 8, 12];
    cfg.consistency.replicates = 3;
    cfg.quadrature = coarse_quad();
    // Two learning days leave zero cells that the estimators reject, so the
    // empirical table is only exercised by the attendance command.
    let mut learned = cfg.clone();
    learned.attendance_mode = disagg::experiment::AttendanceMode::Empirical { days: 2 };
    let mut mismatched = Vec::new();
    let mut files = 0;
    for run in [
        "attendance",
        "simulate",
        "estimate",
        "consistency",
        "strategies",
        "pde-check",
    ] {
        let dirs = [
            out.join(format!("det_{run}_a")),
            out.join(format!("det_{run}_b")),
        ];
        for d in &dirs {
            match run {
                "attendance" => cmd_attendance(&learned, d).map(|_| ()),
                "simulate" => cmd_simulate(&cfg, d).map(|_| ()),
                "estimate" => cmd_estimate(&cfg, None, d).map(|_| ()),
                "consistency" => cmd_consistency(&cfg, d).map(|_| ()),
                "strategies" => cmd_strategies(&cfg, d).map(|_| ()),
                _ => cmd_pde_check(&cfg, d).map(|_| ()),
            }
            .unwrap();
        }
        let (a, b) = (tree(&dirs[0]), tree(&dirs[1]));
        files += a.len();
        if a != b {
            mismatched.push(run);
        }
    }
    let mut detail =
        format!("6 commands run twice, {files} files compared, mismatches: {mismatched:?}");
    let fast = budget(&mut detail, start, Duration::from_secs(600));
    outcome(mismatched.is_empty() && fast, detail)
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(|| criterion_4(out))),
        (5, Box::new(|| criterion_5(out))),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(criterion_8)),
        (9, Box::new(criterion_9)),
        (10, Box::new(|| criterion_10(out))),
        (11, Box::new(|| criterion_11(out))),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (n, run) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let o = run();
        println!(
            "[{}] criterion {n}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += (!o.pass) as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
