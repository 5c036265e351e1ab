use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{
    day_populations, draw_counters, estimation_table, generate_day, place_counters,
    quantile_sorted, theoretical_table, ExperimentConfig, OutputDir, Resample,
};
use crate::attendance::{
    pde_residual, AttendanceSource, AttendanceTable, Direction, TheoreticalAttendance,
};
use crate::distributions::Density1D;
use crate::em::{run_em, EmState};
use crate::error::{Error, Result};
use crate::microsim::{counts_to_csv, hidden_to_csv, read_counts_csv, CountDataset};
use crate::seed::SeedTree;
use crate::statmodel::{
    confidence_ellipsoid, fisher_from_profiles, score, ConfidenceEllipsoid, FisherMatrix,
};

fn counters_csv(xs: &[f64]) -> String {
    let mut s = String::from("counter_id,location\n");
    for (j, x) in xs.iter().enumerate() {
        let _ = writeln!(s, "{j},{x:.16e}");
    }
    s
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|m| lo + (hi - lo) * m as f64 / (n - 1) as f64)
        .collect()
}

/// Attendance of every journey at the counters and on a dense grid.
#[derive(Debug, Clone)]
pub struct AttendanceReport {
    pub counters: Vec<f64>,
    pub table: AttendanceTable,
    pub dense: AttendanceTable,
    pub empirical: Option<AttendanceTable>,
}

pub fn cmd_attendance(cfg: &ExperimentConfig, out: &Path) -> Result<AttendanceReport> {
    let seeds = SeedTree::new(cfg.seed);
    let mut dir = OutputDir::create(out)?;
    let counters = place_counters(
        &cfg.counters.density,
        cfg.counters.count,
        &mut seeds.child("counters", 0).rng(),
    );
    let table = theoretical_table(cfg, &counters)?;
    let dense = theoretical_table(
        cfg,
        &linspace(cfg.domain.0, cfg.domain.1, cfg.dense_locations),
    )?;
    dir.write("counters.csv", counters_csv(&counters).as_bytes())?;
    dir.write("attendance.csv", table.to_csv().as_bytes())?;
    dir.write("attendance_dense.csv", dense.to_csv().as_bytes())?;
    let empirical = match cfg.attendance_mode {
        super::AttendanceMode::Theoretical => None,
        super::AttendanceMode::Empirical { .. } => {
            let e = estimation_table(cfg, &table, seeds.child("learning_root", 0))?;
            dir.write("attendance_empirical.csv", e.to_csv().as_bytes())?;
            Some(e)
        }
    };
    dir.finish()?;
    Ok(AttendanceReport {
        counters,
        table,
        dense,
        empirical,
    })
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub days: Vec<CountDataset>,
    /// Trips per journey on each day.
    pub populations: Vec<Vec<f64>>,
}

fn day_counters(cfg: &ExperimentConfig, seeds: SeedTree, index: u64) -> Vec<f64> {
    let slot = match cfg.counters.resample {
        Resample::Fixed => 0,
        Resample::PerReplicate => index,
    };
    place_counters(
        &cfg.counters.density,
        cfg.counters.count,
        &mut seeds.child("counters", slot).rng(),
    )
}

/// Simulates `cfg.days` days and writes aggregate and per-journey counts.
pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<SimulateReport> {
    let seeds = SeedTree::new(cfg.seed);
    let mut dir = OutputDir::create(out)?;
    let mut cached: Option<AttendanceTable> = None;
    let mut days = Vec::with_capacity(cfg.days);
    let mut populations = Vec::with_capacity(cfg.days);
    let mut pops_csv = String::from("day,journey,n_trips\n");
    for d in 0..cfg.days as u64 {
        let counters = day_counters(cfg, seeds, d);
        let table = match &cached {
            Some(t) if t.locations() == counters.as_slice() => t.clone(),
            _ => theoretical_table(cfg, &counters)?,
        };
        let n = day_populations(cfg, seeds.child("day_law", d));
        let data = generate_day(cfg, &table, &counters, &n, d, seeds.child("trips", d))?;
        dir.write(
            &format!("counts/day_{d:04}.csv"),
            counts_to_csv(std::slice::from_ref(&data)).as_bytes(),
        )?;
        dir.write(
            &format!("hidden/day_{d:04}.csv"),
            hidden_to_csv(std::slice::from_ref(&data)).as_bytes(),
        )?;
        for (label, v) in cfg.labels().iter().zip(&n) {
            let _ = writeln!(pops_csv, "{d},{label},{v}");
        }
        if cfg.counters.resample == Resample::Fixed && d == 0 {
            dir.write("attendance.csv", table.to_csv().as_bytes())?;
        }
        cached = Some(table);
        populations.push(n);
        days.push(data);
    }
    dir.write("populations.csv", pops_csv.as_bytes())?;
    dir.finish()?;
    Ok(SimulateReport { days, populations })
}

/// Files to estimate from; without them `cmd_estimate` simulates its own
/// replicates at `true_n`.
#[derive(Debug, Clone)]
pub struct EstimateInputs {
    pub counts: PathBuf,
    pub table: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplicateEstimate {
    pub replicate: usize,
    pub nu: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub log_likelihood: f64,
    pub score_max_abs: f64,
    pub total_count: u64,
    pub fisher: FisherMatrix,
    pub ellipsoid: ConfidenceEllipsoid,
    /// `(N - N̂)ᵀ shape (N - N̂)` for the configured true sizes.
    pub true_n_form: f64,
    pub covers_true_n: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimates: Vec<ReplicateEstimate>,
    pub coverage: f64,
    #[serde(skip)]
    pub first_state: Option<EmState>,
}

// Attendance profiles at the nodes of the counter density, reused for every
// Fisher evaluation with that density.
struct FisherNodes {
    nodes: Vec<(f64, f64)>,
    profiles: Vec<Vec<f64>>,
    k: usize,
    i: usize,
}

impl FisherNodes {
    fn new(cfg: &ExperimentConfig, density: &Density1D) -> Result<Self> {
        let source = TheoreticalAttendance {
            specs: cfg.journeys.clone(),
            grid: cfg.grid,
            quad: cfg.quadrature,
        };
        let (lo, hi) = density.support();
        let nodes = density.quadrature_nodes(lo, hi, &cfg.quadrature)?;
        let profiles = nodes
            .par_iter()
            .map(|&(x, _)| source.profile(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            nodes,
            profiles,
            k: source.n_journeys(),
            i: source.n_steps(),
        })
    }

    fn fisher(&self, n: &[f64]) -> Result<FisherMatrix> {
        fisher_from_profiles(&self.nodes, &self.profiles, self.k, self.i, n)
    }
}

fn estimate_one(
    cfg: &ExperimentConfig,
    table: &AttendanceTable,
    data: &CountDataset,
    fisher_nodes: &FisherNodes,
    replicate: usize,
) -> Result<(ReplicateEstimate, EmState)> {
    let state = run_em(table, data, &cfg.em)?;
    let g = score(table, &state.nu, data)?;
    let fisher = fisher_nodes.fisher(&state.nu)?;
    let ellipsoid = confidence_ellipsoid(&fisher, &state.nu, table.n_locations(), cfg.level)?;
    let form = ellipsoid.quadratic_form(&cfg.true_n);
    Ok((
        ReplicateEstimate {
            replicate,
            nu: state.nu.clone(),
            iterations: state.iterations,
            converged: state.converged,
            log_likelihood: *state.ll_trace.last().expect("trace is never empty"),
            score_max_abs: g.iter().fold(0.0, |m, v| m.max(v.abs())),
            total_count: data.total(),
            fisher,
            ellipsoid,
            true_n_form: form,
            covers_true_n: form < 1.0,
        },
        state,
    ))
}

fn write_estimate(
    dir: &mut OutputDir,
    tag: &str,
    est: &ReplicateEstimate,
    state: &EmState,
) -> Result<()> {
    dir.write_json(&format!("estimate_{tag}.json"), est)?;
    dir.write(&format!("em_trace_{tag}.csv"), state.trace_csv().as_bytes())?;
    for s in est.ellipsoid.all_slices() {
        dir.write(
            &format!("slices/{tag}_{}_{}.csv", s.dims.0, s.dims.1),
            s.to_csv().as_bytes(),
        )?;
    }
    Ok(())
}

/// Runs EM and the Fisher ellipsoid on given count files, or on
/// `cfg.replicates` simulated days at `true_n` when `inputs` is `None`.
pub fn cmd_estimate(
    cfg: &ExperimentConfig,
    inputs: Option<&EstimateInputs>,
    out: &Path,
) -> Result<EstimateReport> {
    let seeds = SeedTree::new(cfg.seed);
    let mut dir = OutputDir::create(out)?;
    let fisher_nodes = FisherNodes::new(cfg, &cfg.counters.density)?;
    let mut estimates = Vec::new();
    let mut first_state = None;
    match inputs {
        Some(files) => {
            let table = AttendanceTable::read_csv(&files.table, cfg.grid)?;
            let days = read_counts_csv(&files.counts, cfg.grid)?;
            for (r, day) in days.iter().enumerate() {
                let (est, state) = estimate_one(cfg, &table, day, &fisher_nodes, r)?;
                write_estimate(&mut dir, &format!("day_{:04}", day.day), &est, &state)?;
                first_state.get_or_insert(state);
                estimates.push(est);
            }
        }
        None => {
            let runs = (0..cfg.replicates)
                .into_par_iter()
                .map(|r| {
                    let counters = day_counters(cfg, seeds, r as u64);
                    let theo = theoretical_table(cfg, &counters)?;
                    let table =
                        estimation_table(cfg, &theo, seeds.child("learning_root", r as u64))?;
                    let data = generate_day(
                        cfg,
                        &theo,
                        &counters,
                        &cfg.true_n,
                        r as u64,
                        seeds.child("noise", r as u64),
                    )?;
                    estimate_one(cfg, &table, &data, &fisher_nodes, r)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut summary = String::from("replicate,covered,true_n_form,iterations");
            for k in 1..=cfg.journeys.len() {
                let _ = write!(summary, ",nu_{k}");
            }
            summary.push('\n');
            for (est, state) in runs {
                let _ = write!(
                    summary,
                    "{},{},{:.16e},{}",
                    est.replicate, est.covers_true_n as u8, est.true_n_form, est.iterations
                );
                for v in &est.nu {
                    let _ = write!(summary, ",{v:.16e}");
                }
                summary.push('\n');
                if est.replicate == 0 {
                    write_estimate(&mut dir, "replicate_0000", &est, &state)?;
                    first_state = Some(state);
                }
                estimates.push(est);
            }
            dir.write("estimates.csv", summary.as_bytes())?;
        }
    }
    let coverage = if estimates.is_empty() {
        0.0
    } else {
        estimates.iter().filter(|e| e.covers_true_n).count() as f64 / estimates.len() as f64
    };
    dir.write_json(
        "coverage.json",
        &serde_json::json!({ "replicates": estimates.len(), "coverage": coverage }),
    )?;
    dir.finish()?;
    Ok(EstimateReport {
        estimates,
        coverage,
        first_state,
    })
}

/// Per-rung, per-journey summary of the consistency ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyRow {
    pub j: usize,
    pub journey: String,
    /// Quantiles 5, 25, 50, 75, 95 % of the estimates.
    pub quantiles: [f64; 5],
    pub median_abs_rel_error: f64,
    pub rmse_rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub rows: Vec<ConsistencyRow>,
    /// Relative RMSE pooled over journeys, per rung.
    pub pooled_rmse: Vec<(usize, f64)>,
    /// R² of the pooled RMSE regressed on `1/√J`.
    pub pooled_r_squared: f64,
    /// Same regression per journey.
    pub journey_r_squared: Vec<f64>,
    /// `estimates[r][rung][k]`.
    #[serde(skip)]
    pub estimates: Vec<Vec<Vec<f64>>>,
}

fn r_squared(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        f64::NAN
    }
}

/// For every replicate, one day at the largest rung's counters; each rung
/// estimates from the first `J` of those counters.
pub fn cmd_consistency(cfg: &ExperimentConfig, out: &Path) -> Result<ConsistencyReport> {
    let seeds = SeedTree::new(cfg.seed);
    let mut dir = OutputDir::create(out)?;
    let ladder = &cfg.consistency.ladder;
    let j_max = *ladder.iter().max().expect("validated nonempty");
    let estimates = (0..cfg.consistency.replicates)
        .into_par_iter()
        .map(|r| {
            let slot = match cfg.counters.resample {
                Resample::Fixed => 0,
                Resample::PerReplicate => r as u64,
            };
            let counters = draw_counters(
                &cfg.counters.density,
                j_max,
                &mut seeds.child("counters", slot).rng(),
            );
            let theo = theoretical_table(cfg, &counters)?;
            let table = estimation_table(cfg, &theo, seeds.child("learning_root", r as u64))?;
            let data = generate_day(
                cfg,
                &theo,
                &counters,
                &cfg.true_n,
                r as u64,
                seeds.child("noise", r as u64),
            )?;
            ladder
                .iter()
                .map(|&j| Ok(run_em(&table.truncated(j), &data.truncated(j), &cfg.em)?.nu))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let labels = cfg.labels();
    let mut rows = Vec::new();
    let mut pooled_rmse = Vec::new();
    let mut csv = String::from("J,journey,q05,q25,q50,q75,q95\n");
    for (rung, &j) in ladder.iter().enumerate() {
        let mut pooled = 0.0;
        for (k, label) in labels.iter().enumerate() {
            let truth = cfg.true_n[k];
            let mut est: Vec<f64> = estimates.iter().map(|e| e[rung][k]).collect();
            est.sort_by(f64::total_cmp);
            let mut err: Vec<f64> = est.iter().map(|v| ((v - truth) / truth).abs()).collect();
            err.sort_by(f64::total_cmp);
            let mse = err.iter().map(|e| e * e).sum::<f64>() / err.len() as f64;
            pooled += mse;
            let q = [0.05, 0.25, 0.5, 0.75, 0.95].map(|p| quantile_sorted(&est, p));
            let _ = writeln!(
                csv,
                "{j},{label},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                q[0], q[1], q[2], q[3], q[4]
            );
            rows.push(ConsistencyRow {
                j,
                journey: label.clone(),
                quantiles: q,
                median_abs_rel_error: quantile_sorted(&err, 0.5),
                rmse_rel: mse.sqrt(),
            });
        }
        pooled_rmse.push((j, (pooled / labels.len().max(1) as f64).sqrt()));
    }
    let inv_sqrt = |j: usize| 1.0 / (j as f64).sqrt();
    let pooled_r_squared = r_squared(
        &pooled_rmse
            .iter()
            .map(|&(j, r)| (inv_sqrt(j), r))
            .collect::<Vec<_>>(),
    );
    let journey_r_squared = (0..labels.len())
        .map(|k| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .skip(k)
                .step_by(labels.len())
                .map(|row| (inv_sqrt(row.j), row.rmse_rel))
                .collect();
            r_squared(&pts)
        })
        .collect();
    let report = ConsistencyReport {
        rows,
        pooled_rmse,
        pooled_r_squared,
        journey_r_squared,
        estimates,
    };
    dir.write("consistency.csv", csv.as_bytes())?;
    dir.write_json("consistency_summary.json", &report)?;
    dir.finish()?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyReport {
    pub strategy_label: String,
    pub ellipsoid: ConfidenceEllipsoid,
    /// Areas of the coordinate-pair slices, pairs in lexicographic order.
    pub slice_areas: Vec<f64>,
    pub determinant: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategiesReport {
    pub reports: Vec<StrategyReport>,
    /// Strategy labels from smallest to largest ellipsoid volume.
    pub ranking: Vec<String>,
}

/// Fisher ellipsoids at `true_n` for each counter-placement strategy with
/// `cfg.counters.count` counters.
pub fn cmd_strategies(cfg: &ExperimentConfig, out: &Path) -> Result<StrategiesReport> {
    if cfg.strategies.is_empty() {
        return Err(Error::Config("no strategies configured".into()));
    }
    let mut dir = OutputDir::create(out)?;
    let mut reports = Vec::new();
    for s in &cfg.strategies {
        let fisher = FisherNodes::new(cfg, &s.density)?.fisher(&cfg.true_n)?;
        let ellipsoid = confidence_ellipsoid(&fisher, &cfg.true_n, cfg.counters.count, cfg.level)?;
        let slices = ellipsoid.all_slices();
        for sl in &slices {
            dir.write(
                &format!("slices/{}_{}_{}.csv", s.label, sl.dims.0, sl.dims.1),
                sl.to_csv().as_bytes(),
            )?;
        }
        reports.push(StrategyReport {
            strategy_label: s.label.clone(),
            slice_areas: slices.iter().map(|sl| sl.area()).collect(),
            determinant: ellipsoid.determinant(),
            ellipsoid,
        });
    }
    let mut order: Vec<&StrategyReport> = reports.iter().collect();
    // Volume scales as det^(-1/2): larger determinant, smaller ellipsoid.
    order.sort_by(|a, b| b.determinant.total_cmp(&a.determinant));
    let ranking = order.iter().map(|r| r.strategy_label.clone()).collect();
    let report = StrategiesReport { reports, ranking };
    dir.write_json("strategies.json", &report)?;
    dir.finish()?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeCheckRow {
    pub journey: String,
    pub direction: Direction,
    pub h: f64,
    pub residual: f64,
    /// Residual at the previous (larger) step over this one.
    pub ratio: Option<f64>,
}

/// Transport-equation residuals of every Dirac-velocity journey over the
/// configured points and steps.
pub fn cmd_pde_check(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PdeCheckRow>> {
    let mut dir = OutputDir::create(out)?;
    let mut rows = Vec::new();
    for spec in cfg.journeys.iter().filter(|s| s.velocity.is_dirac()) {
        for dir_ in [Direction::Right, Direction::Left] {
            let mut prev: Option<f64> = None;
            for &h in &cfg.pde_check.steps {
                let r = pde_residual(spec, dir_, &cfg.pde_check.points, h, &cfg.quadrature)?;
                rows.push(PdeCheckRow {
                    journey: spec.label.clone(),
                    direction: dir_,
                    h,
                    residual: r,
                    ratio: prev.map(|p| p / r),
                });
                prev = Some(r);
            }
        }
    }
    let mut csv = String::from("journey,direction,h,residual,ratio\n");
    for r in &rows {
        let d = match r.direction {
            Direction::Right => "right",
            Direction::Left => "left",
        };
        let ratio = r.ratio.map(|v| format!("{v:.16e}")).unwrap_or_default();
        let _ = writeln!(
            csv,
            "{},{d},{:.16e},{:.16e},{ratio}",
            r.journey, r.h, r.residual
        );
    }
    dir.write("pde_check.csv", csv.as_bytes())?;
    dir.finish()?;
    Ok(rows)
}
