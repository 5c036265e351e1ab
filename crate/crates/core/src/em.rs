//! Expectation-maximization for the subpopulation sizes `ν` given aggregated
//! counts and an attendance table.
//!
//! The hidden data are the per-journey counts `n_k(i, x_j)`. Given the
//! aggregate, they are multinomial with probabilities proportional to
//! `ν_k a_k(i, x_j)`, which gives the E step in closed form; the M step is a
//! ratio of sums.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::attendance::AttendanceTable;
use crate::error::{Error, Result};
use crate::microsim::CountDataset;
use crate::statmodel::log_likelihood;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmInit {
    /// Each count split evenly across journeys, followed by an M step.
    UniformSplit,
    /// Each count split by a uniform multinomial draw, followed by an M step.
    RandomSplit {
        seed: u64,
    },
    Custom {
        nu: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub rel_tol: f64,
    pub max_iters: usize,
    pub init: EmInit,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iters: 10_000,
            init: EmInit::UniformSplit,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Config(
                "EM needs rel_tol > 0 and max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub nu: Vec<f64>,
    /// `z_{k,i,j}` at index `(k * I + i) * J + j`, from the last E step.
    pub responsibilities: Vec<f64>,
    /// Log-likelihood at the initial point, then after every iteration.
    pub ll_trace: Vec<f64>,
    /// `ν` at the initial point, then after every iteration.
    pub nu_trace: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmState {
    /// CSV `iter,ll,nu_1..nu_K`, one row per recorded iterate.
    pub fn trace_csv(&self) -> String {
        let k = self.nu.len();
        let mut s = String::from("iter,ll");
        for n in 1..=k {
            let _ = write!(s, ",nu_{n}");
        }
        s.push('\n');
        for (t, (ll, nu)) in self.ll_trace.iter().zip(&self.nu_trace).enumerate() {
            let _ = write!(s, "{t},{ll:.16e}");
            for v in nu {
                let _ = write!(s, ",{v:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

fn check_inputs(nu: &[f64], table: &AttendanceTable, data: &CountDataset) -> Result<()> {
    data.check_aligned(table)?;
    if nu.len() != table.n_journeys() {
        return Err(Error::ShapeMismatch(format!(
            "{} rates for {} journeys",
            nu.len(),
            table.n_journeys()
        )));
    }
    if let Some((k, v)) = nu
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v >= 0.0 && v.is_finite()))
    {
        return Err(Error::NegativeRate {
            journey: k,
            rate: *v,
        });
    }
    Ok(())
}

/// `z_{k,i,j} = n(i,x_j) ν_k a_k(i,x_j) / ⟨ν, a(i,x_j)⟩`, zero where `n = 0`.
pub fn e_step(nu: &[f64], table: &AttendanceTable, data: &CountDataset) -> Result<Vec<f64>> {
    check_inputs(nu, table, data)?;
    let (kn, i_n, j_n) = (table.n_journeys(), table.n_steps(), table.n_locations());
    let mut z = vec![0.0; kn * i_n * j_n];
    let mut w = vec![0.0; kn];
    for i in 0..i_n {
        for j in 0..j_n {
            let n = data.count(i, j);
            if n == 0 {
                continue;
            }
            let mut r = 0.0;
            for (k, wk) in w.iter_mut().enumerate() {
                *wk = nu[k] * table.get(k, i, j);
                r += *wk;
            }
            if !(r > 0.0) {
                return Err(Error::ZeroRateWithPositiveCount {
                    step: i,
                    counter: j,
                    count: n,
                });
            }
            let scale = n as f64 / r;
            for (k, wk) in w.iter().enumerate() {
                z[(k * i_n + i) * j_n + j] = wk * scale;
            }
        }
    }
    Ok(z)
}

/// `ν_k = Σ_{i,j} z_{k,i,j} / Σ_{i,j} a_k(i, x_j)`.
pub fn m_step(z: &[f64], table: &AttendanceTable) -> Result<Vec<f64>> {
    let block = table.n_steps() * table.n_locations();
    if z.len() != table.n_journeys() * block {
        return Err(Error::ShapeMismatch(format!(
            "{} responsibilities for the table",
            z.len()
        )));
    }
    table
        .journey_totals()
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            if !(a > 0.0) {
                return Err(Error::DegenerateAttendance { journey: k });
            }
            let s: f64 = z[k * block..(k + 1) * block].iter().sum();
            Ok(s / a)
        })
        .collect()
}

fn uniform_split(table: &AttendanceTable, data: &CountDataset) -> Vec<f64> {
    let (kn, i_n, j_n) = (table.n_journeys(), table.n_steps(), table.n_locations());
    let mut z = vec![0.0; kn * i_n * j_n];
    for k in 0..kn {
        for i in 0..i_n {
            for j in 0..j_n {
                z[(k * i_n + i) * j_n + j] = data.count(i, j) as f64 / kn as f64;
            }
        }
    }
    z
}

// Integer split of every count by a uniform multinomial, drawn as a chain of
// binomials.
fn random_split(table: &AttendanceTable, data: &CountDataset, seed: u64) -> Vec<f64> {
    let (kn, i_n, j_n) = (table.n_journeys(), table.n_steps(), table.n_locations());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = vec![0.0; kn * i_n * j_n];
    for i in 0..i_n {
        for j in 0..j_n {
            let mut left = data.count(i, j);
            for k in 0..kn {
                let take = if k + 1 == kn || left == 0 {
                    left
                } else {
                    Binomial::new(left, 1.0 / (kn - k) as f64)
                        .expect("probability in (0, 1]")
                        .sample(&mut rng)
                };
                z[(k * i_n + i) * j_n + j] = take as f64;
                left -= take;
            }
        }
    }
    z
}

fn initial_nu(table: &AttendanceTable, data: &CountDataset, init: &EmInit) -> Result<Vec<f64>> {
    match init {
        EmInit::UniformSplit => m_step(&uniform_split(table, data), table),
        EmInit::RandomSplit { seed } => {
            let mut nu = m_step(&random_split(table, data, *seed), table)?;
            // Zero is absorbing, so a component the draw left empty restarts
            // from the even split.
            if data.total() > 0 && nu.contains(&0.0) {
                let even = m_step(&uniform_split(table, data), table)?;
                for (n, e) in nu.iter_mut().zip(even) {
                    if *n == 0.0 {
                        *n = e;
                    }
                }
            }
            Ok(nu)
        }
        EmInit::Custom { nu } => {
            check_inputs(nu, table, data)?;
            Ok(nu.clone())
        }
    }
}

/// Alternates E and M steps until `max_k |Δν_k| / max(ν_k, 1) < rel_tol` or
/// the iteration cap; hitting the cap leaves `converged = false`.
pub fn run_em(table: &AttendanceTable, data: &CountDataset, config: &EmConfig) -> Result<EmState> {
    config.validate()?;
    data.check_aligned(table)?;
    let mut nu = initial_nu(table, data, &config.init)?;
    let mut state = EmState {
        ll_trace: vec![log_likelihood(table, &nu, data)?],
        nu_trace: vec![nu.clone()],
        nu: Vec::new(),
        responsibilities: Vec::new(),
        iterations: 0,
        converged: false,
    };
    let mut z = Vec::new();
    while state.iterations < config.max_iters {
        z = e_step(&nu, table, data)?;
        let next = m_step(&z, table)?;
        let change = nu
            .iter()
            .zip(&next)
            .map(|(a, b)| (b - a).abs() / b.max(1.0))
            .fold(0.0, f64::max);
        nu = next;
        state.iterations += 1;
        state.ll_trace.push(log_likelihood(table, &nu, data)?);
        state.nu_trace.push(nu.clone());
        if change < config.rel_tol {
            state.converged = true;
            break;
        }
    }
    state.nu = nu;
    state.responsibilities = z;
    Ok(state)
}

/// Least-squares fit of the log-error sequence of an EM run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceFit {
    /// Geometric contraction factor per iteration, `exp(slope)`.
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Relative errors above this are used in the fit; below it the sequence is
/// dominated by rounding.
const FIT_FLOOR: f64 = 1e-12;

/// Fits `log ‖ν_t - reference‖ / ‖reference‖` against `t`.
pub fn em_convergence_rate(state: &EmState, reference: &[f64]) -> Result<ConvergenceFit> {
    let norm = reference
        .iter()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let pts: Vec<(f64, f64)> = state
        .nu_trace
        .iter()
        .enumerate()
        .filter_map(|(t, nu)| {
            let e = nu
                .iter()
                .zip(reference)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / norm;
            (e > FIT_FLOOR).then(|| (t as f64, e.ln()))
        })
        .collect();
    if state.iterations < 10 || pts.len() < 5 {
        return Err(Error::InsufficientIterations { usable: pts.len() });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(ConvergenceFit {
        rate: slope.exp(),
        r_squared,
        points: pts.len(),
    })
}
