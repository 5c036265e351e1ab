//! Reference computations shared by the integration tests and the acceptance
//! suite. None of them call into the estimation code they are used to check.
#![allow(dead_code, clippy::needless_range_loop)]

use disagg::attendance::{AttendanceTable, TimeGrid};
use disagg::microsim::CountDataset;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

/// All ways to write `n` as an ordered sum of `k` nonnegative integers.
pub fn compositions(n: u64, k: usize) -> Vec<Vec<u64>> {
    if k == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in 0..=n {
        for mut rest in compositions(n - first, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn ln_factorial(n: u64) -> f64 {
    (1..=n).map(|m| (m as f64).ln()).sum()
}

/// `E[n_k | Σ n_k = n]` for independent `n_k ~ Poisson(λ_k)`, by summing
/// over every split of `n`.
pub fn posterior_mean_by_enumeration(n: u64, lambda: &[f64]) -> Vec<f64> {
    let splits = compositions(n, lambda.len());
    let log_w: Vec<f64> = splits
        .iter()
        .map(|s| {
            s.iter()
                .zip(lambda)
                .map(|(&m, &l)| {
                    if m == 0 {
                        0.0
                    } else {
                        m as f64 * l.ln() - ln_factorial(m)
                    }
                })
                .sum()
        })
        .collect();
    let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; lambda.len()];
    for (s, wi) in splits.iter().zip(&w) {
        for (m, &c) in mean.iter_mut().zip(s) {
            *m += wi * c as f64 / total;
        }
    }
    mean
}

/// Root of a decreasing function on `[lo, hi]` by bisection, i.e. the
/// maximizer of a concave function given its derivative.
pub fn argmax_concave(deriv: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(
        deriv(lo) >= 0.0 && deriv(hi) <= 0.0,
        "bracket does not contain the maximum"
    );
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Aggregated Poisson log-likelihood without the `ln n!` terms.
pub fn aggregated_ll(a: &[Vec<f64>], counts: &[u64], nu: &[f64]) -> f64 {
    a.iter()
        .zip(counts)
        .map(|(row, &n)| {
            let lam: f64 = row.iter().zip(nu).map(|(x, v)| x * v).sum();
            if n == 0 {
                -lam
            } else if lam <= 0.0 {
                f64::NEG_INFINITY
            } else {
                n as f64 * lam.ln() - lam
            }
        })
        .sum()
}

fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[p][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for cc in c..n {
                m[r][cc] -= f * m[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Some(x)
}

/// Maximizer of [`aggregated_ll`] over `ν ≥ 0`: best point of a log grid,
/// then projected Newton with an active set and backtracking.
///
/// `a[c][k]` is the attendance of journey `k` in cell `c`.
pub fn aggregated_mle(a: &[Vec<f64>], counts: &[u64]) -> Vec<f64> {
    let k = a[0].len();
    let total: f64 = counts.iter().sum::<u64>() as f64;
    let scale = total.max(1.0) / a.iter().flatten().sum::<f64>().max(1e-12) * k as f64;
    let levels: Vec<f64> = (0..25)
        .map(|m| scale * 10f64.powf(-4.0 + 6.0 * m as f64 / 24.0))
        .collect();
    let mut best = vec![scale; k];
    let mut best_ll = aggregated_ll(a, counts, &best);
    let mut idx = vec![0usize; k];
    loop {
        let nu: Vec<f64> = idx.iter().map(|&i| levels[i]).collect();
        let ll = aggregated_ll(a, counts, &nu);
        if ll > best_ll {
            best_ll = ll;
            best = nu;
        }
        let mut d = 0;
        while d < k {
            idx[d] += 1;
            if idx[d] < levels.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == k {
            break;
        }
    }

    let mut nu = best;
    for _ in 0..500 {
        let mut g = vec![0.0; k];
        let mut h = vec![vec![0.0; k]; k];
        for (row, &n) in a.iter().zip(counts) {
            let lam: f64 = row.iter().zip(&nu).map(|(x, v)| x * v).sum();
            for p in 0..k {
                g[p] += if n > 0 { n as f64 * row[p] / lam } else { 0.0 } - row[p];
                if n > 0 {
                    for q in 0..k {
                        h[p][q] -= n as f64 * row[p] * row[q] / (lam * lam);
                    }
                }
            }
        }
        let free: Vec<usize> = (0..k).filter(|&p| nu[p] > 0.0 || g[p] > 0.0).collect();
        let pg: f64 = free
            .iter()
            .map(|&p| (g[p] * nu[p].max(1.0)).abs())
            .fold(0.0, f64::max);
        if pg < 1e-12 * total.max(1.0) {
            break;
        }
        let hf: Vec<Vec<f64>> = free
            .iter()
            .map(|&p| free.iter().map(|&q| -h[p][q]).collect())
            .collect();
        let gf: Vec<f64> = free.iter().map(|&p| g[p]).collect();
        let step = solve(hf, gf.clone()).unwrap_or(gf);
        let ll0 = aggregated_ll(a, counts, &nu);
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let mut cand = nu.clone();
            for (s, &p) in step.iter().zip(&free) {
                cand[p] = (nu[p] + t * s).max(0.0);
            }
            if aggregated_ll(a, counts, &cand) >= ll0 {
                moved = cand != nu;
                nu = cand;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    nu
}

/// A random table with values in `[0.02, 0.4]` and Poisson counts drawn at
/// `nu_true`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    k: usize,
    i: usize,
    j: usize,
    nu_true: &[f64],
) -> (AttendanceTable, CountDataset) {
    let grid = TimeGrid::new(0.0, i, 1.0).unwrap();
    let values: Vec<f64> = (0..k * i * j)
        .map(|_| rng.random_range(0.02..0.4))
        .collect();
    let labels: Vec<String> = (0..k).map(|m| format!("k{m}")).collect();
    let locations: Vec<f64> = (0..j).map(|m| (m as f64 + 0.5) / j as f64).collect();
    let table = AttendanceTable::new(labels.clone(), grid, locations.clone(), values).unwrap();
    let mut counts = vec![0u64; i * j];
    for ii in 0..i {
        for jj in 0..j {
            let lam: f64 = (0..k).map(|kk| nu_true[kk] * table.get(kk, ii, jj)).sum();
            counts[ii * j + jj] = Poisson::new(lam).unwrap().sample(rng) as u64;
        }
    }
    let data = CountDataset {
        day: 0,
        seed: 0,
        grid,
        locations,
        journey_labels: labels,
        counts,
        hidden: None,
    };
    (table, data)
}

/// Rows `a[c][k]` of a table, cells in `(i, j)` order matching
/// `CountDataset::counts`.
pub fn table_rows(table: &AttendanceTable) -> Vec<Vec<f64>> {
    let mut rows = Vec::new();
    for i in 0..table.n_steps() {
        for j in 0..table.n_locations() {
            rows.push(
                (0..table.n_journeys())
                    .map(|k| table.get(k, i, j))
                    .collect(),
            );
        }
    }
    rows
}

/// Largest relative difference, measured against the larger magnitude and
/// at least `floor`.
pub fn max_rel_diff(a: &[f64], b: &[f64], floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
