//! Poisson observation model for aggregated counts: likelihood, score,
//! Fisher information and chi-square confidence ellipsoids.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attendance::{AttendanceSource, AttendanceTable};
use crate::distributions::Density1D;
use crate::error::{Error, Result};
use crate::microsim::CountDataset;
use crate::quadrature::QuadratureSpec;

pub use crate::special::chi2_quantile;

/// Rates below this are treated as zero in likelihood denominators.
pub const RATE_FLOOR: f64 = 1e-300;

/// Attendance at the counters plus the law the counters were drawn from.
#[derive(Debug, Clone)]
pub struct PoissonModel {
    pub table: AttendanceTable,
    pub counter_density: Density1D,
}

fn rate(table: &AttendanceTable, nu: &[f64], i: usize, j: usize) -> f64 {
    nu.iter()
        .enumerate()
        .map(|(k, n)| n * table.get(k, i, j))
        .sum()
}

fn check_nu(table: &AttendanceTable, nu: &[f64]) -> Result<()> {
    if nu.len() != table.n_journeys() {
        return Err(Error::ShapeMismatch(format!(
            "{} rates for {} journeys",
            nu.len(),
            table.n_journeys()
        )));
    }
    if let Some((k, n)) = nu
        .iter()
        .enumerate()
        .find(|(_, n)| !(**n >= 0.0 && n.is_finite()))
    {
        return Err(Error::NegativeRate {
            journey: k,
            rate: *n,
        });
    }
    Ok(())
}

/// `Σ_{i,j} [-⟨ν, a⟩ + n log⟨ν, a⟩]`, the log-likelihood up to terms that do
/// not depend on `ν`. A positive count at a zero rate gives `-∞`.
pub fn log_likelihood(table: &AttendanceTable, nu: &[f64], data: &CountDataset) -> Result<f64> {
    check_nu(table, nu)?;
    data.check_aligned(table)?;
    let mut ll = 0.0;
    for j in 0..table.n_locations() {
        ll += counter_log_likelihood(table, nu, data, j);
    }
    Ok(ll)
}

/// Contribution of counter `j` to [`log_likelihood`].
pub fn counter_log_likelihood(
    table: &AttendanceTable,
    nu: &[f64],
    data: &CountDataset,
    j: usize,
) -> f64 {
    let mut ll = 0.0;
    for i in 0..table.n_steps() {
        let r = rate(table, nu, i, j);
        let n = data.count(i, j);
        if n > 0 {
            if r <= 0.0 {
                return f64::NEG_INFINITY;
            }
            ll += n as f64 * r.max(RATE_FLOOR).ln();
        }
        ll -= r;
    }
    ll
}

/// Gradient of [`log_likelihood`] in `ν`.
pub fn score(table: &AttendanceTable, nu: &[f64], data: &CountDataset) -> Result<Vec<f64>> {
    check_nu(table, nu)?;
    data.check_aligned(table)?;
    let kn = table.n_journeys();
    let mut g = vec![0.0; kn];
    for j in 0..table.n_locations() {
        for i in 0..table.n_steps() {
            let r = rate(table, nu, i, j);
            let n = data.count(i, j);
            if n > 0 && r <= 0.0 {
                return Err(Error::ZeroRateWithPositiveCount {
                    step: i,
                    counter: j,
                    count: n,
                });
            }
            let ratio = n as f64 / r.max(RATE_FLOOR);
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += table.get(k, i, j) * (ratio - 1.0);
            }
        }
    }
    Ok(g)
}

impl PoissonModel {
    pub fn log_likelihood(&self, nu: &[f64], data: &CountDataset) -> Result<f64> {
        log_likelihood(&self.table, nu, data)
    }

    pub fn score(&self, nu: &[f64], data: &CountDataset) -> Result<Vec<f64>> {
        score(&self.table, nu, data)
    }
}

/// Fisher information for a single counter, together with where it was
/// evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub matrix: Vec<Vec<f64>>,
    pub evaluated_at: Vec<f64>,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.len()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |r, c| self.matrix[r][c])
    }

    pub fn max_asymmetry(&self) -> f64 {
        let k = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..k {
            for c in 0..k {
                worst = worst.max((self.matrix[r][c] - self.matrix[c][r]).abs());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.to_dmatrix())
    }
}

fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `𝓘(N)_{kk'} = Σ_i ∫ a_k(i,x) a_k'(i,x) / ⟨N, a(i,x)⟩ f_c(x) dx`.
///
/// Attendance is evaluated at the quadrature nodes of `counter_density`
/// through `source`, not interpolated from a counter table.
pub fn fisher_information(
    source: &dyn AttendanceSource,
    counter_density: &Density1D,
    n: &[f64],
    quad: &QuadratureSpec,
) -> Result<FisherMatrix> {
    let (lo, hi) = counter_density.support();
    let nodes = counter_density.quadrature_nodes(lo, hi, quad)?;
    let profiles = nodes
        .par_iter()
        .map(|&(x, _)| source.profile(x))
        .collect::<Result<Vec<_>>>()?;
    fisher_from_profiles(&nodes, &profiles, source.n_journeys(), source.n_steps(), n)
}

/// Fisher information from precomputed attendance profiles at weighted
/// nodes (weights already include the counter density).
pub fn fisher_from_profiles(
    nodes: &[(f64, f64)],
    profiles: &[Vec<f64>],
    k_n: usize,
    i_n: usize,
    n: &[f64],
) -> Result<FisherMatrix> {
    if n.len() != k_n {
        return Err(Error::ShapeMismatch(format!(
            "{} sizes for {k_n} journeys",
            n.len()
        )));
    }
    if n.iter().any(|v| !(*v >= 0.0)) || n.iter().all(|v| *v == 0.0) {
        return Err(Error::Domain(
            "Fisher information needs N >= 0, N != 0".into(),
        ));
    }
    let mut m = vec![vec![0.0; k_n]; k_n];
    for (&(x, w), prof) in nodes.iter().zip(profiles) {
        if prof.len() != k_n * i_n {
            return Err(Error::ShapeMismatch(format!(
                "profile of length {}",
                prof.len()
            )));
        }
        for i in 0..i_n {
            let a: Vec<f64> = (0..k_n).map(|k| prof[k * i_n + i]).collect();
            let r: f64 = a.iter().zip(n).map(|(a, n)| a * n).sum();
            if r < RATE_FLOOR {
                if a.iter().all(|v| *v == 0.0) {
                    continue;
                }
                return Err(Error::SingularAttendance { x, step: i });
            }
            for p in 0..k_n {
                for q in p..k_n {
                    m[p][q] += w * a[p] * a[q] / r;
                }
            }
        }
    }
    for p in 0..k_n {
        for q in 0..p {
            m[p][q] = m[q][p];
        }
    }
    Ok(FisherMatrix {
        matrix: m,
        evaluated_at: n.to_vec(),
    })
}

/// `{z : (z - center)ᵀ shape (z - center) < 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipsoid {
    pub center: Vec<f64>,
    pub shape: Vec<Vec<f64>>,
    pub level: f64,
    pub j: usize,
}

/// Asymptotic region for the MLE from `j` counters: shape
/// `j · 𝓘 / χ²_K(level)`.
pub fn confidence_ellipsoid(
    fisher: &FisherMatrix,
    center: &[f64],
    j: usize,
    level: f64,
) -> Result<ConfidenceEllipsoid> {
    let k = fisher.dim();
    if center.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "center of length {} for K = {k}",
            center.len()
        )));
    }
    if j == 0 {
        return Err(Error::Domain("at least one counter is needed".into()));
    }
    let q = chi2_quantile(k as u32, level)?;
    let scale = j as f64 / q;
    Ok(ConfidenceEllipsoid {
        center: center.to_vec(),
        shape: fisher
            .matrix
            .iter()
            .map(|row| row.iter().map(|v| v * scale).collect())
            .collect(),
        level,
        j,
    })
}

impl ConfidenceEllipsoid {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn quadratic_form(&self, z: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut s = 0.0;
        for (r, dr) in d.iter().enumerate() {
            for (c, dc) in d.iter().enumerate() {
                s += dr * self.shape[r][c] * dc;
            }
        }
        s
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.quadratic_form(z) < 1.0
    }

    fn shape_matrix(&self) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |r, c| self.shape[r][c])
    }

    /// Semi-axis lengths, longest first.
    pub fn semi_axes(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.shape_matrix())
            .into_iter()
            .map(|l| 1.0 / l.sqrt())
            .collect()
    }

    pub fn determinant(&self) -> f64 {
        self.shape_matrix().determinant()
    }

    pub fn is_positive_definite(&self) -> bool {
        sorted_eigenvalues(&self.shape_matrix())
            .first()
            .is_some_and(|l| *l > 0.0)
    }

    /// Central cross-section in coordinates `dims`, the other coordinates
    /// held at the center.
    pub fn slice(&self, dims: (usize, usize)) -> Result<EllipseSlice> {
        ellipsoid_slice(self, dims)
    }

    /// All `K(K-1)/2` coordinate-pair slices, pairs in lexicographic order.
    pub fn all_slices(&self) -> Vec<EllipseSlice> {
        let k = self.dim();
        (0..k)
            .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
            .map(|d| ellipsoid_slice(self, d).expect("distinct in-range dims"))
            .collect()
    }
}

/// A 2D ellipse `{w : (w - center)ᵀ shape (w - center) < 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseSlice {
    pub dims: (usize, usize),
    pub center: [f64; 2],
    pub shape: [[f64; 2]; 2],
}

/// Restriction of the ellipsoid to the plane through its center spanned by
/// coordinates `dims`: the 2×2 sub-block of the shape matrix.
pub fn ellipsoid_slice(e: &ConfidenceEllipsoid, dims: (usize, usize)) -> Result<EllipseSlice> {
    let (a, b) = dims;
    if a == b || a >= e.dim() || b >= e.dim() {
        return Err(Error::Domain(format!(
            "invalid slice dims ({a}, {b}) for K = {}",
            e.dim()
        )));
    }
    Ok(EllipseSlice {
        dims,
        center: [e.center[a], e.center[b]],
        shape: [
            [e.shape[a][a], e.shape[a][b]],
            [e.shape[b][a], e.shape[b][b]],
        ],
    })
}

impl EllipseSlice {
    pub fn determinant(&self) -> f64 {
        self.shape[0][0] * self.shape[1][1] - self.shape[0][1] * self.shape[1][0]
    }

    pub fn area(&self) -> f64 {
        PI / self.determinant().sqrt()
    }

    /// Boundary points `(angle, z1, z2)` at `n` equally spaced angles.
    pub fn boundary(&self, n: usize) -> Vec<(f64, f64, f64)> {
        (0..n)
            .map(|s| {
                let th = 2.0 * PI * s as f64 / n as f64;
                let (c, si) = (th.cos(), th.sin());
                let q = self.shape[0][0] * c * c
                    + 2.0 * self.shape[0][1] * c * si
                    + self.shape[1][1] * si * si;
                let r = 1.0 / q.sqrt();
                (th, self.center[0] + r * c, self.center[1] + r * si)
            })
            .collect()
    }

    /// Boundary polyline as CSV `angle,z1,z2`, 360 samples.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("angle,z1,z2\n");
        for (a, z1, z2) in self.boundary(360) {
            let _ = writeln!(s, "{a:.16e},{z1:.16e},{z2:.16e}");
        }
        s
    }
}
