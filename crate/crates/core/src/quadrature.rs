//! Fixed-rule numerical integration: composite Gauss–Legendre and trapezoid.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest Gauss–Legendre order with cached nodes.
pub const MAX_ORDER: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    GaussLegendreComposite { panels: usize, order: usize },
    Trapezoid { n: usize },
}

/// Integration rule plus the tolerances it is expected to meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub abs_tol: f64,
    pub rel_tol: f64,
}

impl Default for QuadratureSpec {
    /// 32 panels of order 8.
    fn default() -> Self {
        Self {
            scheme: Scheme::GaussLegendreComposite {
                panels: 32,
                order: 8,
            },
            abs_tol: 1e-12,
            rel_tol: 1e-10,
        }
    }
}

impl QuadratureSpec {
    pub fn gauss_legendre(panels: usize, order: usize) -> Self {
        Self {
            scheme: Scheme::GaussLegendreComposite { panels, order },
            ..Self::default()
        }
    }

    pub fn trapezoid(n: usize) -> Self {
        Self {
            scheme: Scheme::Trapezoid { n },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.scheme {
            Scheme::GaussLegendreComposite { panels, order } => {
                if panels < 1 {
                    return Err(Error::InvalidQuadrature("panels must be >= 1".into()));
                }
                if !(2..=MAX_ORDER).contains(&order) {
                    return Err(Error::InvalidQuadrature(format!(
                        "order {order} outside 2..={MAX_ORDER}"
                    )));
                }
            }
            Scheme::Trapezoid { n } => {
                if n < 2 {
                    return Err(Error::InvalidQuadrature("trapezoid needs n >= 2".into()));
                }
            }
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidQuadrature(
                "tolerances must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Whether `value` meets the tolerances against a known `exact` result.
    pub fn accepts(&self, value: f64, exact: f64) -> bool {
        (value - exact).abs() <= self.abs_tol + self.rel_tol * exact.abs()
    }

    /// Copy of this spec with the panel budget (or trapezoid points) scaled.
    pub fn refined(&self, factor: usize) -> Self {
        let scheme = match self.scheme {
            Scheme::GaussLegendreComposite { panels, order } => Scheme::GaussLegendreComposite {
                panels: panels * factor,
                order,
            },
            Scheme::Trapezoid { n } => Scheme::Trapezoid {
                n: (n - 1) * factor + 1,
            },
        };
        Self { scheme, ..*self }
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] for the given order.
pub fn gauss_legendre_rule(order: usize) -> &'static [(f64, f64)] {
    static RULES: OnceLock<Vec<Vec<(f64, f64)>>> = OnceLock::new();
    let rules = RULES.get_or_init(|| (0..=MAX_ORDER).map(compute_rule).collect());
    &rules[order]
}

// Newton iteration on P_n from the Chebyshev-like initial guesses.
fn compute_rule(n: usize) -> Vec<(f64, f64)> {
    if n == 0 {
        return Vec::new();
    }
    let mut rule = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        rule[i] = (-x, w);
        rule[n - 1 - i] = (x, w);
    }
    rule
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let d = nf * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Integrate `f` over `[a, b]` with the configured rule.
pub fn integrate<F>(f: F, (a, b): (f64, f64), spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    integrate_pieces(f, &[a, b], spec)
}

/// Integrate over consecutive segments `[p0, p1], [p1, p2], ...`.
///
/// The panel budget is shared out in proportion to segment length (at least
/// one panel per segment), so no panel straddles a breakpoint.
pub fn integrate_pieces<F>(f: F, points: &[f64], spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    // Neumaier-compensated sum over all nodes.
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (x, w) in nodes_pieces(points, spec)? {
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::NonFiniteIntegrand { at: x });
        }
        let term = w * y;
        let t = sum + term;
        comp += if sum.abs() >= term.abs() {
            (sum - t) + term
        } else {
            (term - t) + sum
        };
        sum = t;
    }
    Ok(sum + comp)
}

/// Nodes and weights of the rule [`integrate_pieces`] applies, for callers
/// that integrate several functions against the same nodes.
pub fn nodes_pieces(points: &[f64], spec: &QuadratureSpec) -> Result<Vec<(f64, f64)>> {
    spec.validate()?;
    let mut out = Vec::new();
    if points.len() < 2 {
        return Ok(out);
    }
    let total = points[points.len() - 1] - points[0];
    if !(total > 0.0) {
        return Ok(out);
    }
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = b - a;
        if !(len > 0.0) {
            continue;
        }
        let share = len / total;
        match spec.scheme {
            Scheme::GaussLegendreComposite { panels, order } => {
                let p = ((panels as f64 * share).ceil() as usize).max(1);
                let rule = gauss_legendre_rule(order);
                let h = len / p as f64;
                for k in 0..p {
                    let mid = a + (k as f64 + 0.5) * h;
                    out.extend(rule.iter().map(|&(x, w)| (mid + 0.5 * h * x, 0.5 * h * w)));
                }
            }
            Scheme::Trapezoid { n } => {
                let m = (((n - 1) as f64 * share).ceil() as usize).max(1);
                let h = len / m as f64;
                for k in 0..=m {
                    let w = if k == 0 || k == m { 0.5 * h } else { h };
                    out.push((a + k as f64 * h, w));
                }
            }
        }
    }
    Ok(out)
}
