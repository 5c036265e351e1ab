//! One-dimensional laws for velocities, activity locations, schedules and
//! counter placement.
//!
//! Every law is a closed parametric family so that CDFs and survival
//! functions are available in closed form. Integrals against a [`Density1D`]
//! go through [`Density1D::integrate_against`], which reduces to a point
//! evaluation for Dirac masses and never runs quadrature across a kink of the
//! density.

use std::f64::consts::PI;

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{nodes_pieces, QuadratureSpec};
use crate::special::{normal_cdf, normal_pdf, normal_quantile, normal_sf};

/// Tolerance on the total mass of a piecewise-linear density.
const PIECEWISE_MASS_TOL: f64 = 1e-9;

/// Serialized form of a [`Density1D`]: a kind tag plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Mixture of Gaussians, each truncated to `[lo, hi]` and renormalized,
    /// so `weights` are the exact component probabilities.
    TruncatedGaussianMixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        sds: Vec<f64>,
        lo: f64,
        hi: f64,
    },
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
    Dirac {
        atom: f64,
    },
    /// `(8/3) cos(π s)^4` with `s` the position rescaled to `[0, 1]`.
    Cos4 {
        lo: f64,
        hi: f64,
    },
    /// `(8/3) sin(π s)^4` with `s` the position rescaled to `[0, 1]`.
    Sin4 {
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    // Per component: weight / Z, standardized bounds, and whether the
    // component lives in the upper tail (use survival differences there).
    Mixture(Vec<Component>),
    // Cumulative mass at each knot.
    Piecewise(Vec<f64>),
}

#[derive(Debug, Clone)]
struct Component {
    weight: f64,
    mean: f64,
    sd: f64,
    a: f64,
    b: f64,
    mass: f64,
}

impl Component {
    // P(a <= Z <= z) computed on the side of zero where it keeps precision.
    fn partial(&self, z: f64) -> f64 {
        if self.a > 0.0 {
            normal_sf(self.a) - normal_sf(z)
        } else {
            normal_cdf(z) - normal_cdf(self.a)
        }
    }
}

/// A validated probability law on the real line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DensitySpec", into = "DensitySpec")]
pub struct Density1D {
    spec: DensitySpec,
    cache: Cache,
}

impl PartialEq for Density1D {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl TryFrom<DensitySpec> for Density1D {
    type Error = Error;

    fn try_from(spec: DensitySpec) -> Result<Self> {
        Density1D::new(spec)
    }
}

impl From<Density1D> for DensitySpec {
    fn from(d: Density1D) -> Self {
        d.spec
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidDistribution(msg.into())
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(invalid(format!(
            "support [{lo}, {hi}] is not a finite nonempty interval"
        )))
    }
}

impl Density1D {
    pub fn new(spec: DensitySpec) -> Result<Self> {
        let cache = match &spec {
            DensitySpec::Uniform { lo, hi }
            | DensitySpec::Cos4 { lo, hi }
            | DensitySpec::Sin4 { lo, hi } => {
                check_interval(*lo, *hi)?;
                Cache::None
            }
            DensitySpec::Dirac { atom } => {
                if !atom.is_finite() {
                    return Err(invalid("Dirac atom must be finite"));
                }
                Cache::None
            }
            DensitySpec::TruncatedGaussianMixture {
                weights,
                means,
                sds,
                lo,
                hi,
            } => {
                check_interval(*lo, *hi)?;
                if weights.is_empty() || weights.len() != means.len() || weights.len() != sds.len()
                {
                    return Err(invalid("mixture needs equally many weights, means and sds"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(invalid("mixture weights must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    return Err(invalid("mixture weights sum to zero"));
                }
                let mut comps = Vec::with_capacity(weights.len());
                for ((&w, &m), &s) in weights.iter().zip(means).zip(sds) {
                    if !(m.is_finite() && s.is_finite() && s > 0.0) {
                        return Err(invalid("mixture means must be finite and sds positive"));
                    }
                    let mut c = Component {
                        weight: w / total,
                        mean: m,
                        sd: s,
                        a: (lo - m) / s,
                        b: (hi - m) / s,
                        mass: 0.0,
                    };
                    c.mass = c.partial(c.b);
                    if !(c.mass > 0.0) {
                        return Err(invalid(format!(
                            "component N({m}, {s}) has no mass on [{lo}, {hi}]"
                        )));
                    }
                    comps.push(c);
                }
                Cache::Mixture(comps)
            }
            DensitySpec::PiecewiseLinear { knots, values } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(invalid(
                        "piecewise-linear needs >= 2 knots and one value per knot",
                    ));
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) || knots.iter().any(|k| !k.is_finite())
                {
                    return Err(invalid("knots must be finite and strictly increasing"));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(invalid("piecewise-linear values must be nonnegative"));
                }
                let mut cum = Vec::with_capacity(knots.len());
                let mut acc = 0.0;
                cum.push(0.0);
                for i in 1..knots.len() {
                    acc += 0.5 * (values[i - 1] + values[i]) * (knots[i] - knots[i - 1]);
                    cum.push(acc);
                }
                if (acc - 1.0).abs() > PIECEWISE_MASS_TOL {
                    return Err(invalid(format!(
                        "piecewise-linear density has mass {acc}, expected 1"
                    )));
                }
                Cache::Piecewise(cum)
            }
        };
        Ok(Self { spec, cache })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DensitySpec::Uniform { lo, hi })
    }

    pub fn dirac(atom: f64) -> Result<Self> {
        Self::new(DensitySpec::Dirac { atom })
    }

    pub fn mixture(weights: &[f64], means: &[f64], sds: &[f64], lo: f64, hi: f64) -> Result<Self> {
        Self::new(DensitySpec::TruncatedGaussianMixture {
            weights: weights.to_vec(),
            means: means.to_vec(),
            sds: sds.to_vec(),
            lo,
            hi,
        })
    }

    pub fn piecewise_linear(knots: &[f64], values: &[f64]) -> Result<Self> {
        Self::new(DensitySpec::PiecewiseLinear {
            knots: knots.to_vec(),
            values: values.to_vec(),
        })
    }

    /// Piecewise-linear density rescaled to unit mass.
    pub fn piecewise_linear_normalized(knots: &[f64], values: &[f64]) -> Result<Self> {
        let mass: f64 = knots
            .windows(2)
            .zip(values.windows(2))
            .map(|(k, v)| 0.5 * (v[0] + v[1]) * (k[1] - k[0]))
            .sum();
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(invalid("piecewise-linear values have no mass"));
        }
        let scaled: Vec<f64> = values.iter().map(|v| v / mass).collect();
        Self::piecewise_linear(knots, &scaled)
    }

    pub fn cos4(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DensitySpec::Cos4 { lo, hi })
    }

    pub fn sin4(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DensitySpec::Sin4 { lo, hi })
    }

    pub fn spec(&self) -> &DensitySpec {
        &self.spec
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self.spec, DensitySpec::Dirac { .. })
    }

    pub fn atom(&self) -> Option<f64> {
        match self.spec {
            DensitySpec::Dirac { atom } => Some(atom),
            _ => None,
        }
    }

    /// Closed support `[lo, hi]`; a single point for a Dirac mass.
    pub fn support(&self) -> (f64, f64) {
        match &self.spec {
            DensitySpec::Uniform { lo, hi }
            | DensitySpec::Cos4 { lo, hi }
            | DensitySpec::Sin4 { lo, hi }
            | DensitySpec::TruncatedGaussianMixture { lo, hi, .. } => (*lo, *hi),
            DensitySpec::PiecewiseLinear { knots, .. } => (knots[0], knots[knots.len() - 1]),
            DensitySpec::Dirac { atom } => (*atom, *atom),
        }
    }

    /// Points where the density may fail to be smooth, sorted.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.spec {
            DensitySpec::PiecewiseLinear { knots, .. } => knots.clone(),
            _ => {
                let (lo, hi) = self.support();
                if lo == hi {
                    vec![lo]
                } else {
                    vec![lo, hi]
                }
            }
        }
    }

    /// Lebesgue density at `x`. Zero outside the support; at a support
    /// endpoint, the limit from inside.
    pub fn density(&self, x: f64) -> Result<f64> {
        if let DensitySpec::Dirac { atom } = self.spec {
            return Err(Error::DiracDensity { atom });
        }
        Ok(self.pdf(x))
    }

    // Density for the non-Dirac kinds; callers have ruled out Dirac.
    pub(crate) fn pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if !(x >= lo && x <= hi) {
            return 0.0;
        }
        match (&self.spec, &self.cache) {
            (DensitySpec::Uniform { lo, hi }, _) => 1.0 / (hi - lo),
            (DensitySpec::TruncatedGaussianMixture { .. }, Cache::Mixture(comps)) => comps
                .iter()
                .map(|c| c.weight * normal_pdf((x - c.mean) / c.sd) / (c.sd * c.mass))
                .sum(),
            (DensitySpec::PiecewiseLinear { knots, values }, _) => {
                let i = segment(knots, x);
                let t = (x - knots[i]) / (knots[i + 1] - knots[i]);
                values[i] + t * (values[i + 1] - values[i])
            }
            (DensitySpec::Cos4 { lo, hi }, _) => {
                let s = (x - lo) / (hi - lo);
                8.0 / 3.0 * (PI * s).cos().powi(4) / (hi - lo)
            }
            (DensitySpec::Sin4 { lo, hi }, _) => {
                let s = (x - lo) / (hi - lo);
                8.0 / 3.0 * (PI * s).sin().powi(4) / (hi - lo)
            }
            _ => 0.0,
        }
    }

    /// Right-continuous distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if let DensitySpec::Dirac { atom } = self.spec {
            return if x >= atom { 1.0 } else { 0.0 };
        }
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let v = match (&self.spec, &self.cache) {
            (DensitySpec::Uniform { lo, hi }, _) => (x - lo) / (hi - lo),
            (DensitySpec::TruncatedGaussianMixture { .. }, Cache::Mixture(comps)) => comps
                .iter()
                .map(|c| c.weight * c.partial((x - c.mean) / c.sd) / c.mass)
                .sum(),
            (DensitySpec::PiecewiseLinear { knots, values }, Cache::Piecewise(cum)) => {
                let i = segment(knots, x);
                let h = knots[i + 1] - knots[i];
                let d = x - knots[i];
                cum[i] + values[i] * d + 0.5 * (values[i + 1] - values[i]) * d * d / h
            }
            (DensitySpec::Cos4 { lo, hi }, _) => {
                let s = (x - lo) / (hi - lo);
                s + 2.0 * (2.0 * PI * s).sin() / (3.0 * PI) + (4.0 * PI * s).sin() / (12.0 * PI)
            }
            (DensitySpec::Sin4 { lo, hi }, _) => {
                let s = (x - lo) / (hi - lo);
                s - 2.0 * (2.0 * PI * s).sin() / (3.0 * PI) + (4.0 * PI * s).sin() / (12.0 * PI)
            }
            _ => unreachable!("cache matches spec by construction"),
        };
        v.clamp(0.0, 1.0)
    }

    /// `1 - cdf(x)`, so the two always sum to one exactly.
    pub fn survival(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Draw one value. Consumes one uniform for the single-component kinds,
    /// two for a mixture (component choice, then position).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match (&self.spec, &self.cache) {
            (DensitySpec::Dirac { atom }, _) => *atom,
            (DensitySpec::Uniform { lo, hi }, _) => {
                let u: f64 = rng.sample(Open01);
                lo + u * (hi - lo)
            }
            (DensitySpec::TruncatedGaussianMixture { lo, hi, .. }, Cache::Mixture(comps)) => {
                let pick: f64 = rng.sample(Open01);
                let mut acc = 0.0;
                let mut chosen = &comps[comps.len() - 1];
                for c in comps {
                    acc += c.weight;
                    if pick < acc {
                        chosen = c;
                        break;
                    }
                }
                let u: f64 = rng.sample(Open01);
                let z = if chosen.a > 0.0 {
                    let qa = normal_sf(chosen.a);
                    let q = qa - u * chosen.mass;
                    -normal_quantile(q)
                } else {
                    let pa = normal_cdf(chosen.a);
                    normal_quantile(pa + u * chosen.mass)
                };
                (chosen.mean + chosen.sd * z).clamp(*lo, *hi)
            }
            (DensitySpec::PiecewiseLinear { knots, values }, Cache::Piecewise(cum)) => {
                let u: f64 = rng.sample(Open01);
                let target = u * cum[cum.len() - 1];
                let i = match cum.iter().position(|&c| c > target) {
                    Some(0) | None => knots.len() - 2,
                    Some(p) => p - 1,
                };
                let h = knots[i + 1] - knots[i];
                let r = target - cum[i];
                let slope = (values[i + 1] - values[i]) / h;
                let disc = (values[i] * values[i] + 2.0 * slope * r).max(0.0);
                let denom = values[i] + disc.sqrt();
                let d = if denom > 0.0 { 2.0 * r / denom } else { 0.0 };
                (knots[i] + d).clamp(knots[i], knots[i + 1])
            }
            (DensitySpec::Cos4 { .. }, _) | (DensitySpec::Sin4 { .. }, _) => {
                let u: f64 = rng.sample(Open01);
                self.invert_cdf(u)
            }
            _ => unreachable!("cache matches spec by construction"),
        }
    }

    // Safeguarded Newton on the CDF over the support.
    fn invert_cdf(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        let mut x = lo + u * (hi - lo);
        for _ in 0..100 {
            let g = self.cdf(x) - u;
            if g == 0.0 {
                return x;
            }
            if g < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.pdf(x);
            let newton = if d > 0.0 { x - g / d } else { f64::NAN };
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - x).abs() <= 1e-15 * (1.0 + x.abs()) {
                return next;
            }
            x = next;
        }
        x
    }

    /// `∫ f(u) μ(du)` over the part of the support inside `[a, b]`.
    ///
    /// A Dirac mass contributes `f(atom)` when the atom lies in the closed
    /// range. Continuous kinds are integrated by quadrature, split at their
    /// breakpoints.
    pub fn integrate_against<F>(&self, a: f64, b: f64, f: F, quad: &QuadratureSpec) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let mut sum = 0.0;
        for (u, w) in self.quadrature_nodes(a, b, quad)? {
            let y = f(u);
            if !y.is_finite() {
                return Err(Error::NonFiniteIntegrand { at: u });
            }
            sum += w * y;
        }
        Ok(sum)
    }

    /// Nodes `u` and weights `w·f(u)` discretizing this law on `[a, b]`.
    pub fn quadrature_nodes(
        &self,
        a: f64,
        b: f64,
        quad: &QuadratureSpec,
    ) -> Result<Vec<(f64, f64)>> {
        if let Some(atom) = self.atom() {
            return Ok(if atom >= a && atom <= b {
                vec![(atom, 1.0)]
            } else {
                Vec::new()
            });
        }
        let (lo, hi) = self.support();
        let a = a.max(lo);
        let b = b.min(hi);
        if !(a < b) {
            return Ok(Vec::new());
        }
        let mut points = vec![a];
        points.extend(self.breakpoints().into_iter().filter(|&p| p > a && p < b));
        points.push(b);
        let mut nodes = nodes_pieces(&points, quad)?;
        for (u, w) in nodes.iter_mut() {
            *w *= self.pdf(*u);
        }
        Ok(nodes)
    }

    /// The law of `center - X`.
    pub fn mirrored(&self, center: f64) -> Self {
        let spec = match &self.spec {
            DensitySpec::Uniform { lo, hi } => DensitySpec::Uniform {
                lo: center - hi,
                hi: center - lo,
            },
            DensitySpec::Cos4 { lo, hi } => DensitySpec::Cos4 {
                lo: center - hi,
                hi: center - lo,
            },
            DensitySpec::Sin4 { lo, hi } => DensitySpec::Sin4 {
                lo: center - hi,
                hi: center - lo,
            },
            DensitySpec::Dirac { atom } => DensitySpec::Dirac {
                atom: center - atom,
            },
            DensitySpec::TruncatedGaussianMixture {
                weights,
                means,
                sds,
                lo,
                hi,
            } => DensitySpec::TruncatedGaussianMixture {
                weights: weights.clone(),
                means: means.iter().map(|m| center - m).collect(),
                sds: sds.clone(),
                lo: center - hi,
                hi: center - lo,
            },
            DensitySpec::PiecewiseLinear { knots, values } => DensitySpec::PiecewiseLinear {
                knots: knots.iter().rev().map(|k| center - k).collect(),
                values: values.iter().rev().copied().collect(),
            },
        };
        Self::new(spec).expect("mirroring preserves validity")
    }
}

// Index i with knots[i] <= x <= knots[i + 1], for x inside the knot range.
fn segment(knots: &[f64], x: f64) -> usize {
    let p = knots.partition_point(|&k| k <= x);
    p.clamp(1, knots.len() - 1) - 1
}

/// Time law of a trip anchor (departure or arrival) given the anchoring
/// location `u`: the base density shifted by `shift_per_unit * u`.
///
/// With `shift_per_unit = 0` the schedule does not depend on location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScheduleRepr", into = "ScheduleRepr")]
pub struct ConditionalSchedule {
    base: Density1D,
    shift_per_unit: f64,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRepr {
    base: Density1D,
    #[serde(default)]
    shift_per_unit: f64,
}

impl TryFrom<ScheduleRepr> for ConditionalSchedule {
    type Error = Error;

    fn try_from(r: ScheduleRepr) -> Result<Self> {
        ConditionalSchedule::shifted(r.base, r.shift_per_unit)
    }
}

impl From<ConditionalSchedule> for ScheduleRepr {
    fn from(s: ConditionalSchedule) -> Self {
        ScheduleRepr {
            base: s.base,
            shift_per_unit: s.shift_per_unit,
        }
    }
}

impl ConditionalSchedule {
    pub fn independent(base: Density1D) -> Result<Self> {
        Self::shifted(base, 0.0)
    }

    pub fn shifted(base: Density1D, shift_per_unit: f64) -> Result<Self> {
        if base.is_dirac() {
            return Err(invalid("a schedule must have a density in time"));
        }
        if !shift_per_unit.is_finite() {
            return Err(invalid("schedule shift must be finite"));
        }
        Ok(Self {
            base,
            shift_per_unit,
        })
    }

    pub fn base(&self) -> &Density1D {
        &self.base
    }

    pub fn shift_per_unit(&self) -> f64 {
        self.shift_per_unit
    }

    pub fn density(&self, t: f64, u: f64) -> f64 {
        self.base.pdf(t - self.shift_per_unit * u)
    }

    pub fn cdf(&self, t: f64, u: f64) -> f64 {
        self.base.cdf(t - self.shift_per_unit * u)
    }

    /// Time support given the anchoring location.
    pub fn support(&self, u: f64) -> (f64, f64) {
        let (lo, hi) = self.base.support();
        let s = self.shift_per_unit * u;
        (lo + s, hi + s)
    }

    pub fn sample<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> f64 {
        self.base.sample(rng) + self.shift_per_unit * u
    }

    pub fn mirrored_in_space(&self, center: f64) -> Self {
        // A shift a*u becomes a*(center - u'): constant a*center plus slope -a.
        let base = if self.shift_per_unit == 0.0 {
            self.base.clone()
        } else {
            shift_density(&self.base, self.shift_per_unit * center)
        };
        Self {
            base,
            shift_per_unit: -self.shift_per_unit,
        }
    }
}

// Law of X + delta.
fn shift_density(d: &Density1D, delta: f64) -> Density1D {
    d.mirrored(0.0).mirrored(delta)
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
