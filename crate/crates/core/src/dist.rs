//! Nonnegative parametric distributions for service times and delays.
//!
//! Pareto uses the Lomax (origin-shifted) convention: `P[X > t] = (1 + t/scale)^-shape`,
//! so its support starts at 0 like every other variant.
//!
//! In scenario files a distribution is a tagged record, e.g.
//! `{ type = "exponential", rate = 1.0 }` or
//! `{ type = "min", components = [{ type = "deterministic", value = 2.0 }, ...] }`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::DistError;
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Distribution {
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    Pareto { shape: f64, scale: f64 },
    Weibull { shape: f64, scale: f64 },
    Scaled { inner: Box<Distribution>, factor: f64 },
    Min { components: Vec<Distribution> },
}

use Distribution::*;

fn positive(name: &str, v: f64) -> Result<(), DistError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Distribution {
    pub fn deterministic(value: f64) -> Result<Self, DistError> {
        let d = Deterministic { value };
        d.validate()?;
        Ok(d)
    }

    pub fn exponential(rate: f64) -> Result<Self, DistError> {
        let d = Exponential { rate };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self, DistError> {
        let d = Uniform { low, high };
        d.validate()?;
        Ok(d)
    }

    pub fn hyperexponential(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self, DistError> {
        let d = Hyperexponential { weights, rates };
        d.validate()?;
        Ok(d)
    }

    pub fn pareto(shape: f64, scale: f64) -> Result<Self, DistError> {
        let d = Pareto { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self, DistError> {
        let d = Weibull { shape, scale };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            Deterministic { value } => {
                if value.is_finite() && *value >= 0.0 {
                    Ok(())
                } else {
                    Err(DistError::InvalidParameter(format!(
                        "deterministic value must be finite and >= 0, got {value}"
                    )))
                }
            }
            Exponential { rate } => positive("rate", *rate),
            Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && *low >= 0.0 && high > low {
                    Ok(())
                } else {
                    Err(DistError::InvalidParameter(format!(
                        "uniform needs 0 <= low < high, got ({low}, {high})"
                    )))
                }
            }
            Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(DistError::InvalidParameter(
                        "hyperexponential needs equally many (>= 1) weights and rates".into(),
                    ));
                }
                for r in rates {
                    positive("rate", *r)?;
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(DistError::InvalidParameter("weights must be >= 0".into()));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(DistError::InvalidParameter(format!(
                        "weights must sum to 1, got {total}"
                    )));
                }
                Ok(())
            }
            Pareto { shape, scale } | Weibull { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            Scaled { inner, factor } => {
                positive("factor", *factor)?;
                inner.validate()
            }
            Min { components } => {
                if components.is_empty() {
                    return Err(DistError::EmptyComposition);
                }
                components.iter().try_for_each(Distribution::validate)
            }
        }
    }

    /// Draws one value. Min-compositions draw every component in order and
    /// return the smallest, so the draw is coupled to the component draws.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            Deterministic { value } => *value,
            Exponential { rate } => -rng.open_uniform().ln() / rate,
            Uniform { low, high } => low + (high - low) * rng.uniform(),
            Hyperexponential { weights, rates } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                let mut branch = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        branch = i;
                        break;
                    }
                }
                -rng.open_uniform().ln() / rates[branch]
            }
            Pareto { shape, scale } => scale * (rng.open_uniform().powf(-1.0 / shape) - 1.0),
            Weibull { shape, scale } => scale * (-rng.open_uniform().ln()).powf(1.0 / shape),
            Scaled { inner, factor } => factor * inner.sample(rng),
            Min { components } => components
                .iter()
                .map(|c| c.sample(rng))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// `P[X > t]`.
    pub fn survival(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match self {
            Deterministic { value } => {
                if t >= *value {
                    0.0
                } else {
                    1.0
                }
            }
            Exponential { rate } => (-rate * t).exp(),
            Uniform { low, high } => 1.0 - ((t - low) / (high - low)).clamp(0.0, 1.0),
            Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (-r * t).exp())
                .sum(),
            Pareto { shape, scale } => (1.0 + t / scale).powf(-shape),
            Weibull { shape, scale } => (-(t / scale).powf(*shape)).exp(),
            Scaled { inner, factor } => inner.survival(t / factor),
            Min { components } => components.iter().map(|c| c.survival(t)).product(),
        }
    }

    /// `P[X <= t]`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            Exponential { rate } => -(-rate * t).exp_m1(),
            Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| -w * (-r * t).exp_m1())
                .sum(),
            Weibull { shape, scale } => -(-(t / scale).powf(*shape)).exp_m1(),
            Scaled { inner, factor } => inner.cdf(t / factor),
            _ => 1.0 - self.survival(t),
        }
    }

    /// `P[X < t]`, the left limit of the cdf. Differs from [`cdf`](Self::cdf)
    /// only at atoms.
    pub fn cdf_left(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            Deterministic { value } => {
                if t > *value {
                    1.0
                } else {
                    0.0
                }
            }
            Scaled { inner, factor } => inner.cdf_left(t / factor),
            Min { components } => {
                1.0 - components
                    .iter()
                    .map(|c| 1.0 - c.cdf_left(t))
                    .product::<f64>()
            }
            _ => self.cdf(t),
        }
    }

    /// Decay exponent of a polynomial tail, `None` for light (exponential or
    /// bounded) tails.
    pub fn tail_index(&self) -> Option<f64> {
        match self {
            Pareto { shape, .. } => Some(*shape),
            Scaled { inner, .. } => inner.tail_index(),
            Min { components } => {
                let mut total = 0.0;
                for c in components {
                    total += c.tail_index()?;
                }
                Some(total)
            }
            _ => None,
        }
    }

    /// Right end of the support when bounded.
    pub fn support_max(&self) -> Option<f64> {
        match self {
            Deterministic { value } => Some(*value),
            Uniform { high, .. } => Some(*high),
            Scaled { inner, factor } => inner.support_max().map(|m| m * factor),
            Min { components } => components
                .iter()
                .filter_map(Distribution::support_max)
                .reduce(f64::min),
            _ => None,
        }
    }

    pub fn mean(&self) -> Result<f64, DistError> {
        match self {
            Deterministic { value } => Ok(*value),
            Exponential { rate } => Ok(1.0 / rate),
            Uniform { low, high } => Ok(0.5 * (low + high)),
            Hyperexponential { weights, rates } => {
                Ok(weights.iter().zip(rates).map(|(w, r)| w / r).sum())
            }
            Pareto { shape, scale } => {
                if *shape > 1.0 {
                    Ok(scale / (shape - 1.0))
                } else {
                    Err(DistError::InfiniteMean)
                }
            }
            Weibull { shape, scale } => Ok(scale * gamma(1.0 + 1.0 / shape)),
            Scaled { inner, factor } => Ok(factor * inner.mean()?),
            Min { components } => {
                if let Some(alpha) = self.tail_index() {
                    if alpha <= 1.0 {
                        return Err(DistError::InfiniteMean);
                    }
                }
                if let Some(rate) = exponential_rate_sum(components) {
                    return Ok(1.0 / rate);
                }
                Ok(integrate_survival(self))
            }
        }
    }

    /// Law of `k·X`.
    pub fn scale(&self, k: f64) -> Result<Distribution, DistError> {
        if !(k.is_finite() && k > 0.0) {
            return Err(DistError::NonPositiveScale(k));
        }
        Ok(match self {
            Deterministic { value } => Deterministic { value: value * k },
            Exponential { rate } => Exponential { rate: rate / k },
            Uniform { low, high } => Uniform {
                low: low * k,
                high: high * k,
            },
            Hyperexponential { weights, rates } => Hyperexponential {
                weights: weights.clone(),
                rates: rates.iter().map(|r| r / k).collect(),
            },
            Pareto { shape, scale } => Pareto {
                shape: *shape,
                scale: scale * k,
            },
            Weibull { shape, scale } => Weibull {
                shape: *shape,
                scale: scale * k,
            },
            Scaled { inner, factor } => {
                let f = factor * k;
                if f == 1.0 {
                    (**inner).clone()
                } else {
                    Scaled {
                        inner: inner.clone(),
                        factor: f,
                    }
                }
            }
            Min { components } => Min {
                components: components
                    .iter()
                    .map(|c| c.scale(k))
                    .collect::<Result<_, _>>()?,
            },
        })
    }

    /// A rough magnitude of typical values, used to size integration steps.
    fn scale_hint(&self) -> f64 {
        match self {
            Deterministic { value } => value.max(f64::MIN_POSITIVE),
            Exponential { rate } => 1.0 / rate,
            Uniform { high, .. } => *high,
            Hyperexponential { rates, .. } => 1.0 / rates.iter().cloned().fold(f64::INFINITY, f64::min),
            Pareto { scale, .. } | Weibull { scale, .. } => *scale,
            Scaled { inner, factor } => factor * inner.scale_hint(),
            Min { components } => components
                .iter()
                .map(Distribution::scale_hint)
                .fold(f64::INFINITY, f64::min),
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Deterministic { value } => out.push(*value),
            Uniform { low, high } => {
                out.push(*low);
                out.push(*high);
            }
            Scaled { inner, factor } => {
                let mut inner_pts = Vec::new();
                inner.breakpoints(&mut inner_pts);
                out.extend(inner_pts.into_iter().map(|p| p * factor));
            }
            Min { components } => components.iter().for_each(|c| c.breakpoints(out)),
            _ => {}
        }
    }
}

/// Law of the minimum of independent draws from `ds`.
pub fn min_of(ds: &[Distribution]) -> Result<Distribution, DistError> {
    if ds.is_empty() {
        return Err(DistError::EmptyComposition);
    }
    let mut components = Vec::with_capacity(ds.len());
    for d in ds {
        d.validate()?;
        match d {
            Min { components: inner } => components.extend(inner.iter().cloned()),
            other => components.push(other.clone()),
        }
    }
    Ok(Min { components })
}

fn exponential_rate_sum(components: &[Distribution]) -> Option<f64> {
    let mut total = 0.0;
    for c in components {
        total += match c {
            Exponential { rate } => *rate,
            Scaled { inner, factor } => match inner.as_ref() {
                Exponential { rate } => rate / factor,
                _ => return None,
            },
            _ => return None,
        };
    }
    Some(total)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

// Integrates the survival function piecewise between atoms and kinks, then
// over doubling intervals until the remaining tail is negligible. Polynomial
// tails get their remainder added in closed form.
fn integrate_survival(d: &Distribution) -> f64 {
    // Evaluate strictly inside each piece so atoms at the ends do not matter.
    let surv = |t: f64| d.survival(t);
    let hint = d.scale_hint();
    let tol = 1e-13 * hint.max(1e-300);

    let mut points = vec![0.0];
    d.breakpoints(&mut points);
    let upper = d.support_max();
    if let Some(u) = upper {
        points.push(u);
    }
    points.retain(|p| p.is_finite() && *p >= 0.0 && upper.is_none_or(|u| *p <= u));
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut total = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            total += integrate_piece(&surv, w[0], w[1], tol);
        }
    }
    if upper.is_some() {
        return total;
    }

    let mut x = *points.last().unwrap();
    let mut width = 0.25 * hint;
    let tail = d.tail_index();
    for _ in 0..4000 {
        let next = x + width;
        let piece = integrate_piece(&surv, x, next, tol);
        total += piece;
        x = next;
        let s = d.survival(x);
        match tail {
            Some(alpha) if x > 1e4 * hint => {
                // survival ~ s·(x/t)^alpha beyond x
                total += x * s / (alpha - 1.0);
                return total;
            }
            Some(_) => {}
            None => {
                if s * x.max(hint) < 1e-16 * total.max(f64::MIN_POSITIVE) || s == 0.0 {
                    return total;
                }
            }
        }
        width *= 1.5;
    }
    total
}

fn integrate_piece(surv: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    // Pull the endpoints inward by a hair: atoms make survival jump exactly at
    // breakpoints, and the integrand's value at a single point is irrelevant.
    let eps = (b - a) * 1e-15;
    let f = |t: f64| surv(t.clamp(a + eps, b - eps));
    adaptive_simpson(&f, a, b, tol.max(1e-15 * (b - a)))
}
