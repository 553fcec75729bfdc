//! Client training-duration distributions.
//!
//! Durations are measured in units of the mean client training time: with
//! `normalize_mean` set every distribution is rescaled so its analytic mean
//! is exactly 1.0.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use super::rng::PrngStream;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DurationKind {
    Constant,
    /// `|X|` with `X ~ Normal(0, shape^2)`.
    HalfNormal,
    /// `Uniform(0, shape)`.
    Uniform,
    /// `Exponential(rate = shape)`.
    Exponential,
}

impl DurationKind {
    pub fn name(self) -> &'static str {
        match self {
            DurationKind::Constant => "constant",
            DurationKind::HalfNormal => "half_normal",
            DurationKind::Uniform => "uniform",
            DurationKind::Exponential => "exponential",
        }
    }

    /// Shape used when a config names the distribution without one.
    pub fn default_shape(self) -> f64 {
        match self {
            DurationKind::Constant => 1.0,
            DurationKind::HalfNormal => 1.25,
            DurationKind::Uniform => 2.0,
            DurationKind::Exponential => 1.0,
        }
    }
}

impl fmt::Display for DurationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DurationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(DurationKind::Constant),
            "half_normal" => Ok(DurationKind::HalfNormal),
            "uniform" => Ok(DurationKind::Uniform),
            "exponential" => Ok(DurationKind::Exponential),
            other => Err(Error::config(format!(
                "unknown duration distribution `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationDist {
    pub kind: DurationKind,
    /// sigma (half-normal), width (uniform), rate (exponential) or the fixed
    /// value (constant).
    pub shape: f64,
    pub normalize_mean: bool,
}

impl DurationDist {
    pub fn new(kind: DurationKind, shape: f64, normalize_mean: bool) -> Result<Self> {
        let dist = DurationDist {
            kind,
            shape,
            normalize_mean,
        };
        dist.validate()?;
        Ok(dist)
    }

    pub fn constant() -> Self {
        DurationDist {
            kind: DurationKind::Constant,
            shape: 1.0,
            normalize_mean: true,
        }
    }

    /// The production-fitted half-normal, sigma = 1.25, normalized.
    pub fn half_normal() -> Self {
        DurationDist {
            kind: DurationKind::HalfNormal,
            shape: 1.25,
            normalize_mean: true,
        }
    }

    pub fn uniform() -> Self {
        DurationDist {
            kind: DurationKind::Uniform,
            shape: 2.0,
            normalize_mean: true,
        }
    }

    pub fn exponential() -> Self {
        DurationDist {
            kind: DurationKind::Exponential,
            shape: 1.0,
            normalize_mean: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape.is_finite() && self.shape > 0.0) {
            return Err(Error::config(format!(
                "{} duration needs a positive shape parameter, got {}",
                self.kind, self.shape
            )));
        }
        Ok(())
    }

    /// Mean of the raw (unnormalized) distribution.
    pub fn raw_mean(&self) -> f64 {
        match self.kind {
            DurationKind::Constant => self.shape,
            DurationKind::HalfNormal => self.shape * (2.0 / PI).sqrt(),
            DurationKind::Uniform => self.shape / 2.0,
            DurationKind::Exponential => 1.0 / self.shape,
        }
    }

    fn raw_variance(&self) -> f64 {
        let s = self.shape;
        match self.kind {
            DurationKind::Constant => 0.0,
            DurationKind::HalfNormal => s * s * (1.0 - 2.0 / PI),
            DurationKind::Uniform => s * s / 12.0,
            DurationKind::Exponential => 1.0 / (s * s),
        }
    }

    fn scale(&self) -> f64 {
        if self.normalize_mean {
            1.0 / self.raw_mean()
        } else {
            1.0
        }
    }

    pub fn mean(&self) -> f64 {
        self.raw_mean() * self.scale()
    }

    pub fn variance(&self) -> f64 {
        self.raw_variance() * self.scale() * self.scale()
    }

    /// One strictly positive draw.
    pub fn sample(&self, rng: &mut PrngStream) -> f64 {
        let scale = self.scale();
        loop {
            let raw = match self.kind {
                DurationKind::Constant => self.shape,
                DurationKind::HalfNormal => {
                    let z: f64 = rng.sample(StandardNormal);
                    (z * self.shape).abs()
                }
                DurationKind::Uniform => rng.next_open_unit() * self.shape,
                DurationKind::Exponential => {
                    let e: f64 = rng.sample(Exp1);
                    e / self.shape
                }
            };
            let d = raw * scale;
            if d > 0.0 {
                return d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_always_one() {
        let mut rng = PrngStream::new(1, 0);
        let d = DurationDist::constant();
        for _ in 0..100 {
            assert_eq!(d.sample(&mut rng), 1.0);
        }
        let unnormalized = DurationDist::new(DurationKind::Constant, 2.5, false).unwrap();
        assert_eq!(unnormalized.sample(&mut rng), 2.5);
        let normalized = DurationDist::new(DurationKind::Constant, 2.5, true).unwrap();
        assert_eq!(normalized.sample(&mut rng), 1.0);
    }

    #[test]
    fn non_positive_shape_is_rejected() {
        assert!(DurationDist::new(DurationKind::HalfNormal, 0.0, true).is_err());
        assert!(DurationDist::new(DurationKind::Exponential, -1.0, true).is_err());
        assert!(DurationDist::new(DurationKind::Uniform, f64::NAN, true).is_err());
    }

    #[test]
    fn normalized_means_are_one() {
        for d in [
            DurationDist::half_normal(),
            DurationDist::uniform(),
            DurationDist::exponential(),
            DurationDist::constant(),
        ] {
            assert!((d.mean() - 1.0).abs() < 1e-15, "{:?}", d.kind);
        }
    }

    fn moments(d: &DurationDist, n: usize, seed: u64) -> (f64, f64, f64) {
        let mut rng = PrngStream::new(seed, 0);
        let xs: Vec<f64> = (0..n).map(|_| d.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64;
        (mean, var, m3 / var.powf(1.5))
    }

    #[test]
    fn exponential_sample_mean() {
        let (mean, _, _) = moments(&DurationDist::exponential(), 1_000_000, 2);
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
    }

    #[test]
    fn half_normal_sample_mean_and_skew() {
        let (mean, var, skew) = moments(&DurationDist::half_normal(), 1_000_000, 3);
        assert!((mean - 1.0).abs() <= 0.02, "mean {mean}");
        // normalized variance is pi/2 - 1
        assert!((var / (PI / 2.0 - 1.0) - 1.0).abs() <= 0.03, "var {var}");
        assert!(skew > 0.0);
    }

    #[test]
    fn samples_are_positive() {
        let mut rng = PrngStream::new(9, 9);
        for d in [
            DurationDist::half_normal(),
            DurationDist::uniform(),
            DurationDist::exponential(),
        ] {
            for _ in 0..10_000 {
                assert!(d.sample(&mut rng) > 0.0);
            }
        }
    }
}
