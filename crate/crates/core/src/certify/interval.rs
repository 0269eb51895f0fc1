//! Closed real intervals and axis-aligned boxes.

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("interval [{lo}, {hi}] is empty or NaN")));
        }
        Ok(Self { lo, hi })
    }

    /// Common part of two intervals, `None` when disjoint.
    pub fn intersect(&self, o: &Interval) -> Option<Interval> {
        let (lo, hi) = (self.lo.max(o.lo), self.hi.min(o.hi));
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    /// Interval `c ± r` for `r >= 0`.
    pub fn around(c: f64, r: f64) -> Self {
        Self { lo: c - r, hi: c + r }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Strictly contains `v` in its interior.
    pub fn straddles(&self, v: f64) -> bool {
        self.lo < v && v < self.hi
    }

    pub fn scale(&self, c: f64) -> Self {
        if c >= 0.0 {
            Self { lo: c * self.lo, hi: c * self.hi }
        } else {
            Self { lo: c * self.hi, hi: c * self.lo }
        }
    }

    /// Exact product: extremes are attained at endpoint pairs.
    pub fn mul(&self, o: &Interval) -> Self {
        let c = [self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi];
        Self { lo: c.iter().copied().fold(f64::INFINITY, f64::min), hi: c.iter().copied().fold(f64::NEG_INFINITY, f64::max) }
    }

    pub fn add(&self, o: &Interval) -> Self {
        Self { lo: self.lo + o.lo, hi: self.hi + o.hi }
    }

    /// Widens both ends by `pad >= 0`.
    pub fn pad(&self, pad: f64) -> Self {
        Self { lo: self.lo - pad, hi: self.hi + pad }
    }
}

/// `{x : |x_i - center_i| <= delta_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    pub center: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Hyperbox {
    pub fn new(center: Vec<f64>, delta: Vec<f64>) -> Result<Self> {
        check_dim(center.len(), delta.len())?;
        if delta.iter().any(|d| !(*d >= 0.0)) {
            return Err(Error::InvalidArgument("box half-widths must be non-negative".into()));
        }
        Ok(Self { center, delta })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.center).zip(&self.delta).all(|((x, c), d)| (x - c).abs() <= *d)
    }

    pub fn lo(&self) -> Vec<f64> {
        self.center.iter().zip(&self.delta).map(|(c, d)| c - d).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.center.iter().zip(&self.delta).map(|(c, d)| c + d).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products() {
        let a = Interval::new(1.0, 2.0).unwrap();
        let b = Interval::new(3.0, 4.0).unwrap();
        assert_eq!(a.mul(&b), Interval { lo: 3.0, hi: 8.0 });
        let c = Interval::new(-1.0, 2.0).unwrap();
        assert_eq!(c.mul(&b), Interval { lo: -4.0, hi: 8.0 });
        assert_eq!(c.scale(-2.0), Interval { lo: -4.0, hi: 2.0 });
    }

    #[test]
    fn invalid() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        assert!(Hyperbox::new(vec![0.0], vec![-1.0]).is_err());
        assert!(Hyperbox::new(vec![0.0], vec![1.0, 1.0]).is_err());
    }
}
