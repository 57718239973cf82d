//! Empirical cumulative distribution functions over real-valued samples.

use crate::error::{Error, Result};

/// Right-continuous step function `F(x) = #{samples <= x} / len`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::Config("NaN sample in distribution".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Ecdf { sorted: samples })
    }

    pub fn from_counts<I: IntoIterator<Item = usize>>(values: I) -> Result<Self> {
        Ecdf::new(values.into_iter().map(|v| v as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let below = self.sorted.partition_point(|&s| s <= x);
        below as f64 / self.sorted.len() as f64
    }

    /// Distinct sample values in increasing order.
    pub fn support(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &s in &self.sorted {
            if out.last() != Some(&s) {
                out.push(s);
            }
        }
        out
    }

    pub fn samples(&self) -> &[f64] {
        &self.sorted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_values() {
        let f = Ecdf::new(vec![2.0, 1.0, 1.0, 4.0]).unwrap();
        assert_eq!(f.eval(0.5), 0.0);
        assert_eq!(f.eval(1.0), 0.5);
        assert_eq!(f.eval(3.9), 0.75);
        assert_eq!(f.eval(4.0), 1.0);
        assert_eq!(f.support(), vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(Ecdf::new(vec![]), Err(Error::EmptyDistribution)));
    }
}
