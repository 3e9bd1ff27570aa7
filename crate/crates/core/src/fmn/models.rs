//! Simple base models, used as fixtures and in self-tests.

use serde::{Deserialize, Serialize};

use super::BaseModel;

/// Krichevsky–Trofimov estimator: `P(1) = (ones + ½) / (n + 1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KtModel {
    pub zeros: u64,
    pub ones: u64,
}

impl KtModel {
    pub fn new() -> Self {
        Self::default()
    }
}

impl BaseModel for KtModel {
    type Input = ();

    fn predict(&self, _: &()) -> f64 {
        (self.ones as f64 + 0.5) / ((self.zeros + self.ones) as f64 + 1.0)
    }

    fn learn(&mut self, _: &(), target: bool, _: f64) {
        if target {
            self.ones += 1;
        } else {
            self.zeros += 1;
        }
    }
}

/// A non-adaptive Bernoulli source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliModel {
    pub p: f64,
}

impl BernoulliModel {
    pub fn new(p: f64) -> Self {
        Self { p }
    }
}

impl BaseModel for BernoulliModel {
    type Input = ();

    fn predict(&self, _: &()) -> f64 {
        self.p
    }

    fn learn(&mut self, _: &(), _: bool, _: f64) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kt_sequential_probabilities() {
        let mut kt = KtModel::new();
        assert_eq!(kt.predict(&()), 0.5);
        kt.observe(&(), false);
        assert_eq!(kt.predict(&()), 0.25);
        kt.observe(&(), true);
        assert_eq!(kt.predict(&()), 0.5);
        assert_eq!(kt, KtModel { zeros: 1, ones: 1 });
    }
}
