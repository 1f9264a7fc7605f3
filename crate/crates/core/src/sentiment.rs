//! Sentiment (mark) distributions `p(m | x)`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentModel {
    /// `m ~ N(x, sigma_u^2)`.
    #[default]
    Gaussian,
    /// `m in {-1, +1}` with `P(m = +1) = 1 / (1 + e^{-x})`.
    Logistic,
}

impl SentimentModel {
    /// Draws a sentiment for a user with latent opinion `x`. `sigma` is only
    /// used by the Gaussian model.
    pub fn sample<R: Rng + ?Sized>(self, x: f64, sigma: f64, rng: &mut R) -> f64 {
        match self {
            SentimentModel::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                x + sigma * z
            }
            SentimentModel::Logistic => {
                let p_plus = 1.0 / (1.0 + (-x).exp());
                if rng.random::<f64>() < p_plus {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Log density (Gaussian) or log probability mass (logistic).
    pub fn log_likelihood(self, m: f64, x: f64, sigma: f64) -> f64 {
        match self {
            SentimentModel::Gaussian => {
                let z = (m - x) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            SentimentModel::Logistic => -(1.0 + (-m * x).exp()).ln(),
        }
    }
}
