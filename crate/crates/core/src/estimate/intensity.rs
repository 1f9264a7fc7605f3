//! Negative log-likelihood of one user's posting times.
//!
//! With `x = [mu_u, b_{s_1 u}, ..., b_{s_k u}]` over the excitation sources
//! `s = [u, N(u)...]`, the intensity at the user's `j`-th event is
//! `lambda_j = mu_u + sum_c b_c h(j, c)` and
//!
//! ```text
//! f(x) = -sum_j log lambda_j + mu_u T + sum_c b_c I(c)
//! ```
//!
//! which is convex on the nonnegative orthant. In the Poisson model `x` is
//! just `[mu_u]`.

use super::features::UserFeatures;

/// Evaluates `f(x)` and writes `grad f(x)` into `grad`. Returns `+inf`
/// (gradient left as NaN) when some `lambda_j <= 0`.
pub fn hawkes_negloglik_and_grad(x: &[f64], features: &UserFeatures, horizon: f64, grad: &mut [f64]) -> f64 {
    let k = x.len() - 1;
    debug_assert!(k == 0 || k == features.excitation_sources.len());
    debug_assert_eq!(grad.len(), x.len());
    let mu = x[0];
    let b = &x[1..];

    grad[0] = horizon;
    grad[1..].copy_from_slice(&features.compensator[..k]);
    let mut value = mu * horizon + b.iter().zip(&features.compensator).map(|(b, i)| b * i).sum::<f64>();

    for j in 0..features.n_events() {
        let h = &features.intensity_row(j)[..k];
        let lambda = mu + b.iter().zip(h).map(|(b, h)| b * h).sum::<f64>();
        if !(lambda > 0.0) {
            grad.iter_mut().for_each(|g| *g = f64::NAN);
            return f64::INFINITY;
        }
        value -= lambda.ln();
        let inv = 1.0 / lambda;
        grad[0] -= inv;
        for (g, h) in grad[1..].iter_mut().zip(h) {
            *g -= h * inv;
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::features::build_features;
    use crate::events::{Event, EventLog};
    use crate::network::Network;

    #[test]
    fn single_event_poisson_value() {
        let g = Network::empty(1).unwrap();
        let log = EventLog::new(vec![Event::new(0.3, 0, 0.0)], 1.0).unwrap();
        let f = build_features(&log, &g, 1.0, 1.0).unwrap();
        let mut grad = [0.0; 2];
        let v = hawkes_negloglik_and_grad(&[1.0, 0.0], f.user(0), 1.0, &mut grad);
        assert!((v - 1.0).abs() < 1e-15);
        assert!((grad[0] - 0.0).abs() < 1e-15);
    }

    #[test]
    fn no_events_is_linear() {
        let g = Network::new(2, [(0, 1)]).unwrap();
        let log = EventLog::new(vec![Event::new(0.5, 1, 0.0)], 2.0).unwrap();
        let f = build_features(&log, &g, 1.0, 1.0).unwrap();
        let u = f.user(0);
        let mut grad = [0.0; 3];
        let v = hawkes_negloglik_and_grad(&[0.4, 0.2, 0.7], u, 2.0, &mut grad);
        let expected = 0.4 * 2.0 + 0.7 * u.compensator[1];
        assert!((v - expected).abs() < 1e-15);
        assert_eq!(grad[0], 2.0);
        assert!(grad.iter().all(|g| *g >= 0.0));
    }

    #[test]
    fn zero_intensity_is_a_barrier() {
        let g = Network::empty(1).unwrap();
        let log = EventLog::new(vec![Event::new(0.3, 0, 0.0)], 1.0).unwrap();
        let f = build_features(&log, &g, 1.0, 1.0).unwrap();
        let mut grad = [0.0; 1];
        assert_eq!(hawkes_negloglik_and_grad(&[0.0], f.user(0), 1.0, &mut grad), f64::INFINITY);
    }
}
