//! Held-out sentiment prediction, dataset summaries and plot data.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{estimate_all, EstimateConfig};
use crate::events::{Event, EventLog};
use crate::forecast::{default_step, forecast_hawkes, forecast_poisson, ForecastState};
use crate::network::Network;
use crate::params::ModelParams;
use crate::state::MarkovState;

/// Where the model used for prediction comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamsSource {
    /// Known parameters, e.g. the ground truth of a synthetic log.
    Given(ModelParams),
    /// Fit on the training part of the log.
    Fit(EstimateConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub params: ParamsSource,
    /// Forecast horizons in seconds; `0` is nowcasting.
    pub horizons: Vec<f64>,
    pub train_fraction: f64,
}

impl EvalConfig {
    pub fn new(params: ParamsSource, horizons: Vec<f64>) -> Self {
        Self {
            params,
            horizons,
            train_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HorizonScore {
    pub horizon: f64,
    /// Mean of `(m - m_hat)^2`.
    pub mse: f64,
    /// Share of test messages with `sgn(m) != sgn(m_hat)`.
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub horizons: Vec<HorizonScore>,
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Mean squared error and sign-failure rate of predictions against labels.
/// A zero prediction counts as a failure against a nonzero label.
pub fn score(predictions: &[f64], labels: &[f64]) -> (f64, f64) {
    let n = labels.len().max(1) as f64;
    let mse = predictions.iter().zip(labels).map(|(p, m)| (p - m).powi(2)).sum::<f64>() / n;
    let failures = predictions.iter().zip(labels).filter(|(p, m)| sign(**p) != sign(**m)).count();
    (mse, failures as f64 / n)
}

/// Predicts each held-out message from the history `horizon` seconds
/// before it: `m_hat = E[x_u(t) | H(t - horizon)]`.
///
/// The log is split chronologically; the last `1 - train_fraction` of the
/// events are the test set. History used for prediction includes earlier
/// test events, as in a rolling evaluation.
pub fn evaluate(log: &EventLog, network: &Network, config: &EvalConfig) -> Result<EvalReport> {
    if config.horizons.iter().any(|h| !(*h >= 0.0 && h.is_finite())) {
        return Err(Error::invalid("horizons must be finite and >= 0"));
    }
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::invalid("train fraction must be in (0, 1)"));
    }
    let (train, test) = log.split_chronological(config.train_fraction);
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let params = match &config.params {
        ParamsSource::Given(p) => p.clone(),
        ParamsSource::Fit(cfg) => estimate_all(&train, network, cfg)?,
    };
    params.validate(network)?;

    let start = train.len();
    let labels: Vec<f64> = test.iter().map(|e| e.m).collect();
    let horizons = config
        .horizons
        .iter()
        .map(|&h| {
            let preds = predict(log.events(), start, &params, network, h)?;
            let (mse, failure_rate) = score(&preds, &labels);
            Ok(HorizonScore {
                horizon: h,
                mse,
                failure_rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport {
        n_test: test.len(),
        horizons,
    })
}

/// `E[x_{u_j}(t_j) | H(t_j - horizon)]` for each `j >= start`.
///
/// A single sweep keeps the Markov state at the moving origin. The mean is
/// propagated analytically for Poisson intensities, by the mean ODE for
/// diagonal excitation, and otherwise with the Poisson formula at the base
/// rates (excitation ignored beyond the origin).
pub fn predict(events: &[Event], start: usize, params: &ModelParams, network: &Network, horizon: f64) -> Result<Vec<f64>> {
    let mut state = MarkovState::initial(params);
    let mut next = 0;
    let hawkes = !params.b.is_zero() && params.b.is_diagonal();
    if !params.b.is_zero() && !params.b.is_diagonal() && horizon > 0.0 {
        log::warn!("excitation matrix is not diagonal; forecasts ignore excitation after the origin");
    }
    let mut preds = Vec::with_capacity(events.len() - start);
    for e in &events[start..] {
        let origin = e.t - horizon;
        while next < events.len() && events[next].t < origin.max(0.0) {
            state.apply_jump(&events[next], params, network)?;
            next += 1;
        }
        if horizon == 0.0 || origin <= state.t_now() {
            // no time to propagate beyond the last applied jump
            preds.push(state.opinion_at(e.u, e.t, params)?);
            continue;
        }
        let origin = origin.max(0.0);
        let fs = ForecastState {
            x0: state.opinions_at(origin, params)?,
            eta0: state.intensities_at(origin, params)?,
            t0: origin,
        };
        let r = if hawkes {
            forecast_hawkes(&fs, params, e.t, default_step(params))?
        } else {
            forecast_poisson(&fs, params, e.t)?
        };
        preds.push(r.mean[e.u]);
    }
    Ok(preds)
}

/// Summary counts of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_edges: usize,
    pub n_events: usize,
    pub mean_sentiment: f64,
    pub std_sentiment: f64,
}

pub fn dataset_stats(network: &Network, log: &EventLog) -> DatasetStats {
    let n = log.len();
    let (mean, std) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = log.events().iter().map(|e| e.m).sum::<f64>() / n as f64;
        let var = log.events().iter().map(|e| (e.m - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    DatasetStats {
        n_users: network.n_users(),
        n_edges: network.n_edges(),
        n_events: n,
        mean_sentiment: mean,
        std_sentiment: std,
    }
}

/// Mean sentiment over the trailing window `(t - window, t]`, evaluated at
/// each event time.
pub fn running_average(events: &[Event], window: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(events.len());
    let mut lo = 0;
    let mut sum = 0.0;
    for (hi, e) in events.iter().enumerate() {
        sum += e.m;
        while events[lo].t <= e.t - window {
            sum -= events[lo].m;
            lo += 1;
        }
        out.push((e.t, sum / (hi + 1 - lo) as f64));
    }
    out
}

/// A named sequence of `(t, value)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub points: Vec<(f64, f64)>,
}

/// Writes tidy CSV with columns `t, series_id, value`, sorted by series id
/// and then time.
pub fn emit_plot_data(series: &[Series], path: &Path) -> Result<()> {
    let io = |e: csv::Error| Error::Io {
        path: path.display().to_string(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    write_plot_rows(series, &mut w).map_err(io)?;
    w.flush().map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_plot_rows<W: std::io::Write>(series: &[Series], w: &mut csv::Writer<W>) -> csv::Result<()> {
    w.write_record(["t", "series_id", "value"])?;
    let mut rows: Vec<(&str, f64, f64)> = series
        .iter()
        .flat_map(|s| s.points.iter().map(move |&(t, v)| (s.id.as_str(), t, v)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
    for (id, t, v) in rows {
        w.write_record([t.to_string(), id.to_string(), v.to_string()])?;
    }
    Ok(())
}
