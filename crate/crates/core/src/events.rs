use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap inserted between events that were recorded with identical timestamps.
pub const TIE_BREAK: f64 = 1e-9;

/// One message: user `u` posted sentiment `m` at time `t` (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub u: usize,
    pub m: f64,
}

impl Event {
    pub fn new(t: f64, u: usize, m: f64) -> Self {
        Self { t, u, m }
    }
}

/// Time-ordered message history on `[0, horizon)`.
///
/// Event times are strictly increasing: two jumps never share a time point.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    horizon: f64,
}

impl EventLog {
    /// Validates an already ordered sequence.
    pub fn new(events: Vec<Event>, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive and finite, got {horizon}")));
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter().enumerate() {
            check_event(e, i)?;
            if e.t <= prev {
                return Err(Error::invalid(format!(
                    "event {i} at t={} is not strictly after the previous event at t={prev}",
                    e.t
                )));
            }
            if e.t >= horizon {
                return Err(Error::invalid(format!(
                    "event {i} at t={} is not before the horizon {horizon}",
                    e.t
                )));
            }
            prev = e.t;
        }
        Ok(Self { events, horizon })
    }

    /// Ingestion path: sorts by time (stable) and pushes exact ties apart by
    /// [`TIE_BREAK`] seconds, logging a warning for each perturbed event.
    pub fn from_unsorted(mut events: Vec<Event>, horizon: f64) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            check_event(e, i)?;
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut perturbed = 0usize;
        for i in 1..events.len() {
            if events[i].t <= events[i - 1].t {
                let t = events[i - 1].t + TIE_BREAK;
                log::warn!(
                    "tied event time {} for user {}; moved to {t}",
                    events[i].t,
                    events[i].u
                );
                events[i].t = t;
                perturbed += 1;
            }
        }
        if perturbed > 0 {
            log::warn!("{perturbed} tied event times were perturbed by {TIE_BREAK} s");
        }
        Self::new(events, horizon)
    }

    pub fn empty(horizon: f64) -> Result<Self> {
        Self::new(Vec::new(), horizon)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Events strictly before `t`, i.e. the history `H(t)`.
    pub fn history_before(&self, t: f64) -> &[Event] {
        let end = self.events.partition_point(|e| e.t < t);
        &self.events[..end]
    }

    /// The first `n` events, with the horizon moved to just after the last
    /// retained event (or kept when nothing is dropped).
    pub fn truncate_to(&self, n: usize) -> Self {
        if n >= self.events.len() {
            return self.clone();
        }
        let horizon = if n == 0 {
            self.events[0].t.max(f64::MIN_POSITIVE)
        } else {
            0.5 * (self.events[n - 1].t + self.events[n].t)
        };
        Self {
            events: self.events[..n].to_vec(),
            horizon,
        }
    }

    /// Splits chronologically: the first `ceil(frac * len)` events form the
    /// training log, whose horizon is the first held-out event time.
    pub fn split_chronological(&self, frac: f64) -> (Self, &[Event]) {
        let n_train = ((self.events.len() as f64) * frac).ceil() as usize;
        let n_train = n_train.min(self.events.len());
        let horizon = self
            .events
            .get(n_train)
            .map(|e| e.t)
            .unwrap_or(self.horizon);
        let train = Self {
            events: self.events[..n_train].to_vec(),
            horizon: horizon.max(f64::MIN_POSITIVE),
        };
        (train, &self.events[n_train..])
    }

    /// Event indices grouped by user.
    pub fn index_by_user(&self, n_users: usize) -> Result<Vec<Vec<usize>>> {
        let mut by_user = vec![Vec::new(); n_users];
        for (i, e) in self.events.iter().enumerate() {
            by_user
                .get_mut(e.u)
                .ok_or(Error::UnknownUser {
                    user: e.u,
                    n_users,
                })?
                .push(i);
        }
        Ok(by_user)
    }

    pub fn check_users(&self, n_users: usize) -> Result<()> {
        match self.events.iter().find(|e| e.u >= n_users) {
            Some(e) => Err(Error::UnknownUser {
                user: e.u,
                n_users,
            }),
            None => Ok(()),
        }
    }
}

fn check_event(e: &Event, i: usize) -> Result<()> {
    if !(e.t.is_finite() && e.t >= 0.0) {
        return Err(Error::invalid(format!("event {i}: time {} must be finite and >= 0", e.t)));
    }
    if !e.m.is_finite() {
        return Err(Error::invalid(format!("event {i}: sentiment {} is not finite", e.m)));
    }
    Ok(())
}
