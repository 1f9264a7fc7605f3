//! File formats.
//!
//! * Network: text edge list, one `u v` pair per line meaning `u` follows
//!   `v`. Lines starting with `#` are comments; `# nodes N` fixes the user
//!   count, otherwise it is one more than the largest id.
//! * Events: JSON Lines, one `{"t": .., "u": .., "m": ..}` object per line,
//!   optionally preceded by a `{"horizon": T}` line. Floats are written in
//!   shortest round-trip form, so a write/read cycle is bit-exact.
//! * Parameters: one JSON document with sparse matrices as
//!   `[receiver, source, value]` triplets.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventLog, TIE_BREAK};
use crate::network::Network;
use crate::params::{ModelParams, SparseMatrix};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

pub fn read_network(path: &Path) -> Result<Network> {
    parse_network(open(path)?, &path.display().to_string())
}

/// Parses an edge list; `label` names the source in error messages.
pub fn parse_network<R: BufRead>(reader: R, label: &str) -> Result<Network> {
    let mut declared = None;
    let mut edges = Vec::new();
    let mut max_id = None::<usize>;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| format_err(label, lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("nodes") {
                let n = words
                    .next()
                    .and_then(|w| w.parse::<usize>().ok())
                    .ok_or_else(|| format_err(label, lineno, "expected '# nodes <count>'"))?;
                declared = Some(n);
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut id = |what: &str| -> Result<usize> {
            parts
                .next()
                .ok_or_else(|| format_err(label, lineno, format!("missing {what} id")))?
                .parse::<usize>()
                .map_err(|e| format_err(label, lineno, format!("bad {what} id: {e}")))
        };
        let u = id("follower")?;
        let v = id("followee")?;
        if parts.next().is_some() {
            return Err(format_err(label, lineno, "expected exactly two ids"));
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }
    let n = match (declared, max_id) {
        (Some(n), Some(m)) if m >= n => {
            return Err(format_err(label, 0, format!("id {m} exceeds declared node count {n}")));
        }
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(format_err(label, 0, "empty network without '# nodes' header")),
    };
    Network::new(n, edges).map_err(|e| format_err(label, 0, e.to_string()))
}

pub fn write_network(network: &Network, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_network_to(network, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_network_to<W: Write>(network: &Network, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "# nodes {}", network.n_users())?;
    for (u, v) in network.edges() {
        writeln!(w, "{u} {v}")?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Header {
    horizon: f64,
}

pub fn read_events(path: &Path) -> Result<EventLog> {
    parse_events(open(path)?, &path.display().to_string())
}

/// Parses a JSON Lines event log. Unsorted input is sorted and exact ties
/// are pushed apart (with a warning). Without a header the horizon is set
/// just after the last event.
pub fn parse_events<R: BufRead>(reader: R, label: &str) -> Result<EventLog> {
    let mut horizon = None;
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| format_err(label, lineno, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| format_err(label, lineno, e.to_string()))?;
        if value.get("horizon").is_some() && value.get("t").is_none() {
            if !events.is_empty() || horizon.is_some() {
                return Err(format_err(label, lineno, "horizon header must be the first line"));
            }
            let h: Header = serde_json::from_value(value).map_err(|e| format_err(label, lineno, e.to_string()))?;
            horizon = Some(h.horizon);
            continue;
        }
        let e: Event = serde_json::from_value(value).map_err(|e| format_err(label, lineno, e.to_string()))?;
        if !(e.t.is_finite() && e.t >= 0.0 && e.m.is_finite()) {
            return Err(format_err(label, lineno, "event time must be finite and >= 0, sentiment finite"));
        }
        events.push(e);
    }
    let horizon = horizon.unwrap_or_else(|| {
        let last = events.iter().map(|e| e.t).fold(0.0, f64::max);
        (last + TIE_BREAK).max(last.next_up())
    });
    EventLog::from_unsorted(events, horizon).map_err(|e| format_err(label, 0, e.to_string()))
}

pub fn write_events(log: &EventLog, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    write_events_to(log, &mut w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_events_to<W: Write>(log: &EventLog, w: &mut W) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, &Header { horizon: log.horizon() })?;
    writeln!(w)?;
    for e in log.events() {
        serde_json::to_writer(&mut *w, e)?;
        writeln!(w)?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    omega: f64,
    nu: f64,
    alpha: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    #[serde(rename = "A")]
    a: Vec<(usize, usize, f64)>,
    #[serde(rename = "B")]
    b: Vec<(usize, usize, f64)>,
}

pub fn read_params(path: &Path) -> Result<ModelParams> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(io_err(path))?;
    parse_params(&text, &path.display().to_string())
}

pub fn parse_params(text: &str, label: &str) -> Result<ModelParams> {
    let f: ParamsFile = serde_json::from_str(text).map_err(|e| format_err(label, e.line(), e.to_string()))?;
    let n = f.alpha.len();
    if f.mu.len() != n || f.sigma.len() != n {
        return Err(format_err(
            label,
            0,
            format!(
                "alpha, mu and sigma must have equal lengths ({n}, {}, {})",
                f.mu.len(),
                f.sigma.len()
            ),
        ));
    }
    let matrix = |name: &str, mut t: Vec<(usize, usize, f64)>| {
        t.sort_by_key(|&(u, v, _)| (u, v));
        SparseMatrix::from_triplets(n, t).map_err(|e| format_err(label, 0, format!("{name}: {e}")))
    };
    Ok(ModelParams {
        a: matrix("A", f.a)?,
        b: matrix("B", f.b)?,
        alpha: f.alpha,
        mu: f.mu,
        sigma: f.sigma,
        omega: f.omega,
        nu: f.nu,
    })
}

pub fn params_to_json(params: &ModelParams) -> String {
    let f = ParamsFile {
        omega: params.omega,
        nu: params.nu,
        alpha: params.alpha.clone(),
        mu: params.mu.clone(),
        sigma: params.sigma.clone(),
        a: params.a.triplets().collect(),
        b: params.b.triplets().collect(),
    };
    serde_json::to_string_pretty(&f).expect("parameters serialize")
}

pub fn write_params(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(params_to_json(params).as_bytes()).map_err(io_err(path))?;
    writeln!(w).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Parses a duration in seconds with an optional `s`, `m` or `h` suffix.
pub fn parse_duration(text: &str) -> Result<f64> {
    let text = text.trim();
    let (number, scale) = match text.char_indices().last() {
        Some((i, 's')) => (&text[..i], 1.0),
        Some((i, 'm')) => (&text[..i], 60.0),
        Some((i, 'h')) => (&text[..i], 3600.0),
        _ => (text, 1.0),
    };
    let value: f64 = number
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("cannot parse duration '{text}' (expected e.g. 90, 30s, 10m, 6h)")))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::invalid(format!("duration must be finite and >= 0, got '{text}'")));
    }
    Ok(value * scale)
}
