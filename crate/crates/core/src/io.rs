//! CSV formats for graphs, observations, null-density tables and results.
//!
//! Readers take any `Read` plus a source name used in error messages, which
//! carry the 1-based line number of the offending row.

use std::collections::HashMap;
use std::io::{Read, Write};

use crate::basis::TimeWindow;
use crate::error::{Error, Result};
use crate::estimation::{BicRow, ObservationSet, Sample};
use crate::graph::GeoPoint;
use crate::model::NullDensity;
use crate::simulation::BenchmarkRow;

/// Zero p-values are replaced by this floor at ingestion.
pub const P_VALUE_FLOOR: f64 = 1e-15;

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(source, line, e.to_string())
}

fn check_header<R: Read>(
    rdr: &mut csv::Reader<R>,
    source: &str,
    required: &[&str],
    optional: &[&str],
) -> Result<usize> {
    let header = rdr.headers().map_err(|e| csv_error(source, e))?.clone();
    let got: Vec<&str> = header.iter().collect();
    let n = got.len();
    let ok = n >= required.len()
        && n <= required.len() + optional.len()
        && got[..required.len()] == *required
        && got[required.len()..] == optional[..n - required.len()];
    if !ok {
        let mut want = required.join(",");
        for o in optional {
            want.push_str(&format!("[,{o}]"));
        }
        return Err(Error::parse(
            source,
            1,
            format!("expected header `{want}`, found `{}`", got.join(",")),
        ));
    }
    Ok(n)
}

fn field<'r>(
    rec: &'r csv::StringRecord,
    i: usize,
    name: &str,
    source: &str,
    line: u64,
) -> Result<&'r str> {
    rec.get(i)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::parse(source, line, format!("missing `{name}`")))
}

fn number(rec: &csv::StringRecord, i: usize, name: &str, source: &str, line: u64) -> Result<f64> {
    let raw = field(rec, i, name, source, line)?;
    let v: f64 = raw
        .parse()
        .map_err(|_| Error::parse(source, line, format!("`{name}` is not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(
            source,
            line,
            format!("`{name}` is not finite"),
        ));
    }
    Ok(v)
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    source: &str,
    width: usize,
) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(source, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::parse(
                source,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        out.push((line, rec));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    pub ids: Vec<String>,
    pub points: Vec<GeoPoint>,
}

/// `vertex_id,lat,lon`.
pub fn read_nodes<R: Read>(input: R, source: &str) -> Result<NodeTable> {
    let mut rdr = reader(input);
    check_header(&mut rdr, source, &["vertex_id", "lat", "lon"], &[])?;
    let mut ids = Vec::new();
    let mut points = Vec::new();
    let mut seen = HashMap::new();
    for (line, rec) in records(&mut rdr, source, 3)? {
        let id = field(&rec, 0, "vertex_id", source, line)?.to_string();
        let lat = number(&rec, 1, "lat", source, line)?;
        let lon = number(&rec, 2, "lon", source, line)?;
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=360.0).contains(&lon) {
            return Err(Error::parse(
                source,
                line,
                format!("coordinates ({lat}, {lon}) out of range"),
            ));
        }
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(Error::parse(
                source,
                line,
                format!("vertex_id {id:?} already defined on line {prev}"),
            ));
        }
        ids.push(id);
        points.push(GeoPoint { lat, lon });
    }
    if ids.is_empty() {
        return Err(Error::parse(source, 1, "no vertices"));
    }
    Ok(NodeTable { ids, points })
}

/// `src,dst` over vertex ids; returns index pairs. Self-loops and duplicate
/// undirected edges are rejected.
pub fn read_edges<R: Read>(input: R, source: &str, ids: &[String]) -> Result<Vec<(usize, usize)>> {
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rdr = reader(input);
    check_header(&mut rdr, source, &["src", "dst"], &[])?;
    let mut seen = HashMap::new();
    let mut edges = Vec::new();
    for (line, rec) in records(&mut rdr, source, 2)? {
        let mut ends = [0usize; 2];
        for (k, name) in ["src", "dst"].into_iter().enumerate() {
            let id = field(&rec, k, name, source, line)?;
            ends[k] = *index
                .get(id)
                .ok_or_else(|| Error::parse(source, line, format!("unknown vertex_id {id:?}")))?;
        }
        let [a, b] = ends;
        if a == b {
            return Err(Error::parse(source, line, "self-loop"));
        }
        if let Some(prev) = seen.insert((a.min(b), a.max(b)), line) {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate of the edge on line {prev}"),
            ));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

/// One parsed observation row with its raw time.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub vertex_id: String,
    pub raw_time: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone)]
pub struct Observations {
    pub set: ObservationSet,
    pub rows: Vec<ObservationRow>,
    /// Number of zero p-values raised to [`P_VALUE_FLOOR`].
    pub clamped: usize,
}

/// `vertex_id,time,p_value[,theta]`. Times are raw and mapped through
/// `window`; zero p-values are clamped with a warning.
pub fn read_observations<R: Read>(
    input: R,
    source: &str,
    ids: &[String],
    window: &TimeWindow,
) -> Result<Observations> {
    let index: HashMap<&str, usize> = ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut rdr = reader(input);
    let width = check_header(
        &mut rdr,
        source,
        &["vertex_id", "time", "p_value"],
        &["theta"],
    )?;
    let has_theta = width == 4;

    let mut samples = Vec::new();
    let mut rows = Vec::new();
    let mut theta = Vec::new();
    let mut clamped = 0;
    for (line, rec) in records(&mut rdr, source, width)? {
        let id = field(&rec, 0, "vertex_id", source, line)?;
        let vertex = *index
            .get(id)
            .ok_or_else(|| Error::parse(source, line, format!("unknown vertex_id {id:?}")))?;
        let raw_time = number(&rec, 1, "time", source, line)?;
        let time = window
            .normalize(raw_time)
            .map_err(|e| Error::parse(source, line, e.to_string()))?;
        let mut p = number(&rec, 2, "p_value", source, line)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parse(
                source,
                line,
                format!("p_value {p} is outside [0, 1]"),
            ));
        }
        if p == 0.0 {
            log::warn!("{source}, line {line}: p_value 0 clamped to {P_VALUE_FLOOR}");
            p = P_VALUE_FLOOR;
            clamped += 1;
        }
        if has_theta {
            match field(&rec, 3, "theta", source, line)? {
                "0" => theta.push(0),
                "1" => theta.push(1),
                other => {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("theta must be 0 or 1, got {other:?}"),
                    ))
                }
            }
        }
        samples.push(Sample { vertex, time, p });
        rows.push(ObservationRow {
            vertex_id: id.to_string(),
            raw_time,
            p_value: p,
        });
    }
    if samples.is_empty() {
        return Err(Error::parse(source, 1, "no observations"));
    }
    let set = ObservationSet::new(samples, has_theta.then_some(theta), ids.len())?;
    Ok(Observations { set, rows, clamped })
}

/// `p,density` with `p` ascending over `[0, 1]`.
pub fn read_null_table<R: Read>(input: R, source: &str) -> Result<NullDensity> {
    let mut rdr = reader(input);
    check_header(&mut rdr, source, &["p", "density"], &[])?;
    let mut p = Vec::new();
    let mut d = Vec::new();
    for (line, rec) in records(&mut rdr, source, 2)? {
        p.push(number(&rec, 0, "p", source, line)?);
        d.push(number(&rec, 1, "density", source, line)?);
    }
    NullDensity::tabulated(p, d).map_err(|e| Error::parse(source, 0, e.to_string()))
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out)
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn csv_write(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv write failed: {other:?}")),
    }
}

pub fn write_nodes<W: Write>(out: W, nodes: &NodeTable) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["vertex_id", "lat", "lon"])
        .map_err(csv_write)?;
    for (id, p) in nodes.ids.iter().zip(&nodes.points) {
        w.write_record([id.clone(), p.lat.to_string(), p.lon.to_string()])
            .map_err(csv_write)?;
    }
    flush(w)
}

pub fn write_edges<W: Write>(out: W, ids: &[String], edges: &[(usize, usize)]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["src", "dst"]).map_err(csv_write)?;
    for &(a, b) in edges {
        w.write_record([&ids[a], &ids[b]]).map_err(csv_write)?;
    }
    flush(w)
}

pub fn write_observations<W: Write>(
    out: W,
    rows: &[ObservationRow],
    theta: Option<&[u8]>,
) -> Result<()> {
    let mut w = writer(out);
    if theta.is_some() {
        w.write_record(["vertex_id", "time", "p_value", "theta"])
            .map_err(csv_write)?;
    } else {
        w.write_record(["vertex_id", "time", "p_value"])
            .map_err(csv_write)?;
    }
    for (m, r) in rows.iter().enumerate() {
        let mut rec = vec![
            r.vertex_id.clone(),
            r.raw_time.to_string(),
            r.p_value.to_string(),
        ];
        if let Some(th) = theta {
            rec.push(th[m].to_string());
        }
        w.write_record(&rec).map_err(csv_write)?;
    }
    flush(w)
}

/// `vertex_id,time,p_value,lfdr,decision`.
pub fn write_decisions<W: Write>(
    out: W,
    rows: &[ObservationRow],
    lfdr: &[f64],
    decisions: &[u8],
) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["vertex_id", "time", "p_value", "lfdr", "decision"])
        .map_err(csv_write)?;
    for ((r, l), d) in rows.iter().zip(lfdr).zip(decisions) {
        w.write_record([
            r.vertex_id.clone(),
            r.raw_time.to_string(),
            r.p_value.to_string(),
            l.to_string(),
            d.to_string(),
        ])
        .map_err(csv_write)?;
    }
    flush(w)
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

/// `k1,k2,m,log_likelihood,bic,converged,iterations`; failed cells leave the
/// likelihood and BIC empty.
pub fn write_bic_table<W: Write>(out: W, table: &[BicRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record([
        "k1",
        "k2",
        "m",
        "log_likelihood",
        "bic",
        "converged",
        "iterations",
    ])
    .map_err(csv_write)?;
    for r in table {
        w.write_record([
            r.k1.to_string(),
            r.k2.to_string(),
            r.m.to_string(),
            opt(r.log_likelihood),
            opt(r.bic),
            r.converged.to_string(),
            r.iterations.to_string(),
        ])
        .map_err(csv_write)?;
    }
    flush(w)
}

/// `alpha,method,mean_fdr,se_fdr,mean_power,se_power,trials_used`.
pub fn write_benchmark<W: Write>(out: W, rows: &[BenchmarkRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record([
        "alpha",
        "method",
        "mean_fdr",
        "se_fdr",
        "mean_power",
        "se_power",
        "trials_used",
    ])
    .map_err(csv_write)?;
    for r in rows {
        w.write_record([
            r.alpha.to_string(),
            r.method.to_string(),
            r.mean_fdr.to_string(),
            r.se_fdr.to_string(),
            r.mean_power.to_string(),
            r.se_power.to_string(),
            r.trials_used.to_string(),
        ])
        .map_err(csv_write)?;
    }
    flush(w)
}

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_benchmark(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}
