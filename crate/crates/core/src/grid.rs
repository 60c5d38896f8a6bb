//! Gridded time-series data model and its on-disk formats.
//!
//! Two storage formats share one JSON sidecar (`<data path>.json`):
//!
//! * `flatbin`: raw little-endian `f32`, time-major (all nodes of t=0, then t=1, ...).
//!   The data file must be exactly `4·T·N` bytes.
//! * `csv`: header `t,node0,node1,...` followed by one row per sample.
//!
//! Values are held as `f64` in memory, stored node-major so that each node's
//! series is a contiguous slice.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::NodeField;
use crate::error::{Error, Result};

pub const FLATBIN_TAG: &str = "flatbin-f32-le";
pub const CSV_TAG: &str = "csv";

/// Geographic metadata of one grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub lat: f64,
    pub lon: f64,
    #[serde(skip)]
    pub index: usize,
}

impl NodeMeta {
    pub fn new(lat: f64, lon: f64, index: usize) -> Self {
        NodeMeta { lat, lon, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridFormat {
    Flatbin,
    Csv,
}

impl FromStr for GridFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flatbin" => Ok(GridFormat::Flatbin),
            "csv" => Ok(GridFormat::Csv),
            other => Err(Error::Config(format!("unknown grid format '{other}'"))),
        }
    }
}

/// A T×N matrix of samples with per-node coordinates and a calendar period.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesGrid {
    values: Vec<f64>,
    len: usize,
    nodes: Vec<NodeMeta>,
    time_start: usize,
    period: usize,
    label: String,
}

impl TimeSeriesGrid {
    /// Builds a grid from node-major series (`series[i]` is node i over time).
    pub fn from_series(
        series: Vec<Vec<f64>>,
        nodes: Vec<NodeMeta>,
        time_start: usize,
        period: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        let len = series.first().map_or(0, Vec::len);
        if let Some(bad) = series.iter().position(|s| s.len() != len) {
            return Err(Error::Consistency(format!(
                "node {bad} has {} samples, expected {len}",
                series[bad].len()
            )));
        }
        let values = series.into_iter().flatten().collect();
        Self::from_node_major(values, len, nodes, time_start, period, label)
    }

    /// Builds a grid from a flat node-major buffer of `len · nodes.len()` values.
    pub fn from_node_major(
        values: Vec<f64>,
        len: usize,
        mut nodes: Vec<NodeMeta>,
        time_start: usize,
        period: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        for (k, node) in nodes.iter_mut().enumerate() {
            node.index = k;
        }
        let grid = TimeSeriesGrid {
            values,
            len,
            nodes,
            time_start,
            period,
            label: label.into(),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Checks every grid invariant.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        if self.values.len() != n * self.len {
            return Err(Error::Consistency(format!(
                "{} values for {n} nodes of length {}",
                self.values.len(),
                self.len
            )));
        }
        if n < 2 {
            return Err(Error::InsufficientData(format!("grid has {n} nodes, need at least 2")));
        }
        if self.period == 0 {
            return Err(Error::Consistency("period must be positive".into()));
        }
        if self.time_start == 0 || self.time_start > self.period {
            return Err(Error::Consistency(format!(
                "time_start {} outside 1..={}",
                self.time_start, self.period
            )));
        }
        if self.len < 2 * self.period {
            return Err(Error::InsufficientData(format!(
                "T = {} is shorter than two periods of {}",
                self.len, self.period
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for node in &self.nodes {
            if !(-90.0..=90.0).contains(&node.lat) || !(0.0..360.0).contains(&node.lon) {
                return Err(Error::Consistency(format!(
                    "node {} has coordinates ({}, {}) outside lat [-90, 90] / lon [0, 360)",
                    node.index, node.lat, node.lon
                )));
            }
            if !seen.insert((node.lat.to_bits(), node.lon.to_bits())) {
                return Err(Error::Consistency(format!(
                    "duplicate coordinates ({}, {}) at node {}",
                    node.lat, node.lon, node.index
                )));
            }
        }
        for (i, s) in self.values.chunks(self.len.max(1)).enumerate() {
            if let Some(t) = s.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { t, node: i });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeMeta] {
        &self.nodes
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn time_start(&self) -> usize {
        self.time_start
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn series(&self, node: usize) -> &[f64] {
        &self.values[node * self.len..(node + 1) * self.len]
    }

    /// Node-major view of all values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, t: usize, node: usize) -> f64 {
        self.values[node * self.len + t]
    }

    pub fn iter_series(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.len)
    }

    /// Zero-based calendar phase of sample `t`.
    pub fn phase_of(&self, t: usize) -> usize {
        (self.time_start - 1 + t) % self.period
    }

    /// Same metadata, new values. Used by transforms that keep the shape.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), self.values.len());
        TimeSeriesGrid {
            values,
            len: self.len,
            nodes: self.nodes.clone(),
            time_start: self.time_start,
            period: self.period,
            label: self.label.clone(),
        }
    }

    pub fn set_label(&mut self, label: impl Into<String>) {
        self.label = label.into();
    }
}

/// Removes every node at |lat| = 90. Surviving nodes keep their order.
///
/// A grid made only of pole nodes comes back with zero nodes; such a grid
/// fails [`TimeSeriesGrid::validate`].
pub fn drop_poles(grid: &TimeSeriesGrid) -> TimeSeriesGrid {
    let keep: Vec<usize> = (0..grid.n_nodes())
        .filter(|&i| grid.nodes[i].lat.abs() != 90.0)
        .collect();
    let mut values = Vec::with_capacity(keep.len() * grid.len);
    let mut nodes = Vec::with_capacity(keep.len());
    for (k, &i) in keep.iter().enumerate() {
        values.extend_from_slice(grid.series(i));
        nodes.push(NodeMeta { index: k, ..grid.nodes[i] });
    }
    TimeSeriesGrid {
        values,
        len: grid.len,
        nodes,
        time_start: grid.time_start,
        period: grid.period,
        label: grid.label.clone(),
    }
}

/// Stacks `b` after `a` along time.
pub fn concat_time(a: &TimeSeriesGrid, b: &TimeSeriesGrid) -> Result<TimeSeriesGrid> {
    if a.n_nodes() != b.n_nodes()
        || a
            .nodes
            .iter()
            .zip(&b.nodes)
            .any(|(x, y)| x.lat != y.lat || x.lon != y.lon)
    {
        return Err(Error::Consistency("node lists differ between grids".into()));
    }
    if a.period != b.period {
        return Err(Error::Consistency(format!(
            "periods differ: {} vs {}",
            a.period, b.period
        )));
    }
    let expected = a.phase_of(a.len) + 1;
    if b.time_start != expected {
        return Err(Error::Sequencing(format!(
            "second grid starts at phase {}, expected {expected}",
            b.time_start
        )));
    }
    let len = a.len + b.len;
    let mut values = Vec::with_capacity(len * a.n_nodes());
    for i in 0..a.n_nodes() {
        values.extend_from_slice(a.series(i));
        values.extend_from_slice(b.series(i));
    }
    Ok(TimeSeriesGrid {
        values,
        len,
        nodes: a.nodes.clone(),
        time_start: a.time_start,
        period: a.period,
        label: a.label.clone(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct Sidecar {
    pub format: String,
    #[serde(rename = "T")]
    pub len: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub period: usize,
    pub time_start: usize,
    pub label: String,
    pub nodes: Vec<NodeMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

/// Path of the JSON sidecar belonging to a data file.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&side, e.to_string()))
}

/// Reads only the node list from a grid's sidecar.
pub fn load_nodes(path: &Path) -> Result<Vec<NodeMeta>> {
    let mut nodes = read_sidecar(path)?.nodes;
    for (k, node) in nodes.iter_mut().enumerate() {
        node.index = k;
    }
    Ok(nodes)
}

pub fn load_grid(path: &Path, format: GridFormat) -> Result<TimeSeriesGrid> {
    let side = read_sidecar(path)?;
    let (len, n) = (side.len, side.n);
    let expected_tag = match format {
        GridFormat::Flatbin => FLATBIN_TAG,
        GridFormat::Csv => CSV_TAG,
    };
    if side.format != expected_tag {
        return Err(Error::format(
            sidecar_path(path),
            format!("sidecar declares format '{}', expected '{expected_tag}'", side.format),
        ));
    }
    if side.nodes.len() != n {
        return Err(Error::Consistency(format!(
            "sidecar lists {} nodes but N = {n}",
            side.nodes.len()
        )));
    }
    let mut values = vec![0.0f64; len * n];
    match format {
        GridFormat::Flatbin => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            if bytes.len() != 4 * len * n {
                return Err(Error::Consistency(format!(
                    "data file holds {} bytes, expected 4·T·N = {}",
                    bytes.len(),
                    4 * len * n
                )));
            }
            for (k, chunk) in bytes.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                let (t, node) = (k / n, k % n);
                values[node * len + t] = f64::from(v);
            }
        }
        GridFormat::Csv => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut lines = text.lines();
            let header = lines.next().ok_or_else(|| Error::format(path, "empty file"))?;
            let cols: Vec<&str> = header.split(',').collect();
            if cols.first() != Some(&"t") || cols.len() != n + 1 {
                return Err(Error::format(
                    path,
                    format!("header must be 't' plus {n} node columns"),
                ));
            }
            let mut rows = 0;
            for (t, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
                if t >= len {
                    return Err(Error::Consistency(format!("more than T = {len} rows")));
                }
                let mut fields = line.split(',');
                fields.next();
                let mut count = 0;
                for (node, field) in fields.enumerate() {
                    if node >= n {
                        return Err(Error::format(path, format!("row {t} has too many columns")));
                    }
                    values[node * len + t] = field.trim().parse::<f64>().map_err(|_| {
                        Error::format(path, format!("row {t}, column {node}: '{field}'"))
                    })?;
                    count += 1;
                }
                if count != n {
                    return Err(Error::format(path, format!("row {t} has {count} values, expected {n}")));
                }
                rows += 1;
            }
            if rows != len {
                return Err(Error::Consistency(format!("{rows} rows but T = {len}")));
            }
        }
    }
    for node in 0..n {
        if let Some(t) = values[node * len..(node + 1) * len]
            .iter()
            .position(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { t, node });
        }
    }
    TimeSeriesGrid::from_node_major(values, len, side.nodes, side.time_start, side.period, side.label)
}

pub fn save_grid(grid: &TimeSeriesGrid, path: &Path, format: GridFormat) -> Result<()> {
    save_grid_with_provenance(grid, path, format, None)
}

/// Writes a grid and its sidecar; `provenance` is stored verbatim in the sidecar.
pub fn save_grid_with_provenance(
    grid: &TimeSeriesGrid,
    path: &Path,
    format: GridFormat,
    provenance: Option<serde_json::Value>,
) -> Result<()> {
    let (len, n) = (grid.len, grid.n_nodes());
    let side = Sidecar {
        format: match format {
            GridFormat::Flatbin => FLATBIN_TAG,
            GridFormat::Csv => CSV_TAG,
        }
        .to_string(),
        len,
        n,
        period: grid.period,
        time_start: grid.time_start,
        label: grid.label.clone(),
        nodes: grid.nodes.clone(),
        provenance,
    };
    match format {
        GridFormat::Flatbin => {
            let mut bytes = Vec::with_capacity(4 * len * n);
            for t in 0..len {
                for node in 0..n {
                    bytes.extend_from_slice(&(grid.value(t, node) as f32).to_le_bytes());
                }
            }
            fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        }
        GridFormat::Csv => {
            let mut out = String::from("t");
            for node in 0..n {
                write!(out, ",node{node}").unwrap();
            }
            out.push('\n');
            for t in 0..len {
                write!(out, "{t}").unwrap();
                for node in 0..n {
                    write!(out, ",{}", grid.value(t, node)).unwrap();
                }
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| Error::io(path, e))?;
        }
    }
    let side_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&side)?;
    fs::write(&side_path, json).map_err(|e| Error::io(&side_path, e))
}

/// Formats a value with 9 significant digits, trailing zeros trimmed (C's `%.9g`).
pub fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        return format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes a field as `lat,lon,value` CSV; undefined entries get an empty value cell.
pub fn save_field(field: &NodeField, path: &Path) -> Result<()> {
    let mut out = String::from("lat,lon,value\n");
    for (node, value) in field.nodes().iter().zip(field.values()) {
        let cell = value.map(format_sig9).unwrap_or_default();
        writeln!(out, "{},{},{cell}", format_sig9(node.lat), format_sig9(node.lon)).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a field CSV back as `(nodes, values)`.
pub fn load_field(path: &Path) -> Result<(Vec<NodeMeta>, Vec<Option<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some("lat,lon,value") {
        return Err(Error::format(path, "header must be 'lat,lon,value'"));
    }
    let mut nodes = Vec::new();
    let mut values = Vec::new();
    for (k, line) in lines.filter(|l| !l.is_empty()).enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 3 {
            return Err(Error::format(path, format!("row {k} has {} cells", cells.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::format(path, format!("row {k}: bad number '{s}'")))
        };
        nodes.push(NodeMeta::new(num(cells[0])?, num(cells[1])?, k));
        values.push(if cells[2].is_empty() { None } else { Some(num(cells[2])?) });
    }
    Ok((nodes, values))
}

/// Regular lat/lon mesh with the given spacing, rows ordered north to south.
pub fn regular_mesh(step: f64) -> Vec<NodeMeta> {
    let rows = (180.0 / step).round() as usize + 1;
    let cols = (360.0 / step).round() as usize;
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(NodeMeta::new(90.0 - r as f64 * step, c as f64 * step, nodes.len()));
        }
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> TimeSeriesGrid {
        let nodes = vec![
            NodeMeta::new(90.0, 0.0, 0),
            NodeMeta::new(10.0, 20.0, 1),
            NodeMeta::new(-90.0, 0.0, 2),
            NodeMeta::new(-10.0, 357.5, 3),
        ];
        let series = (0..4)
            .map(|i| (0..24).map(|t| (i * 100 + t) as f64 * 0.25).collect())
            .collect();
        TimeSeriesGrid::from_series(series, nodes, 1, 12, "test").unwrap()
    }

    #[test]
    fn mesh_without_poles_has_10224_nodes() {
        let nodes = regular_mesh(2.5);
        assert_eq!(nodes.len(), 73 * 144);
        let grid = TimeSeriesGrid::from_node_major(vec![0.0; 24 * nodes.len()], 24, nodes, 1, 12, "mesh")
            .unwrap();
        let dropped = drop_poles(&grid);
        assert_eq!(grid.n_nodes() - dropped.n_nodes(), 288);
        assert_eq!(dropped.n_nodes(), 10224);
    }

    #[test]
    fn drop_poles_keeps_order_and_length() {
        let g = small_grid();
        let d = drop_poles(&g);
        assert_eq!(d.n_nodes(), 2);
        assert_eq!(d.len(), g.len());
        assert_eq!(d.series(0), g.series(1));
        assert_eq!(d.series(1), g.series(3));
        assert_eq!(d.nodes()[1].index, 1);

        let d2 = drop_poles(&d);
        assert_eq!(d2, d);
    }

    #[test]
    fn pole_only_grid_fails_validation() {
        let nodes = vec![NodeMeta::new(90.0, 0.0, 0), NodeMeta::new(-90.0, 0.0, 1)];
        let g = TimeSeriesGrid::from_series(vec![vec![1.0; 24], vec![2.0; 24]], nodes, 1, 12, "").unwrap();
        let d = drop_poles(&g);
        assert_eq!(d.n_nodes(), 0);
        assert!(matches!(d.validate(), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn concat_checks() {
        let g = small_grid();
        let mut second = g.clone();
        // 24 samples starting January end in December, so the successor is January.
        let joined = concat_time(&g, &second).unwrap();
        assert_eq!(joined.len(), 48);
        assert_eq!(&joined.series(2)[..24], g.series(2));

        second = TimeSeriesGrid::from_node_major(second.values().to_vec(), 24, second.nodes().to_vec(), 12, 12, "")
            .unwrap();
        assert!(matches!(concat_time(&g, &second), Err(Error::Sequencing(_))));

        let mut nodes = g.nodes().to_vec();
        nodes[1].lon = 25.0;
        let moved = TimeSeriesGrid::from_node_major(g.values().to_vec(), 24, nodes, 1, 12, "").unwrap();
        assert!(matches!(concat_time(&g, &moved), Err(Error::Consistency(_))));
    }

    #[test]
    fn concat_of_consecutive_years() {
        let nodes = vec![NodeMeta::new(0.0, 0.0, 0), NodeMeta::new(0.0, 2.5, 1)];
        let year = |off: f64| {
            TimeSeriesGrid {
                values: (0..24).map(|k| k as f64 + off).collect(),
                len: 12,
                nodes: nodes.clone(),
                time_start: 1,
                period: 12,
                label: String::new(),
            }
        };
        let joined = concat_time(&year(0.0), &year(100.0)).unwrap();
        assert_eq!(joined.len(), 24);
        assert_eq!(joined.time_start(), 1);
        assert_eq!(joined.value(12, 0), 100.0);
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.5), "1.5");
        assert_eq!(format_sig9(-87.5), "-87.5");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1.234e-7), "1.234e-07");
        assert_eq!(format_sig9(2.5e12), "2.5e+12");
    }

    #[test]
    fn csv_rejects_nan_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        save_grid(&small_grid(), &path, GridFormat::Csv).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        let mut cells: Vec<String> = lines[6].split(',').map(String::from).collect();
        cells[4] = "NaN".into();
        lines[6] = cells.join(",");
        fs::write(&path, lines.join("\n")).unwrap();
        match load_grid(&path, GridFormat::Csv) {
            Err(Error::NonFinite { t, node }) => assert_eq!((t, node), (5, 3)),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn flatbin_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        save_grid(&small_grid(), &path, GridFormat::Flatbin).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_grid(&path, GridFormat::Flatbin), Err(Error::Consistency(_))));
    }

    #[test]
    fn malformed_sidecar_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        save_grid(&small_grid(), &path, GridFormat::Flatbin).unwrap();
        fs::write(sidecar_path(&path), "{\"format\": 3}").unwrap();
        assert!(matches!(load_grid(&path, GridFormat::Flatbin), Err(Error::Format { .. })));
    }
}
