//! Scenario documents, the figure-reproduction runners and their outputs.
//!
//! A scenario is a strict JSON document (unknown keys are rejected) in SI
//! units. Powers may instead be given in dBm through the explicitly suffixed
//! keys `power_dbm` and `noise_psd_dbm_hz`; loading converts them to watts, so
//! the echoed scenario always carries `transmit_power` / `noise_psd`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::channel::{nearfield_los, wideband as wideband_channel, ChannelVector};
use crate::error::{Error, Result, ScenarioErrorKind};
use crate::geometry::{build_upa, ArrayGeometry, Carrier, Plane, Vec3};
use crate::metrics::{
    dbm_to_watts, field_scan, focal_drift, misfocus_loss_db, sinr, spectral_efficiency, stream_sinr,
    FieldScan, LinkBudget, ScanSpec, SearchAxis,
};
use crate::precoding::{
    conjugate_focus, frequency_flat_focus, steer, steer_multiuser, sum_rate_precoder,
    OptimizerConfig, Precoder,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub length: f64,
    pub width: f64,
    /// Element pitch in wavelengths.
    pub spacing: f64,
    #[serde(default)]
    pub center: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmit_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_psd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_psd_dbm_hz: Option<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Focus,
    Steer,
    #[serde(alias = "sum-rate", alias = "sum_rate")]
    Sumrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn with(self, p: Vec3, value: f64) -> Vec3 {
        match self {
            Axis::X => Vec3::new(value, p.y, p.z),
            Axis::Y => Vec3::new(p.x, value, p.z),
            Axis::Z => Vec3::new(p.x, p.y, value),
        }
    }

    fn of(self, p: Vec3) -> f64 {
        match self {
            Axis::X => p.x,
            Axis::Y => p.y,
            Axis::Z => p.z,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: Axis,
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidebandSpec {
    pub bandwidth: f64,
    pub n_subcarriers: usize,
    /// Depth range searched for each subcarrier's focus, meters along the
    /// direction of the design point. Defaults to half to twice its range.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        let d = OptimizerConfig::default();
        OptimizerSpec {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
        }
    }
}

/// Full experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(alias = "carrier_frequency_hz")]
    pub carrier_frequency: f64,
    pub array: ArraySpec,
    pub users: Vec<Vec3>,
    pub link: LinkSpec,
    pub design: Design,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wideband: Option<WidebandSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerSpec>,
}

const BUNDLED: [(&str, &str); 4] = [
    ("paper_fig3", include_str!("../scenarios/paper_fig3.json")),
    ("paper_fig4", include_str!("../scenarios/paper_fig4.json")),
    ("paper_fig5", include_str!("../scenarios/paper_fig5.json")),
    ("paper_beamsplit", include_str!("../scenarios/paper_beamsplit.json")),
];

/// Text of a bundled scenario, by name with or without `.json`.
pub fn bundled_scenario(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".json").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, doc)| *doc)
}

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

fn scenario_error(kind: ScenarioErrorKind, path: &str, message: impl Into<String>) -> Error {
    Error::Scenario {
        kind,
        path: path.to_string(),
        message: message.into(),
    }
}

fn parse_document(document: &str) -> Result<Value> {
    if document.trim().is_empty() {
        return Ok(Value::Object(Default::default()));
    }
    serde_json::from_str(document)
        .map_err(|e| scenario_error(ScenarioErrorKind::Malformed, ".", e.to_string()))
}

fn field_in_backticks(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn join_path(parent: &str, child: &str) -> String {
    if parent.is_empty() || parent == "." {
        child.to_string()
    } else {
        format!("{parent}.{child}")
    }
}

fn decode(value: Value) -> Result<Scenario> {
    serde_path_to_error::deserialize::<_, Scenario>(value).map_err(|err| {
        let path = err.path().to_string();
        let message = err.inner().to_string();
        if message.starts_with("missing field") {
            let key = field_in_backticks(&message).unwrap_or("?");
            scenario_error(ScenarioErrorKind::MissingKey, &join_path(&path, key), message)
        } else if message.starts_with("unknown field") {
            let key = field_in_backticks(&message).unwrap_or("?");
            let full = if path.ends_with(key) {
                path.clone()
            } else {
                join_path(&path, key)
            };
            scenario_error(ScenarioErrorKind::UnknownKey, &full, message)
        } else {
            scenario_error(ScenarioErrorKind::Malformed, &path, message)
        }
    })
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<Scenario> {
    let value = parse_document(document)?;
    let mut scenario = decode(value)?;
    scenario.normalize_and_validate()?;
    Ok(scenario)
}

/// Applies `key.path=value` overrides onto a document before it is loaded.
///
/// Values are parsed as JSON, falling back to a plain string, so
/// `design=steer` and `sweep.points=40` both work. Array elements are
/// addressed by index (`users.1`).
pub fn apply_overrides(document: &str, overrides: &[(String, String)]) -> Result<String> {
    let mut root = parse_document(document)?;
    for (key, raw) in overrides {
        let value: Value =
            serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        let key = match key.as_str() {
            "carrier_frequency_hz" => "carrier_frequency",
            k => k,
        };
        set_path(&mut root, key, value)?;
    }
    Ok(serde_json::to_string(&root)?)
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(scenario_error(
            ScenarioErrorKind::Malformed,
            key,
            "override key has an empty segment",
        ));
    }
    let mut node = root;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = part.parse().map_err(|_| {
                    scenario_error(ScenarioErrorKind::UnknownKey, key, "expected an array index")
                })?;
                let len = items.len();
                let slot = items.get_mut(idx).ok_or_else(|| {
                    scenario_error(
                        ScenarioErrorKind::OutOfRange,
                        key,
                        format!("index {idx} out of range for {len} entries"),
                    )
                })?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => {
                return Err(scenario_error(
                    ScenarioErrorKind::UnknownKey,
                    key,
                    "cannot descend into a scalar",
                ))
            }
        };
    }
    Ok(())
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::range(path, format!("must be positive, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::range(path, format!("must be non-negative, got {v}")))
    }
}

fn one_of(
    path_a: &str,
    a: Option<f64>,
    path_b: &str,
    b: Option<f64>,
) -> Result<(bool, f64)> {
    match (a, b) {
        (Some(v), None) => Ok((true, v)),
        (None, Some(v)) => Ok((false, v)),
        (None, None) => Err(scenario_error(
            ScenarioErrorKind::MissingKey,
            path_a,
            format!("one of `{path_a}` or `{path_b}` is required"),
        )),
        (Some(_), Some(_)) => Err(scenario_error(
            ScenarioErrorKind::Malformed,
            path_a,
            format!("`{path_a}` and `{path_b}` are mutually exclusive"),
        )),
    }
}

impl Scenario {
    /// Converts dBm keys to watts and checks every range constraint.
    fn normalize_and_validate(&mut self) -> Result<()> {
        positive("carrier_frequency", self.carrier_frequency)?;
        non_negative("array.length", self.array.length)?;
        non_negative("array.width", self.array.width)?;
        positive("array.spacing", self.array.spacing)?;
        if !self.array.center.is_finite() {
            return Err(Error::range("array.center", "must be finite"));
        }
        if self.users.is_empty() {
            return Err(Error::range("users", "at least one user is required"));
        }
        for (i, u) in self.users.iter().enumerate() {
            if !u.is_finite() {
                return Err(Error::range(format!("users.{i}"), "must be finite"));
            }
        }

        let link = &mut self.link;
        let (watts, p) = one_of(
            "link.transmit_power",
            link.transmit_power,
            "link.power_dbm",
            link.power_dbm,
        )?;
        let transmit_power = if watts {
            non_negative("link.transmit_power", p)?;
            p
        } else {
            if !p.is_finite() {
                return Err(Error::range("link.power_dbm", "must be finite"));
            }
            dbm_to_watts(p)
        };
        let (watts, n) = one_of(
            "link.noise_psd",
            link.noise_psd,
            "link.noise_psd_dbm_hz",
            link.noise_psd_dbm_hz,
        )?;
        let noise_psd = if watts {
            positive("link.noise_psd", n)?;
            n
        } else {
            if !n.is_finite() {
                return Err(Error::range("link.noise_psd_dbm_hz", "must be finite"));
            }
            dbm_to_watts(n)
        };
        positive("link.bandwidth", link.bandwidth)?;
        *link = LinkSpec {
            transmit_power: Some(transmit_power),
            power_dbm: None,
            noise_psd: Some(noise_psd),
            noise_psd_dbm_hz: None,
            bandwidth: link.bandwidth,
        };

        if let Some(s) = &self.sweep {
            if !(s.start.is_finite() && s.stop.is_finite()) {
                return Err(Error::range("sweep.start", "must be finite"));
            }
            if s.start >= s.stop {
                return Err(Error::range("sweep.stop", "must exceed sweep.start"));
            }
            if s.points < 2 {
                return Err(Error::range("sweep.points", "at least 2 points are required"));
            }
        }
        if let Some(s) = &self.scan {
            if s.resolution.iter().any(|&n| n < 2) {
                return Err(Error::range("scan.resolution", "at least 2 samples per axis"));
            }
            if s.ranges.iter().any(|r| !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1])) {
                return Err(Error::range("scan.ranges", "ranges must be finite and increasing"));
            }
            if !s.level.is_finite() {
                return Err(Error::range("scan.level", "must be finite"));
            }
        }
        if let Some(w) = &self.wideband {
            non_negative("wideband.bandwidth", w.bandwidth)?;
            if w.n_subcarriers == 0 {
                return Err(Error::range("wideband.n_subcarriers", "must be at least 1"));
            }
            if w.bandwidth / 2.0 >= self.carrier_frequency {
                return Err(Error::range(
                    "wideband.bandwidth",
                    "band reaches non-positive frequencies",
                ));
            }
            if let Some([a, b]) = w.search {
                if !(a.is_finite() && b.is_finite() && a > 0.0 && a < b) {
                    return Err(Error::range(
                        "wideband.search",
                        "search range must be positive and increasing",
                    ));
                }
            }
        }
        if let Some(o) = &self.optimizer {
            non_negative("optimizer.tolerance", o.tolerance)?;
            if o.max_iterations == 0 {
                return Err(Error::range("optimizer.max_iterations", "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn carrier(&self) -> Result<Carrier> {
        Carrier::new(self.carrier_frequency)
    }

    pub fn build_array(&self) -> Result<ArrayGeometry> {
        build_upa(
            self.array.length,
            self.array.width,
            self.array.spacing,
            self.carrier()?,
            self.array.center,
        )
    }

    pub fn link_budget(&self) -> Result<LinkBudget> {
        LinkBudget::new(
            self.link.transmit_power.unwrap_or(0.0),
            self.link.noise_psd.unwrap_or(0.0),
            self.link.bandwidth,
        )
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        let o = self.optimizer.unwrap_or_default();
        OptimizerConfig {
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub runner: String,
    pub version: String,
    pub timestamp: String,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "serde_json::Map::is_empty")]
    pub summary: serde_json::Map<String, Value>,
}

impl Metadata {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metadata serializes")
    }

    fn new(runner: &str, scenario: &Scenario) -> Self {
        Metadata {
            runner: runner.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            scenario: scenario.clone(),
            summary: Default::default(),
        }
    }
}

/// Named numeric columns plus the metadata needed to reproduce them.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub metadata: Metadata,
}

impl ResultTable {
    fn new(columns: &[&str], rows: Vec<Vec<f64>>, metadata: Metadata) -> Self {
        let columns: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
        debug_assert!(rows.iter().all(|r| r.len() == columns.len()));
        ResultTable {
            columns,
            rows,
            metadata,
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// RFC 4180 CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push_str("\r\n");
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
            out.push_str(&line.join(","));
            out.push_str("\r\n");
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        self.metadata.to_json()
    }

    /// Writes `<basename>.csv` and `<basename>.json` into `dir`.
    pub fn write(&self, dir: &Path, basename: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("{basename}.csv"));
        let meta = dir.join(format!("{basename}.json"));
        fs::write(&csv, self.to_csv())?;
        fs::write(&meta, self.metadata_json())?;
        Ok(vec![csv, meta])
    }
}

fn format_number(v: f64) -> String {
    if v == 0.0 || (1e-4..1e9).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Dense CSV grid of a scan: two header lines (axis ranges, resolution) and
/// then one line per second-axis sample holding the normalized values.
pub fn field_scan_csv(scan: &FieldScan) -> String {
    let (a, b, _) = scan.spec.plane.axis_names();
    let [[a0, a1], [b0, b1]] = scan.spec.ranges;
    let [n0, n1] = scan.spec.resolution;
    let mut out = String::new();
    let _ = write!(
        out,
        "axes,{a},{},{},{b},{},{}\r\nresolution,{n0},{n1}\r\n",
        format_number(a0),
        format_number(a1),
        format_number(b0),
        format_number(b1)
    );
    for row in scan.normalized.chunks(n0) {
        let line: Vec<String> = row.iter().map(|v| format_number(*v)).collect();
        out.push_str(&line.join(","));
        out.push_str("\r\n");
    }
    out
}

/// Parses the grid written by [`field_scan_csv`] back into
/// `(ranges, resolution, normalized values)`.
pub fn parse_field_scan_csv(text: &str) -> Result<([[f64; 2]; 2], [usize; 2], Vec<f64>)> {
    let bad = |m: &str| Error::invalid(format!("field scan csv: {m}"));
    let mut lines = text.lines();
    let axes: Vec<&str> = lines.next().ok_or_else(|| bad("missing axes line"))?.split(',').collect();
    if axes.len() != 7 || axes[0] != "axes" {
        return Err(bad("malformed axes line"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    let ranges = [[num(axes[2])?, num(axes[3])?], [num(axes[5])?, num(axes[6])?]];
    let res: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing resolution line"))?
        .split(',')
        .collect();
    if res.len() != 3 || res[0] != "resolution" {
        return Err(bad("malformed resolution line"));
    }
    let count = |s: &str| s.parse::<usize>().map_err(|_| bad("bad count"));
    let resolution = [count(res[1])?, count(res[2])?];
    let mut values = Vec::with_capacity(resolution[0] * resolution[1]);
    for line in lines.filter(|l| !l.is_empty()) {
        let row = line.split(',').map(num).collect::<Result<Vec<f64>>>()?;
        if row.len() != resolution[0] {
            return Err(bad("row width does not match resolution"));
        }
        values.extend(row);
    }
    if values.len() != resolution[0] * resolution[1] {
        return Err(bad("row count does not match resolution"));
    }
    Ok((ranges, resolution, values))
}

/// Default Fig. 3 sweep: z from 1 m to 60 m, 120 points.
pub const FIG3_SWEEP: SweepSpec = SweepSpec {
    axis: Axis::Z,
    start: 1.0,
    stop: 60.0,
    points: 120,
};

/// Default Fig. 4 sweep: z from 1 m to 40 m, 80 points.
pub const FIG4_SWEEP: SweepSpec = SweepSpec {
    axis: Axis::Z,
    start: 1.0,
    stop: 40.0,
    points: 80,
};

/// Default Fig. 5 scan: xz-plane, x in [-10, 10] m, z in [1, 30] m.
pub const FIG5_SCAN: ScanSpec = ScanSpec {
    plane: Plane::Xz,
    ranges: [[-10.0, 10.0], [1.0, 30.0]],
    resolution: [201, 291],
    level: 0.0,
};

/// Evenly spaced sweep coordinates with every user's own coordinate inserted,
/// so focal points are always sampled exactly.
pub fn sweep_grid(sweep: &SweepSpec, users: &[Vec3]) -> Vec<f64> {
    let n = sweep.points;
    let step = (sweep.stop - sweep.start) / (n - 1) as f64;
    let mut grid: Vec<f64> = (0..n)
        .map(|i| {
            if i + 1 == n {
                sweep.stop
            } else {
                sweep.start + step * i as f64
            }
        })
        .collect();
    for u in users {
        let c = sweep.axis.of(*u);
        if c >= sweep.start && c <= sweep.stop && !grid.contains(&c) {
            grid.push(c);
        }
    }
    grid.sort_by(f64::total_cmp);
    grid
}

fn se_of(channel: &ChannelVector, precoder: &Precoder, user: usize, noise: f64) -> Result<f64> {
    Ok(spectral_efficiency(stream_sinr(channel, precoder, user, noise)?))
}

fn unit_direction(from: Vec3, to: Vec3) -> Result<(Vec3, f64)> {
    let d = to - from;
    let r = d.norm();
    if r == 0.0 {
        return Err(Error::ShapeMismatch("user sits at the array center".into()));
    }
    Ok((d * (1.0 / r), r))
}

/// Focused (near-field) design for the scenario's users.
fn focused_design(
    scenario: &Scenario,
    array: &ArrayGeometry,
    budget: &LinkBudget,
) -> Result<Precoder> {
    let f = scenario.carrier_frequency;
    let power = budget.transmit_power();
    let k = scenario.users.len();
    if power == 0.0 {
        return Ok(Precoder::zeros(array.len(), k));
    }
    let channels = scenario
        .users
        .iter()
        .map(|u| nearfield_los(array, *u, f))
        .collect::<Result<Vec<_>>>()?;
    match scenario.design {
        Design::Sumrate => Ok(sum_rate_precoder(
            &channels,
            power,
            budget.noise_power(),
            scenario.optimizer_config(),
        )?
        .0),
        Design::Focus => {
            let share = power / k as f64;
            let mut columns = Vec::with_capacity(k);
            for h in &channels {
                columns.push(conjugate_focus(h, share)?.columns.remove(0));
            }
            Ok(Precoder {
                columns,
                total_power: power,
            })
        }
        Design::Steer => Err(Error::ShapeMismatch(
            "this runner compares a focused design against steering; \
             set design to `focus` or `sumrate`"
                .into(),
        )),
    }
}

/// Steering baseline: all users' beams point along the shared direction.
fn steered_design(
    scenario: &Scenario,
    array: &ArrayGeometry,
    budget: &LinkBudget,
) -> Result<Precoder> {
    let f = scenario.carrier_frequency;
    let power = budget.transmit_power();
    let k = scenario.users.len();
    if power == 0.0 {
        return Ok(Precoder::zeros(array.len(), k));
    }
    let (direction, range) = unit_direction(array.center(), scenario.users[0])?;
    if k == 1 {
        return steer(array, direction, range, f, power);
    }
    let mut ranges = vec![range];
    for u in &scenario.users[1..] {
        let (d, r) = unit_direction(array.center(), *u)?;
        if (d - direction).norm() > 1e-9 {
            return Err(Error::ShapeMismatch(
                "steering baseline needs all users in one direction".into(),
            ));
        }
        ranges.push(r);
    }
    steer_multiuser(array, direction, &ranges, f, power, budget.noise_power())
}

fn require_users(scenario: &Scenario, n: usize, runner: &str) -> Result<()> {
    if scenario.users.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{runner} needs exactly {n} user(s), scenario has {}",
            scenario.users.len()
        )));
    }
    Ok(())
}

/// Single-user focusing vs. steering along a sweep.
///
/// Both columns are designed once for the scenario's user (the focal point)
/// and held fixed while a receiver moves along the sweep axis.
/// Columns: `z_m, se_focus_bpshz, se_steer_bpshz` (first column named after
/// the sweep axis).
pub fn run_fig3(scenario: &Scenario) -> Result<ResultTable> {
    require_users(scenario, 1, "fig3")?;
    let sweep = scenario.sweep.unwrap_or(FIG3_SWEEP);
    let array = scenario.build_array()?;
    let budget = scenario.link_budget()?;
    let f = scenario.carrier_frequency;
    let focus = focused_design(scenario, &array, &budget)?;
    let steered = steered_design(scenario, &array, &budget)?;
    let user = scenario.users[0];
    let noise = budget.noise_power();

    let grid = sweep_grid(&sweep, &scenario.users);
    let rows = grid
        .par_iter()
        .map(|&t| {
            let h = nearfield_los(&array, sweep.axis.with(user, t), f)?;
            Ok(vec![t, se_of(&h, &focus, 0, noise)?, se_of(&h, &steered, 0, noise)?])
        })
        .collect::<Result<Vec<_>>>()?;

    let first = format!("{}_m", sweep.axis.name());
    let mut meta = Metadata::new("fig3", scenario);
    meta.summary.insert("rows".into(), rows.len().into());
    Ok(ResultTable::new(
        &[&first, "se_focus_bpshz", "se_steer_bpshz"],
        rows,
        meta,
    ))
}

/// Two-user focusing (sum-rate design) vs. steering along a sweep.
///
/// Precoders are designed once for the users' nominal positions. For each
/// sweep coordinate, user k's spectral efficiency is evaluated with user k
/// moved there while every column keeps transmitting.
/// Columns: `z_m, se_user1_focus, se_user2_focus, se_user1_steer, se_user2_steer`.
pub fn run_fig4(scenario: &Scenario) -> Result<ResultTable> {
    require_users(scenario, 2, "fig4")?;
    let sweep = scenario.sweep.unwrap_or(FIG4_SWEEP);
    let array = scenario.build_array()?;
    let budget = scenario.link_budget()?;
    let f = scenario.carrier_frequency;
    let focus = focused_design(scenario, &array, &budget)?;
    let steered = steered_design(scenario, &array, &budget)?;
    let noise = budget.noise_power();
    let users = scenario.users.clone();

    let grid = sweep_grid(&sweep, &users);
    let rows = grid
        .par_iter()
        .map(|&t| {
            let mut row = vec![t];
            let moved: Vec<ChannelVector> = users
                .iter()
                .map(|u| nearfield_los(&array, sweep.axis.with(*u, t), f))
                .collect::<Result<_>>()?;
            for precoder in [&focus, &steered] {
                for (k, h) in moved.iter().enumerate() {
                    row.push(se_of(h, precoder, k, noise)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    let first = format!("{}_m", sweep.axis.name());
    let mut meta = Metadata::new("fig4", scenario);
    let nominal = nominal_rates(&array, &users, f, &focus, &steered, noise)?;
    meta.summary.insert("se_focus_nominal".into(), serde_json::json!(nominal.0));
    meta.summary.insert("se_steer_nominal".into(), serde_json::json!(nominal.1));
    Ok(ResultTable::new(
        &[
            &first,
            "se_user1_focus",
            "se_user2_focus",
            "se_user1_steer",
            "se_user2_steer",
        ],
        rows,
        meta,
    ))
}

/// Per-user spectral efficiency with every user at its nominal position,
/// for the focused and the steered design.
pub fn nominal_rates(
    array: &ArrayGeometry,
    users: &[Vec3],
    frequency: f64,
    focus: &Precoder,
    steered: &Precoder,
    noise: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let channels = users
        .iter()
        .map(|u| nearfield_los(array, *u, frequency))
        .collect::<Result<Vec<_>>>()?;
    let per = |p: &Precoder| -> Result<Vec<f64>> {
        (0..users.len())
            .map(|k| sinr(&channels, p, k, noise).map(spectral_efficiency))
            .collect()
    };
    Ok((per(focus)?, per(steered)?))
}

/// The focused and steered designs a two-user scenario produces.
pub fn fig4_designs(scenario: &Scenario) -> Result<(Precoder, Precoder)> {
    let array = scenario.build_array()?;
    let budget = scenario.link_budget()?;
    Ok((
        focused_design(scenario, &array, &budget)?,
        steered_design(scenario, &array, &budget)?,
    ))
}

/// Normalized field scans of each user's focused column.
pub fn run_fig5(scenario: &Scenario) -> Result<(FieldScan, FieldScan)> {
    require_users(scenario, 2, "fig5")?;
    let spec = scenario.scan.unwrap_or(FIG5_SCAN);
    let array = scenario.build_array()?;
    let budget = scenario.link_budget()?;
    let focus = focused_design(scenario, &array, &budget)?;
    let f = scenario.carrier_frequency;
    let first = field_scan(&array, focus.column(0), &spec, f)?;
    let second = field_scan(&array, focus.column(1), &spec, f)?;
    Ok((first, second))
}

/// Metadata sidecar for a pair of scans.
pub fn fig5_metadata(scenario: &Scenario, scans: &[&FieldScan]) -> Metadata {
    let mut meta = Metadata::new("fig5", scenario);
    for (k, scan) in scans.iter().enumerate() {
        let (i, j) = scan.argmax();
        meta.summary.insert(
            format!("user{}_peak", k + 1),
            serde_json::json!({
                "power_w": scan.value(i, j),
                "first_axis_m": scan.spec.coordinate(0, i),
                "second_axis_m": scan.spec.coordinate(1, j),
            }),
        );
    }
    meta
}

/// Wideband misfocus of frequency-flat focusing weights.
///
/// Columns: `subcarrier_hz, drift_m, power_loss_db_at_design_point`.
/// Drift and loss are invariant to the transmit power, which only has to be
/// positive.
pub fn run_beamsplit(scenario: &Scenario) -> Result<ResultTable> {
    let band = scenario.wideband.ok_or_else(|| {
        Error::ShapeMismatch("beamsplit needs a `wideband` block".into())
    })?;
    if scenario.design != Design::Focus {
        return Err(Error::ShapeMismatch(
            "beamsplit evaluates frequency-flat focusing; set design to `focus`".into(),
        ));
    }
    let array = scenario.build_array()?;
    let budget = scenario.link_budget()?;
    let f = scenario.carrier_frequency;
    let target = scenario.users[0];
    let (direction, range) = unit_direction(array.center(), target)?;

    let center_channel = nearfield_los(&array, target, f)?;
    let flat = frequency_flat_focus(&center_channel, budget.transmit_power())?;
    let wb = wideband_channel(&array, target, f, band.bandwidth, band.n_subcarriers)?;
    let [start, stop] = band.search.unwrap_or([0.5 * range, 2.0 * range]);
    let drift = focal_drift(
        &array,
        &wb,
        flat.column(0),
        SearchAxis {
            direction,
            start,
            stop,
        },
    )?;
    let loss = misfocus_loss_db(&wb, flat.column(0))?;
    let rows: Vec<Vec<f64>> = drift
        .iter()
        .zip(&loss)
        .map(|((f, d), (_, l))| vec![*f, *d, *l])
        .collect();

    let mut meta = Metadata::new("beamsplit", scenario);
    let peak = rows.iter().map(|r| r[1].abs()).fold(0.0, f64::max);
    meta.summary.insert("peak_abs_drift_m".into(), serde_json::json!(peak));
    Ok(ResultTable::new(
        &["subcarrier_hz", "drift_m", "power_loss_db_at_design_point"],
        rows,
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_documents_load() {
        for name in bundled_names() {
            let s = load_scenario(bundled_scenario(name).unwrap()).unwrap();
            assert_eq!(s.carrier_frequency, 28e9);
        }
        assert!(bundled_scenario("paper_fig3.json").is_some());
        assert!(bundled_scenario("nope").is_none());
    }

    #[test]
    fn fig3_document_contents() {
        let s = load_scenario(bundled_scenario("paper_fig3").unwrap()).unwrap();
        assert_eq!(s.array.length, 0.8);
        assert_eq!(s.array.width, 0.4);
        assert_eq!(s.design, Design::Focus);
        assert_eq!(s.sweep.unwrap().axis, Axis::Z);
        assert_eq!(s.users, vec![Vec3::new(0.0, 0.0, 10.0)]);
        assert!((s.link.transmit_power.unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn empty_document_names_carrier_frequency() {
        for doc in ["", "{}", "  \n"] {
            let err = load_scenario(doc).unwrap_err();
            match err {
                Error::Scenario { kind, path, .. } => {
                    assert_eq!(kind, ScenarioErrorKind::MissingKey);
                    assert_eq!(path, "carrier_frequency");
                }
                e => panic!("unexpected {e}"),
            }
        }
    }

    #[test]
    fn negative_bandwidth_is_a_range_error() {
        let doc = apply_overrides(
            bundled_scenario("paper_fig3").unwrap(),
            &[("link.bandwidth".into(), "-1".into())],
        )
        .unwrap();
        let err = load_scenario(&doc).unwrap_err();
        assert_eq!(err.scenario_kind(), Some(ScenarioErrorKind::OutOfRange));
        assert!(err.to_string().contains("link.bandwidth"));
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let doc = apply_overrides(
            bundled_scenario("paper_fig3").unwrap(),
            &[("array.rows".into(), "3".into())],
        )
        .unwrap();
        let err = load_scenario(&doc).unwrap_err();
        assert_eq!(err.scenario_kind(), Some(ScenarioErrorKind::UnknownKey));
        assert!(err.to_string().contains("array.rows"), "{err}");
    }

    #[test]
    fn malformed_document() {
        let err = load_scenario("{ not json").unwrap_err();
        assert_eq!(err.scenario_kind(), Some(ScenarioErrorKind::Malformed));
        let err = load_scenario(r#"{"carrier_frequency": "fast"}"#).unwrap_err();
        assert_eq!(err.scenario_kind(), Some(ScenarioErrorKind::Malformed));
        assert!(err.to_string().contains("carrier_frequency"));
    }

    #[test]
    fn alias_override_hits_carrier_frequency() {
        let doc = apply_overrides(
            bundled_scenario("paper_fig3").unwrap(),
            &[("carrier_frequency_hz".into(), "-1".into())],
        )
        .unwrap();
        let err = load_scenario(&doc).unwrap_err();
        assert_eq!(err.scenario_kind(), Some(ScenarioErrorKind::OutOfRange));
    }

    #[test]
    fn power_keys_are_exclusive() {
        let doc = apply_overrides(
            bundled_scenario("paper_fig3").unwrap(),
            &[("link.transmit_power".into(), "0.01".into())],
        )
        .unwrap();
        assert_eq!(
            load_scenario(&doc).unwrap_err().scenario_kind(),
            Some(ScenarioErrorKind::Malformed)
        );
    }

    #[test]
    fn echo_round_trips() {
        for name in bundled_names() {
            let s = load_scenario(bundled_scenario(name).unwrap()).unwrap();
            assert_eq!(load_scenario(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn sweep_grid_contains_focal_points() {
        let g = sweep_grid(&FIG4_SWEEP, &[Vec3::new(0.0, 0.0, 8.0), Vec3::new(0.0, 0.0, 22.0)]);
        assert!(g.contains(&8.0) && g.contains(&22.0));
        assert_eq!(g[0], 1.0);
        assert_eq!(*g.last().unwrap(), 40.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn overrides_index_into_arrays() {
        let doc = apply_overrides(
            bundled_scenario("paper_fig4").unwrap(),
            &[("users.1".into(), "[0, 0, 30]".into()), ("design".into(), "focus".into())],
        )
        .unwrap();
        let s = load_scenario(&doc).unwrap();
        assert_eq!(s.users[1], Vec3::new(0.0, 0.0, 30.0));
        assert_eq!(s.design, Design::Focus);
        assert!(apply_overrides(&doc, &[("users.5".into(), "1".into())]).is_err());
    }

    #[test]
    fn wrong_user_count_is_shape_mismatch() {
        let s = load_scenario(bundled_scenario("paper_fig3").unwrap()).unwrap();
        assert!(matches!(run_fig4(&s), Err(Error::ShapeMismatch(_))));
        assert!(matches!(run_beamsplit(&s), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn scan_csv_round_trip() {
        let spec = ScanSpec {
            plane: Plane::Xz,
            ranges: [[-1.0, 1.0], [2.0, 3.0]],
            resolution: [3, 2],
            level: 0.0,
        };
        let scan = FieldScan {
            spec,
            values: vec![1.0, 2.0, 4.0, 0.5, 0.25, 0.0],
            normalized: vec![0.25, 0.5, 1.0, 0.125, 0.0625, 0.0],
            valid: vec![true; 6],
        };
        let text = field_scan_csv(&scan);
        assert!(text.starts_with("axes,x,-1,1,z,2,3\r\nresolution,3,2\r\n"));
        let (ranges, res, values) = parse_field_scan_csv(&text).unwrap();
        assert_eq!(ranges, spec.ranges);
        assert_eq!(res, spec.resolution);
        assert_eq!(values, scan.normalized);
    }
}
