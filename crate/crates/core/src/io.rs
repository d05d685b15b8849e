//! File formats.
//!
//! * features: CSV, header `item_id,f0,...,f{D-1}`
//! * ratings: JSON array of `{item_id, ground_truth_mos?, raw_scores? | gaussian? | histogram?}`
//! * config: flat JSON object, omitted keys take their defaults, unknown keys are rejected
//! * labels: CSV `item_id,sos,calibrated[,ground_truth]`
//! * trace: CSV `epoch,data_fit_loss,constraint_loss,total_loss,mu_digest`
//!
//! Every writer renders floats with 17 significant digits so output is
//! byte-identical for identical input and parses back to the same `f64`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::engine::EpochReport;
use crate::error::{Error, Result};
use crate::sos::{Annotation, HistogramBin, RatingRecord};
use crate::types::{CalibrationConfig, FeatureTable};

/// Canonical float rendering used by every writer.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
        return Err(Error::validation(format!(
            "item id `{id}` cannot be written to CSV (empty or contains a separator)"
        )));
    }
    Ok(())
}

/// Pretty JSON with the canonical float rendering.
struct StableFormatter(PrettyFormatter<'static>);

impl Formatter for StableFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            w.write_all(fmt_f64(value).as_bytes())
        } else {
            w.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_stable_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, StableFormatter(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .expect("serializing plain data to memory cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_bytes(path, to_stable_json(value).as_bytes())
}

fn parse_f64(path: &Path, line: usize, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("`{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value `{field}`")));
    }
    Ok(v)
}

pub fn read_features(path: &Path) -> Result<FeatureTable> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.first() != Some(&"item_id") {
        return Err(parse_err(path, 1, "header must start with `item_id`"));
    }
    let dim = columns.len() - 1;
    for (j, c) in columns[1..].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(path, 1, format!("expected column `f{j}`, found `{c}`")));
        }
    }
    if dim == 0 {
        return Err(parse_err(path, 1, "no feature columns"));
    }
    let mut ids = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut data = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", dim + 1, fields.len()),
            ));
        }
        let id = fields[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(path, lineno, format!("duplicate item id `{id}`")));
        }
        for f in &fields[1..] {
            data.push(parse_f64(path, lineno, f)?);
        }
        ids.push(id);
    }
    FeatureTable::new(ids, dim, data)
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut out = String::from("item_id");
    for j in 0..table.dim() {
        out.push_str(&format!(",f{j}"));
    }
    out.push('\n');
    for (i, id) in table.item_ids().iter().enumerate() {
        check_id(id)?;
        out.push_str(id);
        for &v in table.row(i) {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussianJson {
    mos: f64,
    std: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RatingJson {
    item_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ground_truth_mos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gaussian: Option<GaussianJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    histogram: Option<Vec<HistogramBin>>,
}

impl RatingJson {
    fn into_record(self) -> std::result::Result<RatingRecord, String> {
        let annotation = match (self.raw_scores, self.gaussian, self.histogram) {
            (Some(s), None, None) => Annotation::RawScores(s),
            (None, Some(g), None) => Annotation::Gaussian {
                mos: g.mos,
                std: g.std,
            },
            (None, None, Some(h)) => Annotation::Histogram(h),
            (None, None, None) => return Err("no annotation (need one of raw_scores, gaussian, histogram)".into()),
            _ => return Err("more than one annotation kind".into()),
        };
        let record = RatingRecord {
            item_id: self.item_id,
            annotation,
            ground_truth_mos: self.ground_truth_mos,
        };
        record.validate().map_err(|e| e.to_string())?;
        Ok(record)
    }

    fn from_record(r: &RatingRecord) -> Self {
        let mut out = RatingJson {
            item_id: r.item_id.clone(),
            ground_truth_mos: r.ground_truth_mos,
            raw_scores: None,
            gaussian: None,
            histogram: None,
        };
        match &r.annotation {
            Annotation::RawScores(s) => out.raw_scores = Some(s.clone()),
            Annotation::Gaussian { mos, std } => {
                out.gaussian = Some(GaussianJson {
                    mos: *mos,
                    std: *std,
                })
            }
            Annotation::Histogram(h) => out.histogram = Some(h.clone()),
        }
        out
    }
}

pub fn parse_ratings(text: &str, path: &Path) -> Result<Vec<RatingRecord>> {
    let raw: Vec<RatingJson> = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::with_capacity(raw.len());
    let mut problems = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, r) in raw.into_iter().enumerate() {
        let id = r.item_id.clone();
        if !seen.insert(id.clone()) {
            problems.push(format!("record {i} (`{id}`): duplicate item id"));
            continue;
        }
        match r.into_record() {
            Ok(rec) => records.push(rec),
            Err(e) => problems.push(format!("record {i} (`{id}`): {e}")),
        }
    }
    if !problems.is_empty() {
        return Err(Error::validation(format!(
            "{}: {}",
            path.display(),
            problems.join("; ")
        )));
    }
    Ok(records)
}

pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    parse_ratings(&read_to_string(path)?, path)
}

pub fn write_ratings(path: &Path, records: &[RatingRecord]) -> Result<()> {
    let raw: Vec<RatingJson> = records.iter().map(RatingJson::from_record).collect();
    write_json(path, &raw)
}

pub fn parse_config(text: &str, path: &Path) -> Result<CalibrationConfig> {
    let config: CalibrationConfig = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    config.validate()?;
    Ok(config)
}

pub fn read_config(path: &Path) -> Result<CalibrationConfig> {
    parse_config(&read_to_string(path)?, path)
}

pub fn write_config(path: &Path, config: &CalibrationConfig) -> Result<()> {
    write_json(path, config)
}

/// Numeric CSV keyed by `item_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    pub item_ids: Vec<String>,
    pub columns: Vec<(String, Vec<f64>)>,
}

impl LabelTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Values of `name`, reordered to follow `ids`.
    pub fn aligned(&self, name: &str, ids: &[String]) -> Result<Vec<f64>> {
        let column = self
            .column(name)
            .ok_or_else(|| Error::validation(format!("no column `{name}`")))?;
        let index: std::collections::HashMap<&str, usize> = self
            .item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| column[i])
                    .ok_or_else(|| Error::validation(format!("item `{id}` missing from labels")))
            })
            .collect()
    }
}

pub fn read_labels(path: &Path) -> Result<LabelTable> {
    let text = read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.first().map(String::as_str) != Some("item_id") || names.len() < 2 {
        return Err(parse_err(
            path,
            1,
            "header must be `item_id` followed by at least one column",
        ));
    }
    let mut item_ids = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len() - 1];
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", names.len(), fields.len()),
            ));
        }
        let id = fields[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(parse_err(path, lineno, format!("duplicate item id `{id}`")));
        }
        for (col, f) in values.iter_mut().zip(&fields[1..]) {
            col.push(parse_f64(path, lineno, f)?);
        }
        item_ids.push(id);
    }
    Ok(LabelTable {
        item_ids,
        columns: names.into_iter().skip(1).zip(values).collect(),
    })
}

pub fn write_labels(path: &Path, table: &LabelTable) -> Result<()> {
    for (name, col) in &table.columns {
        if col.len() != table.item_ids.len() {
            return Err(Error::validation(format!(
                "column `{name}` has {} values for {} items",
                col.len(),
                table.item_ids.len()
            )));
        }
    }
    let mut out = String::from("item_id");
    for (name, _) in &table.columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, id) in table.item_ids.iter().enumerate() {
        check_id(id)?;
        out.push_str(id);
        for (_, col) in &table.columns {
            out.push(',');
            out.push_str(&fmt_f64(col[i]));
        }
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn trace_csv(trace: &[EpochReport]) -> String {
    let mut out = String::from("epoch,data_fit_loss,constraint_loss,total_loss,mu_digest\n");
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            fmt_f64(r.data_fit_loss),
            fmt_f64(r.constraint_loss),
            fmt_f64(r.total_loss),
            r.mu_digest
        ));
    }
    out
}

pub fn write_trace(path: &Path, trace: &[EpochReport]) -> Result<()> {
    write_bytes(path, trace_csv(trace).as_bytes())
}

/// Writes rows of a plain CSV table with a header.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Paths written by [`write_results`].
#[derive(Debug, Clone)]
pub struct ResultFiles {
    pub labels: PathBuf,
    pub metrics: Option<PathBuf>,
    pub trace: PathBuf,
}

/// Calibrated labels CSV, optional metrics JSON and the epoch trace CSV.
pub fn write_results<T: Serialize>(
    dir: &Path,
    labels: &LabelTable,
    metrics: Option<&T>,
    trace: &[EpochReport],
) -> Result<ResultFiles> {
    let files = ResultFiles {
        labels: dir.join("calibrated.csv"),
        metrics: metrics.map(|_| dir.join("metrics.json")),
        trace: dir.join("trace.csv"),
    };
    write_labels(&files.labels, labels)?;
    if let (Some(m), Some(p)) = (metrics, &files.metrics) {
        write_json(p, m)?;
    }
    write_trace(&files.trace, trace)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_rendering_round_trips() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn stable_json_uses_canonical_floats() {
        let json = to_stable_json(&serde_json::json!({"a": 0.5, "b": [1, 2]}));
        assert!(json.contains("5.0000000000000000e-1"), "{json}");
        let back: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(back["a"], 0.5);
    }

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse_config("{}", Path::new("c.json")).unwrap();
        assert_eq!(c, CalibrationConfig::default());
    }

    #[test]
    fn unknown_config_key_is_named() {
        let err = parse_config(r#"{"alhpa": 0.2}"#, Path::new("c.json")).unwrap_err();
        assert!(err.to_string().contains("alhpa"), "{err}");
    }

    #[test]
    fn partial_config_overrides() {
        let c = parse_config(r#"{"alpha": 0.2, "hidden_dims": [16, 8]}"#, Path::new("c.json")).unwrap();
        assert_eq!(c.alpha, 0.2);
        assert_eq!(c.hidden_dims, (16, 8));
        assert_eq!(c.beta, 1.0 / 9.0);
        assert!(parse_config(r#"{"alpha": 2.0}"#, Path::new("c.json")).is_err());
    }

    #[test]
    fn rating_exclusivity_and_validation() {
        let p = Path::new("r.json");
        let both = r#"[{"item_id": "a", "raw_scores": [1], "gaussian": {"mos": 1, "std": 0.5}}]"#;
        assert!(parse_ratings(both, p).unwrap_err().to_string().contains("more than one"));
        let none = r#"[{"item_id": "a"}]"#;
        assert!(parse_ratings(none, p).is_err());
        let negative = r#"[{"item_id": "a", "gaussian": {"mos": 1, "std": -0.5}}]"#;
        assert!(parse_ratings(negative, p).unwrap_err().to_string().contains("non-negative"));
        let minimal = r#"[{"item_id": "a", "raw_scores": [3]}]"#;
        let recs = parse_ratings(minimal, p).unwrap();
        assert_eq!(recs[0].annotation, Annotation::RawScores(vec![3.0]));
        assert_eq!(recs[0].ground_truth_mos, None);
        let hist = r#"[{"item_id": "h", "ground_truth_mos": 4.5,
                        "histogram": [{"value": 1, "count": 1}, {"value": 5, "count": 7}]}]"#;
        assert!(matches!(parse_ratings(hist, p).unwrap()[0].annotation, Annotation::Histogram(_)));
        let dup = r#"[{"item_id": "a", "raw_scores": [3]}, {"item_id": "a", "raw_scores": [3]}]"#;
        assert!(parse_ratings(dup, p).is_err());
    }
}
