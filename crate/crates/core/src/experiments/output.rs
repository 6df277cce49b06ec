//! Result containers and their CSV/JSON serialization.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which round
//! trips every `f64` exactly. Output bytes depend only on the values.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Value};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::InvalidConfig(format!("unknown format {s:?}; expected csv or json"))),
        }
    }
}

pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidInput(format!("not a float: {s:?}")))
}

/// Non-finite values become `null`.
fn json_f64(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Pretty JSON with floats in the same 17-digit form as the CSV files.
struct FloatFormatter(PrettyFormatter<'static>);

impl Formatter for FloatFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        w.write_all(format_f64(value).as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

fn value_f64(v: &Value) -> Result<f64> {
    match v {
        Value::Null => Ok(f64::NAN),
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::InvalidInput(format!("not a float: {n}"))),
        other => Err(Error::InvalidInput(format!("expected a number, got {other}"))),
    }
}

/// One aggregated measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub variant: String,
    /// `L_te` or `T`, depending on the experiment.
    pub sweep: u64,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub seed: u64,
    /// Empty, or a reason the value is missing (e.g. `diverged`).
    pub flag: String,
}

/// Summary of one training run, recorded in the metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub variant: String,
    pub depth: usize,
    pub repeat: usize,
    pub steps: usize,
    pub converged: bool,
    pub final_loss: Option<f64>,
    /// Learned scalars of CA models; empty for LSA and baselines.
    pub params: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub training: Vec<TrainingRecord>,
}

impl Metadata {
    pub fn new(cfg: &ExperimentConfig, training: Vec<TrainingRecord>) -> Self {
        Metadata {
            experiment: cfg.experiment.name().to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            config: cfg.clone(),
            training,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub metadata: Option<Metadata>,
}

impl ResultTable {
    pub const HEADER: [&'static str; 8] = ["experiment", "variant", "sweep", "mean", "std", "n", "seed", "flag"];

    pub fn new(mut rows: Vec<ResultRow>, metadata: Option<Metadata>) -> Self {
        rows.sort_by(|a, b| (&a.variant, a.sweep).cmp(&(&b.variant, b.sweep)));
        ResultTable { rows, metadata }
    }

    pub fn find(&self, variant: &str, sweep: u64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.variant == variant && r.sweep == sweep)
    }

    pub fn variant(&self, variant: &str) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.variant == variant).collect()
    }
}

/// One point of the profiled valley `(α*(β), β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub beta: f64,
    pub alpha: f64,
    pub loss: f64,
}

/// Values on a regular `(α, β)` grid, stored row-major with `β` as the row.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2 {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub values: Vec<f64>,
}

impl Grid2 {
    pub fn at(&self, i_alpha: usize, j_beta: usize) -> f64 {
        self.values[j_beta * self.alphas.len() + i_alpha]
    }

    /// Grid indices `(i_alpha, j_beta)` of the smallest finite value.
    pub fn argmin(&self) -> Option<(usize, usize)> {
        let n = self.alphas.len();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| (k % n, k / n))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossSurface {
    pub depth: usize,
    pub quadrature_nodes: usize,
    pub seed: u64,
    pub population: Grid2,
    pub profile: Vec<ProfilePoint>,
    /// Empirical loss of the pre-normalized two-parameter model.
    pub normalized: Option<Grid2>,
    pub metadata: Option<Metadata>,
}

/// What an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentOutput {
    Table(ResultTable),
    Surface(LossSurface),
}

impl ExperimentOutput {
    pub fn metadata(&self) -> Option<&Metadata> {
        match self {
            ExperimentOutput::Table(t) => t.metadata.as_ref(),
            ExperimentOutput::Surface(s) => s.metadata.as_ref(),
        }
    }
}

/// Anything [`emit`] can write.
pub trait Emit {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()>;
    fn to_json(&self) -> Value;
}

impl Emit for ResultTable {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(Self::HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.variant.clone(),
                r.sweep.to_string(),
                format_f64(r.mean),
                format_f64(r.std),
                r.n.to_string(),
                r.seed.to_string(),
                r.flag.clone(),
            ])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|r| {
                json!({
                    "experiment": r.experiment,
                    "variant": r.variant,
                    "sweep": r.sweep,
                    "mean": json_f64(r.mean),
                    "std": json_f64(r.std),
                    "n": r.n,
                    "seed": r.seed,
                    "flag": r.flag,
                })
            })
            .collect();
        json!({ "rows": rows })
    }
}

impl LossSurface {
    pub const HEADER: [&'static str; 5] = ["surface", "alpha", "beta", "loss", "log10_loss"];

    fn records(&self) -> Vec<(&'static str, f64, f64, f64)> {
        let mut out = Vec::new();
        let mut grid = |name: &'static str, g: &Grid2| {
            for (j, &b) in g.betas.iter().enumerate() {
                for (i, &a) in g.alphas.iter().enumerate() {
                    out.push((name, a, b, g.at(i, j)));
                }
            }
        };
        grid("population", &self.population);
        if let Some(n) = &self.normalized {
            grid("normalized", n);
        }
        out.extend(self.profile.iter().map(|p| ("profile", p.alpha, p.beta, p.loss)));
        out
    }
}

impl Emit for LossSurface {
    fn write_csv(&self, out: &mut dyn Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(Self::HEADER)?;
        for (name, a, b, v) in self.records() {
            w.write_record([name, &format_f64(a), &format_f64(b), &format_f64(v), &format_f64(v.log10())])?;
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }

    fn to_json(&self) -> Value {
        let grid = |g: &Grid2| {
            json!({
                "alphas": g.alphas.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
                "betas": g.betas.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
                "loss": g.values.iter().map(|&x| json_f64(x)).collect::<Vec<_>>(),
                "log10_loss": g.values.iter().map(|&x| json_f64(x.log10())).collect::<Vec<_>>(),
            })
        };
        json!({
            "depth": self.depth,
            "quadrature_nodes": self.quadrature_nodes,
            "seed": self.seed,
            "population": grid(&self.population),
            "normalized": self.normalized.as_ref().map(grid),
            "profile": self.profile.iter().map(|p| json!({
                "alpha": json_f64(p.alpha),
                "beta": json_f64(p.beta),
                "loss": json_f64(p.loss),
            })).collect::<Vec<_>>(),
        })
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FloatFormatter(PrettyFormatter::new()));
    v.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Write `item` to `path` in the given format.
pub fn emit(item: &dyn Emit, path: &Path, format: Format) -> Result<()> {
    let bytes = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            item.write_csv(&mut buf)?;
            buf
        }
        Format::Json => json_bytes(&item.to_json())?,
    };
    write_bytes(path, &bytes)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Read a table written by [`emit`]. Metadata is not part of the file.
pub fn parse_table(path: &Path, format: Format) -> Result<ResultTable> {
    let text = read_text(path)?;
    let rows = match format {
        Format::Csv => {
            let mut r = csv::Reader::from_reader(text.as_bytes());
            let mut rows = Vec::new();
            for rec in r.records() {
                let rec = rec?;
                let field = |i: usize| rec.get(i).unwrap_or("");
                let int = |i: usize| {
                    field(i)
                        .parse::<u64>()
                        .map_err(|_| Error::InvalidInput(format!("not an integer: {:?}", field(i))))
                };
                rows.push(ResultRow {
                    experiment: field(0).to_string(),
                    variant: field(1).to_string(),
                    sweep: int(2)?,
                    mean: parse_f64(field(3))?,
                    std: parse_f64(field(4))?,
                    n: int(5)? as usize,
                    seed: int(6)?,
                    flag: field(7).to_string(),
                });
            }
            rows
        }
        Format::Json => {
            let v: Value = serde_json::from_str(&text)?;
            let arr = v["rows"]
                .as_array()
                .ok_or_else(|| Error::InvalidInput("missing rows array".into()))?;
            let mut rows = Vec::with_capacity(arr.len());
            for r in arr {
                let s = |k: &str| r[k].as_str().unwrap_or("").to_string();
                let int = |k: &str| {
                    r[k].as_u64()
                        .ok_or_else(|| Error::InvalidInput(format!("row field {k} is not an integer")))
                };
                rows.push(ResultRow {
                    experiment: s("experiment"),
                    variant: s("variant"),
                    sweep: int("sweep")?,
                    mean: value_f64(&r["mean"])?,
                    std: value_f64(&r["std"])?,
                    n: int("n")? as usize,
                    seed: int("seed")?,
                    flag: s("flag"),
                });
            }
            rows
        }
    };
    Ok(ResultTable { rows, metadata: None })
}

/// Read the `(surface, α, β, loss)` records of a surface written as CSV.
pub fn parse_surface_csv(path: &Path) -> Result<Vec<(String, f64, f64, f64)>> {
    let text = read_text(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let f = |i: usize| parse_f64(rec.get(i).unwrap_or(""));
        out.push((rec.get(0).unwrap_or("").to_string(), f(1)?, f(2)?, f(3)?));
    }
    Ok(out)
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub data: PathBuf,
    pub metadata: PathBuf,
    pub timing: PathBuf,
}

/// Write `<experiment>.{csv,json}`, `<experiment>.meta.json` and
/// `<experiment>.timing.json` into `dir`.
///
/// Wall time lives in its own file so that the other two are byte-identical
/// across reruns.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path, format: Format, wall_seconds: f64) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = out
        .metadata()
        .ok_or_else(|| Error::InvalidInput("experiment output has no metadata".into()))?;
    let stem = &meta.experiment;
    let paths = OutputPaths {
        data: dir.join(format!("{stem}.{}", format.extension())),
        metadata: dir.join(format!("{stem}.meta.json")),
        timing: dir.join(format!("{stem}.timing.json")),
    };
    match out {
        ExperimentOutput::Table(t) => emit(t, &paths.data, format)?,
        ExperimentOutput::Surface(s) => emit(s, &paths.data, format)?,
    }
    write_bytes(&paths.metadata, &json_bytes(meta)?)?;
    let timing = json!({
        "experiment": stem,
        "config_hash": meta.config_hash,
        "wall_seconds": wall_seconds,
    });
    write_bytes(&paths.timing, &json_bytes(&timing)?)?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: &str, sweep: u64, mean: f64) -> ResultRow {
        ResultRow {
            experiment: "fig2".into(),
            variant: variant.into(),
            sweep,
            mean,
            std: 0.0,
            n: 3,
            seed: 9,
            flag: String::new(),
        }
    }

    #[test]
    fn rows_are_sorted() {
        let t = ResultTable::new(vec![row("b", 2, 0.0), row("a", 8, 0.0), row("a", 2, 0.0)], None);
        let keys: Vec<_> = t.rows.iter().map(|r| (r.variant.as_str(), r.sweep)).collect();
        assert_eq!(keys, vec![("a", 2), ("a", 8), ("b", 2)]);
    }

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(format_f64(1.0 / 3.0), "3.3333333333333331e-1");
        assert_eq!(format_f64(f64::NAN), "NaN");
    }

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        emit(&ResultTable::new(vec![], None), &p, Format::Csv).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "experiment,variant,sweep,mean,std,n,seed,flag\n");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let vals = [1.0 / 3.0, 2f64.sqrt() * 1e-300, 123456789.123456789, f64::MIN_POSITIVE, 5e-324, f64::NAN];
        let rows: Vec<_> = vals.iter().enumerate().map(|(i, &v)| row("x", i as u64, v)).collect();
        let t = ResultTable::new(rows, None);
        for fmt in [Format::Csv, Format::Json] {
            let p = dir.path().join(format!("t.{}", fmt.extension()));
            emit(&t, &p, fmt).unwrap();
            let back = parse_table(&p, fmt).unwrap();
            assert_eq!(back.rows.len(), t.rows.len());
            for (a, b) in back.rows.iter().zip(&t.rows) {
                assert_eq!(a.mean.to_bits(), b.mean.to_bits(), "{fmt:?}");
                assert_eq!((a.sweep, a.n, a.seed, &a.variant), (b.sweep, b.n, b.seed, &b.variant));
            }
        }
    }

    #[test]
    fn io_error_carries_path() {
        let p = Path::new("/nonexistent-dir/x/y.csv");
        match emit(&ResultTable::new(vec![], None), p, Format::Csv) {
            Err(Error::Io { path, .. }) => assert_eq!(path, p),
            other => panic!("expected Io error, got {other:?}"),
        }
    }

    #[test]
    fn grid_argmin() {
        let g = Grid2 {
            alphas: vec![0.0, 1.0, 2.0],
            betas: vec![0.0, 1.0],
            values: vec![5.0, 4.0, 3.0, 2.0, f64::NAN, 6.0],
        };
        assert_eq!(g.argmin(), Some((0, 1)));
        assert_eq!(g.at(2, 1), 6.0);
    }
}
