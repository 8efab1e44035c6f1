//! Run records, CSV ingestion and grid preprocessing.
//!
//! A [`Grid`] is built from raw [`RunRecord`]s by a fixed pipeline:
//! replicate aggregation, then the unique-data cap `d = min(d_budget, t)`,
//! then clipping losses to `l0 - margin`. Records are sorted by `(n, d, t)`
//! so the same input always yields the same grid.
//!
//! ```
//! use satlaw::gridio::{baseline_l0, LossKind};
//! let l0 = baseline_l0(LossKind::CrossEntropy, Some(10.0), None).unwrap();
//! assert!((l0 - 10f64.ln()).abs() < 1e-15);
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::GridError;
use crate::forms::Point;

/// Default distance kept between observed losses and `l0`.
pub const DEFAULT_CLIP_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    RelativeL2,
    OtherBounded,
}

impl std::str::FromStr for LossKind {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, GridError> {
        match s {
            "cross-entropy" => Ok(LossKind::CrossEntropy),
            "relative-l2" => Ok(LossKind::RelativeL2),
            "other-bounded" => Ok(LossKind::OtherBounded),
            other => Err(GridError::Config(format!(
                "unknown loss kind `{other}` (expected cross-entropy, relative-l2 or other-bounded)"
            ))),
        }
    }
}

/// Uninformed-baseline loss for a loss type.
///
/// Cross-entropy over `k` outcomes gives `ln k`; relative L2 on normalized
/// targets gives exactly 1; other bounded losses pass `supplied` through.
pub fn baseline_l0(kind: LossKind, k_outcomes: Option<f64>, supplied: Option<f64>) -> Result<f64, GridError> {
    match kind {
        LossKind::CrossEntropy => match k_outcomes {
            Some(k) if k >= 2.0 && k.is_finite() => Ok(k.ln()),
            Some(k) => Err(GridError::Config(format!("cross-entropy needs k_outcomes >= 2, got {k}"))),
            None => Err(GridError::Config("cross-entropy needs k_outcomes".into())),
        },
        LossKind::RelativeL2 => Ok(1.0),
        LossKind::OtherBounded => match supplied {
            Some(v) if v.is_finite() && v > 0.0 => Ok(v),
            Some(v) => Err(GridError::Config(format!("l0 = {v} must be finite and > 0"))),
            None => Err(GridError::Config("other-bounded loss needs an explicit l0".into())),
        },
    }
}

/// One observed training measurement as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub n: f64,
    pub d_budget: f64,
    pub t: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_kind: Option<LossKind>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(n: f64, d_budget: f64, t: f64, loss: f64) -> Self {
        RunRecord { n, d_budget, t, loss, c: None, seed: None, loss_kind: None, tags: BTreeMap::new() }
    }

    fn check(&self) -> Result<(), String> {
        for (name, v) in [("n", self.n), ("d", self.d_budget), ("t", self.t), ("loss", self.loss)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} = {v} must be finite and > 0"));
            }
        }
        if let Some(c) = self.c {
            if !(c.is_finite() && c > 0.0) {
                return Err(format!("c = {c} must be finite and > 0"));
            }
        }
        Ok(())
    }
}

/// Replaces the unique-data budget by the data actually seen, `min(d_budget, t)`.
pub fn cap_unique_data(mut r: RunRecord) -> RunRecord {
    r.d_budget = r.d_budget.min(r.t);
    r
}

/// Clips the loss to `l0 - margin`. Returns the record and whether it fired.
pub fn clip_loss(mut r: RunRecord, l0: f64, margin: f64) -> (RunRecord, bool) {
    let ceiling = l0 - margin;
    if r.loss > ceiling {
        r.loss = ceiling;
        (r, true)
    } else {
        (r, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateMode {
    #[default]
    Mean,
    Min,
}

impl std::str::FromStr for AggregateMode {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, GridError> {
        match s {
            "mean" => Ok(AggregateMode::Mean),
            "min" => Ok(AggregateMode::Min),
            other => Err(GridError::Config(format!("unknown aggregation `{other}` (expected mean or min)"))),
        }
    }
}

fn cell_key(r: &RunRecord) -> (u64, u64, u64) {
    (r.n.to_bits(), r.d_budget.to_bits(), r.t.to_bits())
}

/// Collapses records sharing an exact `(n, d_budget, t)` cell into one.
pub fn aggregate_replicates(records: Vec<RunRecord>, mode: AggregateMode) -> Result<Vec<RunRecord>, GridError> {
    let mut groups: BTreeMap<(u64, u64, u64), Vec<RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(cell_key(&r)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (_, group) in groups {
        let first = &group[0];
        if group.iter().any(|r| r.loss_kind != first.loss_kind) {
            return Err(GridError::MixedLossKind { n: first.n, d: first.d_budget, t: first.t });
        }
        let m = group.len() as f64;
        let loss = match mode {
            AggregateMode::Mean => group.iter().map(|r| r.loss).sum::<f64>() / m,
            AggregateMode::Min => group.iter().map(|r| r.loss).fold(f64::INFINITY, f64::min),
        };
        let cs: Vec<f64> = group.iter().filter_map(|r| r.c).collect();
        let c = (!cs.is_empty()).then(|| cs.iter().sum::<f64>() / cs.len() as f64);
        let mut merged = first.clone();
        merged.loss = loss;
        merged.c = c;
        if group.len() > 1 {
            merged.seed = None;
        }
        out.push(merged);
    }
    Ok(out)
}

/// Preprocessing switches applied by [`Grid::from_records`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    /// `None` leaves replicate cells separate.
    pub aggregate: Option<AggregateMode>,
    pub cap_unique_data: bool,
    pub clip_margin: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess { aggregate: Some(AggregateMode::Mean), cap_unique_data: true, clip_margin: DEFAULT_CLIP_MARGIN }
    }
}

/// Counts produced while preprocessing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub rows_read: usize,
    pub cells: usize,
    pub capped: usize,
    pub clipped: usize,
}

/// One preprocessed cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub n: f64,
    pub d: f64,
    pub t: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
}

impl Record {
    pub fn point(&self) -> Point {
        Point { n: self.n, d: self.d, t: self.t, c: self.c }
    }
}

/// An immutable, preprocessed collection of runs with its dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    name: String,
    l0: f64,
    loss_kind: LossKind,
    records: Vec<Record>,
}

impl Grid {
    /// Runs the preprocessing pipeline over raw records.
    pub fn from_records(
        name: impl Into<String>,
        l0: f64,
        loss_kind: LossKind,
        records: Vec<RunRecord>,
        pre: &Preprocess,
    ) -> Result<(Grid, PreprocessReport), GridError> {
        if !(l0.is_finite() && l0 > 0.0) {
            return Err(GridError::Config(format!("l0 = {l0} must be finite and > 0")));
        }
        if !(pre.clip_margin.is_finite() && pre.clip_margin >= 0.0 && pre.clip_margin < l0) {
            return Err(GridError::Config(format!("clip margin {} must lie in [0, l0)", pre.clip_margin)));
        }
        for (i, r) in records.iter().enumerate() {
            r.check().map_err(|message| GridError::Row { line: i + 1, message })?;
        }
        let mut report = PreprocessReport { rows_read: records.len(), ..Default::default() };
        let records = match pre.aggregate {
            Some(mode) => aggregate_replicates(records, mode)?,
            None => records,
        };
        let mut capped: Vec<RunRecord> = records
            .into_iter()
            .map(|r| {
                if pre.cap_unique_data && r.d_budget > r.t {
                    report.capped += 1;
                    cap_unique_data(r)
                } else {
                    r
                }
            })
            .collect();
        // Budgets that differ only above t collapse onto the same cell.
        if let Some(mode) = pre.aggregate {
            if report.capped > 0 {
                capped = aggregate_replicates(capped, mode)?;
            }
        }
        let mut out = Vec::with_capacity(capped.len());
        for r in capped {
            let (r, clipped) = clip_loss(r, l0, pre.clip_margin);
            report.clipped += clipped as usize;
            out.push(Record { n: r.n, d: r.d_budget, t: r.t, loss: r.loss, c: r.c });
        }
        if out.is_empty() {
            return Err(GridError::Empty);
        }
        sort_records(&mut out);
        report.cells = out.len();
        Ok((Grid { name: name.into(), l0, loss_kind, records: out }, report))
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn l0(&self) -> f64 {
        self.l0
    }
    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }
    pub fn records(&self) -> &[Record] {
        &self.records
    }
    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.records.iter().map(Record::point)
    }
    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.loss)
    }

    /// A grid with the same metadata over the records at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Grid {
        Grid {
            name: self.name.clone(),
            l0: self.l0,
            loss_kind: self.loss_kind,
            records: indices.iter().map(|&i| self.records[i]).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String, GridError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses canonical grid JSON, checking every grid invariant.
    pub fn from_json(s: &str) -> Result<Grid, GridError> {
        #[derive(Deserialize)]
        struct Raw {
            name: String,
            l0: f64,
            loss_kind: LossKind,
            records: Vec<Record>,
        }
        let raw: Raw = serde_json::from_str(s)?;
        if raw.records.is_empty() {
            return Err(GridError::Empty);
        }
        for (i, r) in raw.records.iter().enumerate() {
            let rr = RunRecord { c: r.c, ..RunRecord::new(r.n, r.d, r.t, r.loss) };
            rr.check().map_err(|message| GridError::Row { line: i + 1, message })?;
            if r.d > r.t {
                return Err(GridError::Row { line: i + 1, message: format!("d = {} exceeds t = {}", r.d, r.t) });
            }
            if r.loss >= raw.l0 {
                return Err(GridError::Row { line: i + 1, message: format!("loss {} not below l0 {}", r.loss, raw.l0) });
            }
        }
        let mut records = raw.records;
        sort_records(&mut records);
        Ok(Grid { name: raw.name, l0: raw.l0, loss_kind: raw.loss_kind, records })
    }

    pub fn read_json(path: &Path) -> Result<Grid, GridError> {
        Grid::from_json(&fs::read_to_string(path)?)
    }
}

fn sort_records(records: &mut [Record]) {
    records.sort_by(|a, b| a.n.total_cmp(&b.n).then(a.d.total_cmp(&b.d)).then(a.t.total_cmp(&b.t)));
}

/// Maps logical fields to CSV header names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schema {
    pub n: String,
    pub d: String,
    /// Alternative header for the unique-data budget.
    pub d_budget: String,
    pub t: String,
    /// Alternative to `t`: epochs over `d`, so `t = epochs * d`.
    pub epochs: String,
    pub loss: String,
    pub c: String,
    pub seed: String,
    pub loss_kind: String,
    /// Extra columns carried as string tags.
    pub tags: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema {
            n: "n".into(),
            d: "d".into(),
            d_budget: "d_budget".into(),
            t: "t".into(),
            epochs: "epochs".into(),
            loss: "loss".into(),
            c: "c".into(),
            seed: "seed".into(),
            loss_kind: "loss_kind".into(),
            tags: Vec::new(),
        }
    }
}

impl Schema {
    /// Reads a TOML column map; unspecified fields keep their defaults.
    pub fn from_toml(s: &str) -> Result<Schema, GridError> {
        toml::from_str(s).map_err(|e| GridError::Config(format!("schema: {e}")))
    }
}

/// Options for [`load_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub name: String,
    pub l0: f64,
    pub loss_kind: LossKind,
    pub preprocess: Preprocess,
    /// Keep only rows whose tags match every `(column, value)` pair.
    pub filter: Vec<(String, String)>,
}

impl LoadOptions {
    pub fn new(name: impl Into<String>, l0: f64, loss_kind: LossKind) -> Self {
        LoadOptions { name: name.into(), l0, loss_kind, preprocess: Preprocess::default(), filter: Vec::new() }
    }
}

/// Reads raw run records from a CSV file.
pub fn read_records(path: &Path, schema: &Schema) -> Result<Vec<RunRecord>, GridError> {
    read_records_from(fs::File::open(path)?, schema)
}

pub fn read_records_from<R: std::io::Read>(rdr: R, schema: &Schema) -> Result<Vec<RunRecord>, GridError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(rdr);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let n_col = col(&schema.n).ok_or_else(|| GridError::MissingColumn(schema.n.clone()))?;
    let loss_col = col(&schema.loss).ok_or_else(|| GridError::MissingColumn(schema.loss.clone()))?;
    let d_col = col(&schema.d)
        .or_else(|| col(&schema.d_budget))
        .ok_or_else(|| GridError::MissingColumn(format!("{} (or {})", schema.d, schema.d_budget)))?;
    let t_col = col(&schema.t);
    let epochs_col = col(&schema.epochs);
    let c_col = col(&schema.c);
    let seed_col = col(&schema.seed);
    let kind_col = col(&schema.loss_kind);
    let tag_cols: Vec<(String, usize)> = schema
        .tags
        .iter()
        .map(|t| col(t).map(|i| (t.clone(), i)).ok_or_else(|| GridError::MissingColumn(t.clone())))
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let err = |message: String| GridError::Row { line, message };
        let num = |i: usize, name: &str| -> Result<f64, GridError> {
            let s = row.get(i).unwrap_or("");
            s.parse::<f64>().map_err(|_| err(format!("column `{name}`: cannot parse `{s}` as a number")))
        };
        let opt = |i: Option<usize>| row.get(i?).filter(|s| !s.is_empty());
        let n = num(n_col, &schema.n)?;
        let d = num(d_col, &schema.d)?;
        let t = match (t_col, epochs_col) {
            (Some(i), _) if opt(Some(i)).is_some() => num(i, &schema.t)?,
            (_, Some(i)) if opt(Some(i)).is_some() => num(i, &schema.epochs)? * d,
            // Single-epoch convention: t = d.
            _ => d,
        };
        let loss = num(loss_col, &schema.loss)?;
        let c = match opt(c_col) {
            Some(_) => Some(num(c_col.unwrap_or_default(), &schema.c)?),
            None => None,
        };
        let loss_kind = match opt(kind_col) {
            Some(s) => Some(s.parse::<LossKind>().map_err(|e| err(e.to_string()))?),
            None => None,
        };
        let rec = RunRecord {
            n,
            d_budget: d,
            t,
            loss,
            c,
            seed: opt(seed_col).map(str::to_string),
            loss_kind,
            tags: tag_cols.iter().map(|(k, i)| (k.clone(), row.get(*i).unwrap_or("").to_string())).collect(),
        };
        rec.check().map_err(err)?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads and preprocesses a CSV grid.
pub fn load_grid(path: &Path, schema: &Schema, opts: &LoadOptions) -> Result<(Grid, PreprocessReport), GridError> {
    let mut records = read_records(path, schema)?;
    let rows_read = records.len();
    records.retain(|r| opts.filter.iter().all(|(k, v)| r.tags.get(k) == Some(v)));
    if let Some(kind) = records.iter().find_map(|r| r.loss_kind) {
        if kind != opts.loss_kind {
            return Err(GridError::Config(format!(
                "file declares loss kind {kind:?} but {:?} was requested",
                opts.loss_kind
            )));
        }
    }
    let (grid, mut report) = Grid::from_records(&opts.name, opts.l0, opts.loss_kind, records, &opts.preprocess)?;
    report.rows_read = rows_read;
    Ok((grid, report))
}
