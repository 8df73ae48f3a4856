//! Versioned CSV tables.
//!
//! Every file starts with `# synmem-csv v1 <kind> units=pJ (model-relative)` followed by a
//! fixed header row. [`validate_csv`] checks both against the schema of `<kind>` and
//! type-checks every cell.

use std::str::FromStr;

use synmem_core::store::Scheme;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Int,
    Float,
    Scheme,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    FcSweep,
    ConvSweep,
    DensityLeakGrid,
    TrainFrontier,
    LearningCurve,
}

use ColumnType::*;

const SWEEP: &[(&str, ColumnType)] = &[
    ("scheme", Scheme),
    ("b_w", Int),
    ("fwd_pJ", Float),
    ("bwd_pJ", Float),
    ("fwd_leakage_pJ", Float),
    ("bwd_leakage_pJ", Float),
    ("fwd_reads", Int),
    ("fwd_weight_reads", Int),
    ("fwd_logic", Int),
    ("bwd_reads", Int),
    ("bwd_weight_reads", Int),
    ("bwd_writes", Int),
    ("bwd_logic", Int),
];

const GRID: &[(&str, ColumnType)] = &[
    ("density", Float),
    ("leak_fraction", Float),
    ("leak_scale", Float),
    ("cb_pJ", Float),
    ("pb_csr_pJ", Float),
    ("pb_bmp_pJ", Float),
    ("functional_pJ", Float),
    ("winner", Scheme),
    ("order", Int),
];

const FRONTIER: &[(&str, ColumnType)] = &[
    ("precision", Text),
    ("b_w", Int),
    ("scheme", Scheme),
    ("initial_vr", Float),
    ("final_vr", Float),
    ("best_vr", Float),
    ("mean_sparsity", Float),
    ("final_sparsity", Float),
    ("fwd_pJ", Float),
    ("bwd_pJ", Float),
    ("train_pJ", Float),
    ("status", Text),
];

const CURVE: &[(&str, ColumnType)] = &[
    ("precision", Text),
    ("scheme", Scheme),
    ("epoch", Int),
    ("vr_distance", Float),
    ("fwd_pJ", Float),
    ("bwd_pJ", Float),
    ("sparsity", Float),
];

impl TableKind {
    pub const ALL: [TableKind; 5] = [
        TableKind::FcSweep,
        TableKind::ConvSweep,
        TableKind::DensityLeakGrid,
        TableKind::TrainFrontier,
        TableKind::LearningCurve,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::FcSweep => "fc-sweep",
            TableKind::ConvSweep => "conv-sweep",
            TableKind::DensityLeakGrid => "density-leak-grid",
            TableKind::TrainFrontier => "train-frontier",
            TableKind::LearningCurve => "learning-curve",
        }
    }

    pub fn columns(self) -> &'static [(&'static str, ColumnType)] {
        match self {
            TableKind::FcSweep | TableKind::ConvSweep => SWEEP,
            TableKind::DensityLeakGrid => GRID,
            TableKind::TrainFrontier => FRONTIER,
            TableKind::LearningCurve => CURVE,
        }
    }

    pub fn banner(self) -> String {
        format!("# synmem-csv v{FORMAT_VERSION} {} units=pJ (model-relative)", self.name())
    }
}

impl FromStr for TableKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        TableKind::ALL.into_iter().find(|k| k.name() == s).ok_or(())
    }
}

/// Formats a float with the shortest representation that round-trips.
pub fn float(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub kind: TableKind,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: TableKind) -> Self {
        Self { kind, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.kind.columns().len(), "row width for {}", self.kind.name());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.kind.columns().iter().map(|c| c.0)).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        let body = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8");
        format!("{}\n{body}", self.kind.banner())
    }

    /// Cell `column` of `row`, by header name.
    pub fn cell(&self, row: usize, column: &str) -> Option<&str> {
        let k = self.kind.columns().iter().position(|c| c.0 == column)?;
        self.rows.get(row).map(|r| r[k].as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("missing or malformed banner line")]
    Banner,
    #[error("unsupported format version {0}")]
    Version(String),
    #[error("unknown table kind `{0}`")]
    Kind(String),
    #[error("header does not match the {kind} schema")]
    Header { kind: &'static str },
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// Parses and type-checks a table written by [`Table::to_csv`].
pub fn validate_csv(text: &str) -> Result<Table, SchemaError> {
    let (banner, body) = text.split_once('\n').ok_or(SchemaError::Banner)?;
    let parts: Vec<&str> = banner.split(' ').collect();
    if parts.len() != 6 || parts[0] != "#" || parts[1] != "synmem-csv" || parts[4] != "units=pJ" || parts[5] != "(model-relative)" {
        return Err(SchemaError::Banner);
    }
    if parts[2] != format!("v{FORMAT_VERSION}") {
        return Err(SchemaError::Version(parts[2].to_string()));
    }
    let kind = TableKind::from_str(parts[3]).map_err(|_| SchemaError::Kind(parts[3].to_string()))?;

    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(body.as_bytes());
    let header = reader.headers().map_err(|_| SchemaError::Header { kind: kind.name() })?;
    let columns = kind.columns();
    if header.len() != columns.len() || header.iter().zip(columns).any(|(h, c)| h != c.0) {
        return Err(SchemaError::Header { kind: kind.name() });
    }
    let mut table = Table::new(kind);
    for (i, rec) in reader.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| SchemaError::Row { line, message: e.to_string() })?;
        if rec.len() != columns.len() {
            return Err(SchemaError::Row { line, message: format!("{} fields, expected {}", rec.len(), columns.len()) });
        }
        for (cell, &(name, ty)) in rec.iter().zip(columns) {
            let ok = match ty {
                Text => !cell.is_empty(),
                Int => cell.parse::<i64>().is_ok(),
                Float => cell.parse::<f64>().is_ok(),
                Scheme => Scheme::ALL.iter().any(|s| s.label() == cell),
            };
            if !ok {
                return Err(SchemaError::Row { line, message: format!("column `{name}`: bad value `{cell}`") });
            }
        }
        table.rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(table)
}
