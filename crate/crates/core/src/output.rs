//! CSV tables, key=value manifests and atomic file writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::observe::Observation;

/// One cell: a number, an empty (undefined) field or a text label.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Empty,
    Text(String),
}

impl Cell {
    pub fn opt(v: Option<f64>) -> Cell {
        match v {
            Some(x) if x.is_finite() => Cell::Num(x),
            _ => Cell::Empty,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            // never write NaN/inf literals
            Cell::Num(x) if x.is_finite() => format!("{x:e}"),
            Cell::Num(_) | Cell::Empty => String::new(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::opt(Some(x))
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// Refuse to read more cells than this.
pub const MAX_CELLS: usize = 1 << 24;

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let k = self.column_index(name).ok_or_else(|| Error::Invalid(format!("no column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[k].as_f64()).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.headers).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }

    /// Strict reader: header row required, rectangular, cells are finite
    /// numbers, empty, or text without a numeric reading.
    pub fn from_csv(bytes: &[u8]) -> Result<Table> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(bytes);
        let parse = |e: csv::Error| Error::Parse(e.to_string());
        let headers: Vec<String> = r.headers().map_err(parse)?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().any(|h| h.is_empty()) {
            return Err(Error::Parse("empty header".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if !headers.iter().all(|h| seen.insert(h.as_str())) {
            return Err(Error::Parse("duplicate column".into()));
        }
        let mut table = Table { headers, rows: Vec::new() };
        let mut cells = 0usize;
        for rec in r.records() {
            let rec = rec.map_err(parse)?;
            cells += rec.len();
            if cells > MAX_CELLS {
                return Err(Error::Parse("table too large".into()));
            }
            let row = rec
                .iter()
                .map(|s| {
                    if s.is_empty() {
                        Ok(Cell::Empty)
                    } else {
                        match s.parse::<f64>() {
                            Ok(x) if x.is_finite() => Ok(Cell::Num(x)),
                            Ok(_) => Err(Error::Parse(format!("non-finite cell `{s}`"))),
                            Err(_) => Ok(Cell::Text(s.to_string())),
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table.rows.push(row);
        }
        Ok(table)
    }
}

pub const SERIES_COLUMNS: [&str; 12] =
    ["t", "t_over_tmin", "mean_x", "mean_y", "mean_z", "var_min", "var_max", "angle", "xi2", "ratio", "energy", "total_j2"];

/// Time series in the shared schema; `t_min` fills the `t_over_tmin` column.
pub fn series_table(obs: &[Observation], t_min: Option<f64>) -> Table {
    let mut t = Table::new(&SERIES_COLUMNS);
    for o in obs {
        t.push(vec![
            o.t.into(),
            Cell::opt(t_min.map(|m| o.t / m)),
            o.mean[0].into(),
            o.mean[1].into(),
            o.mean[2].into(),
            o.var_min.into(),
            o.var_max.into(),
            Cell::opt(o.angle),
            Cell::opt(o.xi2),
            Cell::opt(o.ratio),
            o.energy.into(),
            Cell::opt(Some(o.total_j2)),
        ]);
    }
    t
}

/// Ordered key=value manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let v = value.to_string().replace(['\n', '\r'], " ");
        self.entries.insert(key.into(), v);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Manifest> {
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse(format!("bad manifest line `{line}`")))?;
            m.entries.insert(k.to_string(), v.to_string());
        }
        Ok(m)
    }

    /// Flatten a TOML document into dotted `config.` keys.
    pub fn add_toml(&mut self, prefix: &str, value: &toml::Value) {
        match value {
            toml::Value::Table(t) => {
                for (k, v) in t {
                    self.add_toml(&format!("{prefix}.{k}"), v);
                }
            }
            toml::Value::String(s) => self.set(prefix, s),
            other => self.set(prefix, other),
        }
    }
}

/// Write via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDeviation {
    pub column: String,
    /// Largest absolute difference over rows where both cells are numbers.
    pub max_abs: f64,
    /// Rows where exactly one side is empty.
    pub definedness_mismatches: usize,
    pub tolerance: f64,
}

impl ColumnDeviation {
    pub fn ok(&self) -> bool {
        self.max_abs <= self.tolerance && self.definedness_mismatches == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: usize,
    pub columns: Vec<ColumnDeviation>,
}

impl CompareReport {
    pub fn ok(&self) -> bool {
        self.columns.iter().all(ColumnDeviation::ok)
    }

    pub fn render(&self) -> String {
        let mut out = format!("rows={}\n", self.rows);
        for c in &self.columns {
            out.push_str(&format!(
                "{} max_abs={:e} tol={:e} undefined_mismatch={} {}\n",
                c.column,
                c.max_abs,
                c.tolerance,
                c.definedness_mismatches,
                if c.ok() { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Tolerance per column with a default.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tolerances {
    pub default: f64,
    pub per_column: BTreeMap<String, f64>,
}

impl Tolerances {
    pub fn uniform(tol: f64) -> Self {
        Tolerances { default: tol, per_column: BTreeMap::new() }
    }

    fn get(&self, col: &str) -> f64 {
        self.per_column.get(col).copied().unwrap_or(self.default)
    }
}

/// Per-column deviation over the numeric columns present in both tables.
/// Tables must have the same number of rows; text columns are skipped.
pub fn compare(a: &Table, b: &Table, tol: &Tolerances) -> Result<CompareReport> {
    if a.rows.len() != b.rows.len() {
        return Err(Error::Invalid(format!("row counts differ: {} vs {}", a.rows.len(), b.rows.len())));
    }
    let mut columns = Vec::new();
    for (ka, name) in a.headers.iter().enumerate() {
        let Some(kb) = b.column_index(name) else { continue };
        let mut max_abs: f64 = 0.0;
        let mut mism = 0;
        let mut numeric = false;
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            match (&ra[ka], &rb[kb]) {
                (Cell::Num(x), Cell::Num(y)) => {
                    numeric = true;
                    max_abs = max_abs.max((x - y).abs());
                }
                (Cell::Empty, Cell::Empty) => {}
                (Cell::Text(_), _) | (_, Cell::Text(_)) => {}
                _ => {
                    numeric = true;
                    mism += 1;
                }
            }
        }
        if numeric {
            columns.push(ColumnDeviation { column: name.clone(), max_abs, definedness_mismatches: mism, tolerance: tol.get(name) });
        }
    }
    if columns.is_empty() {
        return Err(Error::Invalid("no numeric columns in common".into()));
    }
    Ok(CompareReport { rows: a.rows.len(), columns })
}
