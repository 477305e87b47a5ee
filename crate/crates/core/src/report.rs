//! CSV tables, the run manifest and the text summary built from them.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

pub const MANIFEST: &str = "manifest.txt";
pub const CHECKS: &str = "checks.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Cell::Num(v)
        } else {
            Cell::Empty
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Num(v as f64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::from)
    }
}

/// Twelve significant digits; scientific notation outside `[1e-4, 1e12)`.
pub fn fmt_num(v: f64) -> String {
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    if rounded == 0.0 {
        return "0".into();
    }
    let a = rounded.abs();
    if (1e-4..1e12).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let head: Vec<String> = self.header.iter().map(|h| quote(h)).collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => fmt_num(*v),
                    Cell::Text(s) => quote(s),
                    Cell::Empty => String::new(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_csv())
    }
}

/// Checks a numeric CSV: header present, equal row widths, strictly
/// increasing first column, every non-empty cell a finite number.
pub fn check_numeric_csv(text: &str) -> Result<(), String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    let width = header.split(',').count();
    let mut prev = f64::NEG_INFINITY;
    for (n, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(format!("row {}: {} cells, header has {width}", n + 1, cells.len()));
        }
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                if c == 0 {
                    return Err(format!("row {}: empty x", n + 1));
                }
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| format!("row {}: `{cell}` is not a number", n + 1))?;
            if !v.is_finite() {
                return Err(format!("row {}: non-finite value", n + 1));
            }
            if c == 0 {
                if v <= prev {
                    return Err(format!("row {}: x not increasing", n + 1));
                }
                prev = v;
            }
        }
    }
    Ok(())
}

/// Key/value facts of one run plus the list of files it wrote.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub task: String,
    pub facts: Vec<(String, String)>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(task: &str) -> Self {
        Manifest { task: task.to_string(), ..Manifest::default() }
    }

    pub fn fact(&mut self, key: impl Into<String>, value: impl ToString) {
        self.facts.push((key.into(), value.to_string()));
    }

    pub fn num(&mut self, key: impl Into<String>, value: f64) {
        self.fact(key, fmt_num(value));
    }

    pub fn file(&mut self, name: impl Into<String>) {
        self.files.push(name.into());
    }

    pub fn render(&self) -> String {
        let mut out = format!("task = {}\n", self.task);
        for (k, v) in &self.facts {
            let _ = writeln!(out, "{k} = {v}");
        }
        for f in &self.files {
            let _ = writeln!(out, "file = {f}");
        }
        out
    }

    pub fn parse(text: &str) -> io::Result<Self> {
        let mut m = Manifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad manifest line `{line}`")))?;
            match k {
                "task" => m.task = v.to_string(),
                "file" => m.files.push(v.to_string()),
                _ => m.facts.push((k.to_string(), v.to_string())),
            }
        }
        if m.task.is_empty() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "manifest has no task line"));
        }
        Ok(m)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.facts.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join(MANIFEST), self.render())
    }
}

/// One-page text summary of the run stored in `dir`. Fails when the manifest
/// or any file it lists is missing.
pub fn report_summary(dir: &Path) -> io::Result<String> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let m = Manifest::parse(&text)?;
    let missing: Vec<&str> = m.files.iter().map(String::as_str).filter(|f| !dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        return Err(io::Error::new(
            io::ErrorKind::NotFound,
            format!("missing artifacts in {}: {}", dir.display(), missing.join(", ")),
        ));
    }
    let mut out = format!("run: {}\n", m.task);
    let width = m.facts.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &m.facts {
        let _ = writeln!(out, "  {k:<width$}  {v}");
    }
    if m.files.iter().any(|f| f == CHECKS) {
        let checks = fs::read_to_string(dir.join(CHECKS))?;
        let lines: Vec<&str> = checks.lines().filter(|l| !l.is_empty()).collect();
        let failed = lines.iter().filter(|l| l.starts_with("FAIL")).count();
        let _ = writeln!(out, "checks: {} passed, {failed} failed", lines.len() - failed);
        for l in lines {
            let _ = writeln!(out, "  {l}");
        }
    }
    let _ = writeln!(out, "artifacts: {}", m.files.join(", "));
    Ok(out)
}
