//! Plain-text artifact formats.
//!
//! Every file starts with `# apd-pnr <version> spec=<hash>`. Further `#`
//! lines carry `key = value` metadata; the first other line names the
//! columns, and each following line is one whitespace-separated row. Floats
//! are written in shortest round-trip form, so reading a file back gives the
//! exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::detector::GateRecord;
use crate::error::{Error, Result};
use crate::waveform::{AmplitudeHistogram, WaveformTrace};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named file's contents, not yet written.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    pub fn new(name: impl Into<String>, contents: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            contents: contents.into(),
        }
    }

    pub fn text(&self) -> &str {
        std::str::from_utf8(&self.contents).expect("artifacts are UTF-8")
    }
}

pub fn header(spec_hash: &str) -> String {
    format!("# apd-pnr {VERSION} spec={spec_hash}\n")
}

/// Write all artifacts into `dir`, each through a temporary file and a
/// rename. If any write fails, the temporaries are removed and no artifact
/// is left behind.
pub fn write_artifacts(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(artifacts.len());
    let stage = |staged: &mut Vec<(PathBuf, PathBuf)>| -> Result<()> {
        for a in artifacts {
            let tmp = dir.join(format!(".{}.tmp", a.name));
            staged.push((tmp.clone(), dir.join(&a.name)));
            fs::write(&tmp, &a.contents)?;
        }
        Ok(())
    };
    if let Err(e) = stage(&mut staged) {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, dst) in staged {
        fs::rename(&tmp, &dst)?;
        written.push(dst);
    }
    Ok(written)
}

pub fn trace_to_string(trace: &WaveformTrace, spec_hash: &str) -> String {
    let mut s = header(spec_hash);
    let _ = writeln!(s, "# sample_rate = {}", trace.sample_rate);
    let _ = writeln!(s, "# start_time = {}", trace.start_time);
    s.push_str("sample_mv\n");
    for v in &trace.samples {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn histogram_to_string(h: &AmplitudeHistogram, spec_hash: &str) -> String {
    let mut s = header(spec_hash);
    let _ = writeln!(s, "# total = {}", h.total);
    let _ = writeln!(s, "# underflow = {}", h.underflow);
    let _ = writeln!(s, "# overflow = {}", h.overflow);
    s.push_str("bin_left bin_right count\n");
    for (i, c) in h.counts.iter().enumerate() {
        let _ = writeln!(s, "{} {} {c}", h.bin_edges[i], h.bin_edges[i + 1]);
    }
    s
}

pub fn records_to_string(records: &[GateRecord], spec_hash: &str) -> String {
    let mut s = header(spec_hash);
    s.push_str("gate_index illuminated n_incident n_detected n_dark n_afterpulse amplitude_mv\n");
    for r in records {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            r.gate_index,
            u8::from(r.illuminated),
            r.n_incident,
            r.n_detected,
            r.n_dark,
            r.n_afterpulse,
            r.amplitude_mv
        );
    }
    s
}

/// Metadata lines and data rows of a columnar file.
struct Table<'a> {
    path: &'a Path,
    meta: Vec<(&'a str, &'a str, usize)>,
    columns: Vec<&'a str>,
    /// `(line number, fields)`.
    rows: Vec<(usize, Vec<&'a str>)>,
}

impl<'a> Table<'a> {
    fn parse(text: &'a str, path: &'a Path) -> Result<Self> {
        let mut meta = Vec::new();
        let mut columns = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if let Some(c) = t.strip_prefix('#') {
                if let Some((k, v)) = c.split_once(" = ") {
                    meta.push((k.trim(), v.trim(), line_no));
                }
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if columns.is_none() {
                columns = Some(fields);
            } else {
                rows.push((line_no, fields));
            }
        }
        let columns = columns.ok_or_else(|| parse_err(path, 1, "missing column header"))?;
        Ok(Self {
            path,
            meta,
            columns,
            rows,
        })
    }

    fn expect_columns(&self, want: &[&str]) -> Result<()> {
        if self.columns != want {
            let line = self
                .rows
                .first()
                .map_or(1, |r| r.0.saturating_sub(1).max(1));
            return Err(parse_err(
                self.path,
                line,
                format!(
                    "expected columns `{}`, found `{}`",
                    want.join(" "),
                    self.columns.join(" ")
                ),
            ));
        }
        Ok(())
    }

    fn meta<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.meta.iter().find(|m| m.0 == key) {
            None => Ok(None),
            Some(&(_, v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| parse_err(self.path, line, format!("bad value `{v}` for {key}"))),
        }
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    fields: &[&str],
    i: usize,
    name: &str,
) -> Result<T> {
    fields[i]
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} `{}`", fields[i])))
}

pub fn parse_trace(text: &str, path: &Path) -> Result<WaveformTrace> {
    let t = Table::parse(text, path)?;
    t.expect_columns(&["sample_mv"])?;
    let sample_rate: f64 = t
        .meta("sample_rate")?
        .ok_or_else(|| parse_err(path, 1, "missing `# sample_rate = ...`"))?;
    let start_time: f64 = t
        .meta("start_time")?
        .ok_or_else(|| parse_err(path, 1, "missing `# start_time = ...`"))?;
    let mut samples = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        if f.len() != 1 {
            return Err(parse_err(
                path,
                *line,
                format!("expected 1 field, found {}", f.len()),
            ));
        }
        let v: f64 = field(path, *line, f, 0, "sample")?;
        if !v.is_finite() {
            return Err(parse_err(path, *line, "sample is not finite"));
        }
        samples.push(v);
    }
    WaveformTrace::new(sample_rate, start_time, samples)
        .map_err(|e| parse_err(path, 1, e.to_string()))
}

pub fn parse_histogram(text: &str, path: &Path) -> Result<AmplitudeHistogram> {
    let t = Table::parse(text, path)?;
    t.expect_columns(&["bin_left", "bin_right", "count"])?;
    if t.rows.is_empty() {
        return Err(parse_err(
            path,
            text.lines().count().max(1),
            "histogram has no bins",
        ));
    }
    let mut edges = Vec::with_capacity(t.rows.len() + 1);
    let mut counts = Vec::with_capacity(t.rows.len());
    for (line, f) in &t.rows {
        if f.len() != 3 {
            return Err(parse_err(
                path,
                *line,
                format!("expected 3 fields, found {}", f.len()),
            ));
        }
        let left: f64 = field(path, *line, f, 0, "bin_left")?;
        let right: f64 = field(path, *line, f, 1, "bin_right")?;
        let count: u64 = field(path, *line, f, 2, "count")?;
        if !(left.is_finite() && right.is_finite() && right > left) {
            return Err(parse_err(
                path,
                *line,
                "bin edges must be finite with bin_right > bin_left",
            ));
        }
        match edges.last() {
            None => edges.push(left),
            Some(&prev) if prev == left => {}
            Some(&prev) => {
                return Err(parse_err(
                    path,
                    *line,
                    format!("bin starts at {left} but the previous bin ends at {prev}"),
                ));
            }
        }
        edges.push(right);
        counts.push(count);
    }
    let mut h = AmplitudeHistogram::from_parts(edges, counts)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    h.underflow = t.meta("underflow")?.unwrap_or(0);
    h.overflow = t.meta("overflow")?.unwrap_or(0);
    Ok(h)
}

pub fn read_trace(path: &Path) -> Result<WaveformTrace> {
    parse_trace(&fs::read_to_string(path)?, path)
}

pub fn read_histogram(path: &Path) -> Result<AmplitudeHistogram> {
    parse_histogram(&fs::read_to_string(path)?, path)
}
