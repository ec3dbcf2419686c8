//! Text formats: point CSVs, edge lists, label sidecars and score reports.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::detector::ScoreResult;
use crate::error::{Error, Result};
use crate::graph::{Graph, PointSet};

/// Reads a CSV of numeric rows. A first row that does not parse as numbers is taken
/// to be a header and skipped.
pub fn read_points(path: &Path) -> Result<PointSet> {
    read_points_from(File::open(path)?)
}

pub fn read_points_from<R: Read>(reader: R) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut dim: Option<usize> = None;
    let mut data = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if idx == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    msg: format!("non-numeric field: {e}"),
                })
            }
        };
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {d} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        data.extend(row);
    }
    match dim {
        Some(d) => PointSet::new(d, data),
        None => Ok(PointSet::empty(0)),
    }
}

pub fn write_points(path: &Path, points: &PointSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let header: Vec<String> = (0..points.dim()).map(|c| format!("x{c}")).collect();
    w.write_record(&header)?;
    for row in points.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `u v w` lines (0-based ids, each undirected edge once). Blank lines and
/// lines starting with `#` or `%` are ignored; a missing weight means 1.
pub fn read_edge_list(path: &Path) -> Result<Graph> {
    read_edge_list_from(BufReader::new(File::open(path)?))
}

pub fn read_edge_list_from<R: BufRead>(reader: R) -> Result<Graph> {
    let mut edges = Vec::new();
    let mut n = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') || text.starts_with('%') {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: idx + 1, msg };
        let fields: Vec<&str> = text.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(bad(format!("expected `u v w`, found {} fields", fields.len())));
        }
        let u: usize = fields[0].parse().map_err(|e| bad(format!("node id: {e}")))?;
        let v: usize = fields[1].parse().map_err(|e| bad(format!("node id: {e}")))?;
        let w: f64 = match fields.get(2) {
            Some(f) => f.parse().map_err(|e| bad(format!("weight: {e}")))?,
            None => 1.0,
        };
        n = n.max(u + 1).max(v + 1);
        edges.push((u, v, w));
    }
    Graph::from_edges(n, edges)
}

pub fn write_labels(path: &Path, labels: &[bool]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["index", "label"])?;
    for (i, &l) in labels.iter().enumerate() {
        w.write_record([i.to_string(), u8::from(l).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an `index,label` sidecar; labels are 1 for anomalies.
pub fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let bad = |msg: &str| Error::Parse {
            line: i + 2,
            msg: msg.to_string(),
        };
        let index: usize = record
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad index"))?;
        if index != out.len() {
            return Err(bad("labels must be listed in index order"));
        }
        match record.get(1) {
            Some("0") => out.push(false),
            Some("1") => out.push(true),
            _ => return Err(bad("label must be 0 or 1")),
        }
    }
    Ok(out)
}

pub const REPORT_HEADER: [&str; 7] = [
    "index",
    "score",
    "is_anomaly",
    "pruned",
    "method",
    "elapsed_s",
    "neighbors_examined",
];

/// Report writer that flushes after every row, for streaming output.
pub struct ReportWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ReportWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(REPORT_HEADER)?;
        inner.flush()?;
        Ok(ReportWriter { inner })
    }

    pub fn row(&mut self, index: usize, r: &ScoreResult) -> Result<()> {
        self.inner.write_record([
            index.to_string(),
            r.score.to_string(),
            r.is_anomaly.to_string(),
            r.pruned.to_string(),
            r.method.to_string(),
            format!("{:.9}", r.elapsed),
            r.neighbors_examined.to_string(),
        ])?;
        self.inner.flush()?;
        Ok(())
    }
}

/// Writes one report row per scored point.
pub fn write_report<W: Write>(out: W, rows: &[(usize, ScoreResult)]) -> Result<()> {
    let mut w = ReportWriter::new(out)?;
    for (i, r) in rows {
        w.row(*i, r)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let p = read_points_from("a,b\n1,2\n3,4.5\n".as_bytes()).unwrap();
        assert_eq!((p.len(), p.dim()), (2, 2));
        assert_eq!(p.row(1), &[3.0, 4.5]);
        let q = read_points_from("1,2\n3,4\n".as_bytes()).unwrap();
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn ragged_and_garbage_rows_are_rejected() {
        assert!(matches!(
            read_points_from("1,2\n3\n".as_bytes()),
            Err(Error::Parse { .. })
        ));
        let err = read_points_from("1,2\n3,x\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
        assert!(matches!(
            read_points_from("1,nan\n".as_bytes()),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn empty_file_gives_no_points() {
        assert!(read_points_from("".as_bytes()).unwrap().is_empty());
        assert!(read_points_from("x,y\n".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn edge_list_with_comments() {
        let g = read_edge_list_from("# fig\n0 1 1\n1 2 1.5\n\n2 3\n".as_bytes()).unwrap();
        assert_eq!(g.node_count(), 4);
        assert_eq!(g.weight(1, 2), Some(1.5));
        assert_eq!(g.weight(3, 2), Some(1.0));
        assert!(read_edge_list_from("0 1 2 3\n".as_bytes()).is_err());
    }
}
