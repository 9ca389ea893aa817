//! Edge-list, matrix CSV and embedding export formats.
//!
//! Edge lists are tab-separated `i<TAB>j[<TAB>w]` lines with 0-based ids and
//! `#` comments. Undirected files list each edge once. Writers emit a
//! `# n=<count> directed=<bool>` header so isolated trailing vertices survive
//! a round trip; readers without the header take n = max id + 1.

use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::{Embedding, EmbeddingFlags, EmbeddingKind, OmnibusBlocks};
use crate::error::{RdpgError, Result};
use crate::graph::Graph;

fn parse_err(line: usize, msg: impl std::fmt::Display) -> RdpgError {
    RdpgError::Parse(format!("line {line}: {msg}"))
}

fn parse_header(comment: &str) -> (Option<usize>, Option<bool>) {
    let mut n = None;
    let mut directed = None;
    for tok in comment.split_whitespace() {
        if let Some(v) = tok.strip_prefix("n=") {
            n = v.parse().ok();
        } else if let Some(v) = tok.strip_prefix("directed=") {
            directed = v.parse().ok();
        }
    }
    (n, directed)
}

/// Reads an edge list. `directed` overrides the file header; without
/// either the graph is undirected.
pub fn read_edge_list<R: Read>(reader: R, directed: Option<bool>) -> Result<Graph> {
    let mut header_n = None;
    let mut header_directed = None;
    let mut edges = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if let Some(comment) = trimmed.strip_prefix('#') {
            let (n, d) = parse_header(comment);
            header_n = header_n.or(n);
            header_directed = header_directed.or(d);
            continue;
        }
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('\t').map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(lineno, format!("expected 2 or 3 tab-separated fields, found {}", fields.len())));
        }
        let i: usize = fields[0].parse().map_err(|e| parse_err(lineno, e))?;
        let j: usize = fields[1].parse().map_err(|e| parse_err(lineno, e))?;
        let w: f64 = match fields.get(2) {
            Some(s) => s.parse().map_err(|e| parse_err(lineno, e))?,
            None => 1.0,
        };
        if !(w >= 0.0 && w.is_finite()) {
            return Err(parse_err(lineno, format!("weight {w} must be finite and nonnegative")));
        }
        edges.push((i, j, w));
    }
    let max_id = edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
    let n = match header_n {
        Some(n) if n < max_id => return Err(RdpgError::Parse(format!("header declares n={n} but vertex id {} appears", max_id - 1))),
        Some(n) => n,
        None => max_id,
    };
    let directed = directed.or(header_directed).unwrap_or(false);
    Graph::from_edges(n, &edges, directed)
}

pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "# n={} directed={}", g.n(), g.is_directed())?;
    let a = g.adjacency();
    let n = g.n();
    for i in 0..n {
        let start = if g.is_directed() { 0 } else { i };
        for j in start..n {
            let w = a[(i, j)];
            if w == 0.0 {
                continue;
            }
            if g.is_weighted() {
                writeln!(out, "{i}\t{j}\t{w}")?;
            } else {
                writeln!(out, "{i}\t{j}")?;
            }
        }
    }
    Ok(())
}

/// Reads a headerless CSV of floats into a matrix.
pub fn read_matrix_csv<R: Read>(reader: R) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| RdpgError::Parse(e.to_string()))?;
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(idx + 1, format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let Some(first) = rows.first() else {
        return Ok(DMatrix::zeros(0, 0));
    };
    let cols = first.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(parse_err(bad + 1, format!("expected {cols} columns")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for i in 0..m.nrows() {
        wtr.write_record(m.row(i).iter().map(|v| format!("{v:e}")))
            .map_err(|e| RdpgError::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

/// JSON sidecar describing an exported embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSidecar {
    pub kind: EmbeddingKind,
    pub d: usize,
    pub spectrum: Vec<f64>,
    pub flags: EmbeddingFlags,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blocks: Option<OmnibusBlocks>,
}

impl From<&Embedding> for EmbeddingSidecar {
    fn from(e: &Embedding) -> Self {
        EmbeddingSidecar {
            kind: e.kind,
            d: e.d,
            spectrum: e.spectrum.clone(),
            flags: e.flags,
            blocks: e.blocks,
        }
    }
}

/// Writes coordinates as CSV and the sidecar as pretty JSON.
pub fn write_embedding<W1: Write, W2: Write>(e: &Embedding, csv_out: W1, json_out: W2) -> Result<()> {
    write_matrix_csv(&e.coords, csv_out)?;
    serde_json::to_writer_pretty(json_out, &EmbeddingSidecar::from(e)).map_err(|err| RdpgError::Io(err.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::from_edges(5, &[(0, 1, 1.0), (1, 3, 1.0), (2, 3, 1.0)], false).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice(), None).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn weighted_directed_round_trip() {
        let g = Graph::from_edges(3, &[(0, 1, 0.5), (1, 0, 2.0), (2, 2, 1.0)], true).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let back = read_edge_list(buf.as_slice(), None).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn comments_and_inferred_size() {
        let text = "# a comment\n0\t2\n\n# another\n2\t1\n";
        let g = read_edge_list(text.as_bytes(), None).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.adjacency()[(1, 2)], 1.0);
        assert!(matches!(read_edge_list("0 1\n".as_bytes(), None), Err(RdpgError::Parse(_))));
        assert!(matches!(read_edge_list("x\t1\n".as_bytes(), None), Err(RdpgError::Parse(_))));
    }

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -2.5, 1e-17, 3.0, 0.0, 1.0 / 3.0]);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);
        assert!(read_matrix_csv("1,2\n3\n".as_bytes()).is_err());
    }
}
