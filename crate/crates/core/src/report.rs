//! Result records with JSON and CSV encodings.
//!
//! CSV rows use the fixed columns
//! `algo,graph,n,m,k,eps,seed,iter,node,samples,cfcc,seconds`, one row per
//! greedy iteration. `cfcc` is the value of the group chosen so far and
//! `node` is the original label of the node added in that iteration.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{CfcmError, Result};
use crate::graph::Graph;
use crate::greedy::SelectionTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub algorithm: String,
    pub graph: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    /// Chosen nodes as original labels, in selection order.
    pub chosen: Vec<u64>,
    /// Forests sampled per iteration.
    pub samples: Vec<u64>,
    /// CFCC of each prefix of `chosen`.
    pub prefix_cfcc: Vec<f64>,
    /// Wall time per iteration.
    pub iteration_seconds: Vec<f64>,
    /// CFCC of the full group.
    pub cfcc: f64,
    /// How `cfcc` was computed, e.g. `dense` or `cg`.
    pub evaluation: String,
    pub seconds: f64,
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub algo: String,
    pub graph: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub eps: f64,
    pub seed: u64,
    pub iter: usize,
    pub node: u64,
    pub samples: u64,
    pub cfcc: f64,
    pub seconds: f64,
}

pub const CSV_HEADER: [&str; 12] = [
    "algo", "graph", "n", "m", "k", "eps", "seed", "iter", "node", "samples", "cfcc", "seconds",
];

fn encoding(e: impl std::fmt::Display) -> CfcmError {
    CfcmError::Encoding(e.to_string())
}

impl ResultRecord {
    /// Builds a record from a trace and the CFCC of each of its prefixes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_trace(
        algorithm: &str,
        graph_name: &str,
        graph: &Graph,
        eps: f64,
        seed: u64,
        trace: &SelectionTrace,
        prefix_cfcc: Vec<f64>,
        evaluation: &str,
    ) -> Result<Self> {
        if prefix_cfcc.len() != trace.len() {
            return Err(CfcmError::DimensionMismatch(format!(
                "{} prefix values for {} iterations",
                prefix_cfcc.len(),
                trace.len()
            )));
        }
        Ok(ResultRecord {
            algorithm: algorithm.to_string(),
            graph: graph_name.to_string(),
            n: graph.n(),
            m: graph.m(),
            k: trace.len(),
            eps,
            seed,
            chosen: trace.iterations.iter().map(|r| graph.label(r.node)).collect(),
            samples: trace.iterations.iter().map(|r| r.samples).collect(),
            cfcc: prefix_cfcc.last().copied().unwrap_or(0.0),
            prefix_cfcc,
            iteration_seconds: trace.iterations.iter().map(|r| r.seconds).collect(),
            evaluation: evaluation.to_string(),
            seconds: trace.total_seconds(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(encoding)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(encoding)
    }

    pub fn csv_rows(&self) -> Vec<CsvRow> {
        (0..self.chosen.len())
            .map(|i| CsvRow {
                algo: self.algorithm.clone(),
                graph: self.graph.clone(),
                n: self.n,
                m: self.m,
                k: self.k,
                eps: self.eps,
                seed: self.seed,
                iter: i + 1,
                node: self.chosen[i],
                samples: self.samples[i],
                cfcc: self.prefix_cfcc[i],
                seconds: self.iteration_seconds[i],
            })
            .collect()
    }
}

/// Writes CSV rows with the fixed header.
pub fn write_csv_rows<W: Write>(rows: &[CsvRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER).map_err(encoding)?;
    for r in rows {
        w.serialize(r).map_err(encoding)?;
    }
    w.flush().map_err(encoding)
}

pub fn write_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let rows: Vec<CsvRow> = records.iter().flat_map(|r| r.csv_rows()).collect();
    write_csv_rows(&rows, out)
}

pub fn read_csv_rows<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers().map_err(encoding)?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(CfcmError::Encoding(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(encoding)).collect()
}

/// Regroups rows into records: consecutive rows with `iter` counting up
/// from 1 form one record. The evaluation method is not part of the CSV
/// layout and comes back as `"csv"`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRecord>> {
    let mut out: Vec<ResultRecord> = Vec::new();
    for row in read_csv_rows(input)? {
        let start_new = match out.last() {
            None => true,
            Some(rec) => row.iter != rec.chosen.len() + 1,
        };
        if start_new {
            if row.iter != 1 {
                return Err(CfcmError::Encoding(format!("record starts at iteration {}", row.iter)));
            }
            out.push(ResultRecord {
                algorithm: row.algo.clone(),
                graph: row.graph.clone(),
                n: row.n,
                m: row.m,
                k: row.k,
                eps: row.eps,
                seed: row.seed,
                chosen: Vec::new(),
                samples: Vec::new(),
                prefix_cfcc: Vec::new(),
                iteration_seconds: Vec::new(),
                cfcc: 0.0,
                evaluation: "csv".into(),
                seconds: 0.0,
            });
        }
        let rec = out.last_mut().unwrap();
        rec.chosen.push(row.node);
        rec.samples.push(row.samples);
        rec.prefix_cfcc.push(row.cfcc);
        rec.iteration_seconds.push(row.seconds);
        rec.cfcc = row.cfcc;
        rec.seconds += row.seconds;
    }
    Ok(out)
}
