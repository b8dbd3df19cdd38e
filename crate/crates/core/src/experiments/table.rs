//! Long-format result tables.
//!
//! CSV columns: `schema_version, experiment, method, ordering, n, replicate,
//! metric, value`. `replicate` is empty for aggregate rows. Numbers are
//! written in shortest round-trip form so reruns compare byte for byte.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub experiment: String,
    pub method: String,
    /// Ordering label for SMC runs; document label for LDA rows; empty otherwise.
    pub ordering: String,
    pub n: usize,
    pub replicate: Option<usize>,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTable {
    rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(
        &mut self,
        experiment: &str,
        method: &str,
        ordering: &str,
        n: usize,
        replicate: Option<usize>,
        metric: &str,
        value: f64,
    ) {
        self.rows.push(ResultRow {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            method: method.into(),
            ordering: ordering.into(),
            n,
            replicate,
            metric: metric.into(),
            value,
        });
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    pub fn rows(&self) -> &[ResultRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows matching `metric`, optionally restricted to one method.
    pub fn select<'a>(
        &'a self,
        metric: &'a str,
        method: Option<&'a str>,
    ) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.metric == metric && method.is_none_or(|m| r.method == m))
    }

    /// Acceptance checks recorded as `pass` rows with value 0.
    pub fn failures(&self) -> Vec<&ResultRow> {
        self.rows
            .iter()
            .filter(|r| r.metric == "pass" && r.value == 0.0)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<ResultRow>, _>>()?;
        Ok(Self { rows })
    }
}
