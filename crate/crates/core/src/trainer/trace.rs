use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One evaluation row of a training run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub loss_total: f64,
    pub loss_eq: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub sigma: f64,
    pub eff_width: f64,
    pub rmae: f64,
    pub rmse: f64,
    pub wall_ms: f64,
}

pub const TRACE_COLUMNS: [&str; 10] = [
    "iter",
    "loss_total",
    "loss_eq",
    "loss_ic",
    "loss_bc",
    "sigma",
    "eff_width",
    "rmae",
    "rmse",
    "wall_ms",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Format {
        what: "trace csv",
        detail: e.to_string(),
    }
}

pub fn write_trace_to<W: std::io::Write>(w: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    if rows.is_empty() {
        w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| csv_err(e.into()))
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace_to(std::io::BufWriter::new(f), rows)
}

pub fn read_trace_from<R: std::io::Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(csv_err)?;
    if header.iter().ne(TRACE_COLUMNS) {
        return Err(Error::Format {
            what: "trace csv",
            detail: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    rd.deserialize().map(|r| r.map_err(csv_err)).collect()
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace_from(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(i: usize, v: f64) -> TraceRow {
        TraceRow {
            iter: i,
            loss_total: v,
            loss_eq: v / 3.0,
            loss_ic: 1e-300,
            loss_bc: 0.0,
            sigma: 1e-12,
            eff_width: 1e-4,
            rmae: 0.5,
            rmse: 0.25,
            wall_ms: 12.5,
        }
    }

    #[test]
    fn header_matches_columns() {
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &[row(1, 2.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_COLUMNS.join(","));
    }

    #[test]
    fn empty_trace_keeps_header() {
        let mut buf = Vec::new();
        write_trace_to(&mut buf, &[]).unwrap();
        assert!(read_trace_from(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn wrong_header_is_rejected() {
        assert!(read_trace_from("a,b\n1,2\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn rows_round_trip_exactly(vals in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..20)) {
            let rows: Vec<TraceRow> = vals.iter().enumerate().map(|(i, &v)| row(i, v)).collect();
            let mut buf = Vec::new();
            write_trace_to(&mut buf, &rows).unwrap();
            prop_assert_eq!(read_trace_from(buf.as_slice()).unwrap(), rows);
        }
    }
}
