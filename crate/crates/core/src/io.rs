//! CSV serialization for every artifact the toolkit reads or writes.
//!
//! Every output file begins with a `#` comment line echoing the resolved
//! configuration that produced it, so results are self-describing. Readers
//! skip `#` comments. Floating-point values are written in Rust's shortest
//! round-trip form, so a file read back reproduces the original values
//! bit for bit.

use crate::data::ReturnSeries;
use crate::filters::FilterRecord;
use crate::model::ParameterVector;
use crate::pmmh::McmcOutput;
use chrono::NaiveDate;
use csv::{ReaderBuilder, StringRecord, Trim, Writer, WriterBuilder};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: expected header `{expected}`, found `{found}`")]
    BadHeader {
        path: String,
        expected: String,
        found: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::Io { path: path.display().to_string(), source }
}

fn csv_err(path: &Path, source: csv::Error) -> IoError {
    IoError::Csv { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// One record of a posterior samples file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorRow {
    pub iteration: usize,
    pub theta: ParameterVector,
    pub avg_loglike: f64,
    pub accepted: bool,
}

/// A filter record stream labeled with the algorithm that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecords {
    pub algorithm_id: String,
    pub records: Vec<FilterRecord>,
}

/// Open `path` for writing, emit the configuration echo as `#` comment
/// lines, and hand back a CSV writer positioned after them.
fn commented_writer(path: &Path, comment: &str) -> Result<Writer<BufWriter<File>>, IoError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut buf = BufWriter::new(file);
    for line in comment.lines() {
        writeln!(buf, "# {line}").map_err(|e| io_err(path, e))?;
    }
    Ok(WriterBuilder::new().from_writer(buf))
}

fn commented_reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .trim(Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))
}

fn check_header(
    path: &Path,
    reader: &mut csv::Reader<File>,
    expected: &[&str],
) -> Result<(), IoError> {
    let found = reader.headers().map_err(|e| csv_err(path, e))?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(IoError::BadHeader {
            path: path.display().to_string(),
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn record_line(record: &StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn expect_width(path: &Path, record: &StringRecord, width: usize) -> Result<(), IoError> {
    if record.len() != width {
        return Err(parse_err(
            path,
            record_line(record),
            format!("expected {width} fields, found {}", record.len()),
        ));
    }
    Ok(())
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn parse_f64(path: &Path, line: u64, s: &str, name: &str) -> Result<f64, IoError> {
    s.parse()
        .map_err(|e| parse_err(path, line, format!("bad {name} `{s}`: {e}")))
}

fn parse_usize(path: &Path, line: u64, s: &str, name: &str) -> Result<usize, IoError> {
    s.parse()
        .map_err(|e| parse_err(path, line, format!("bad {name} `{s}`: {e}")))
}

const FILTER_COLUMNS: [&str; 5] = [
    "time_index",
    "log_cond_evidence",
    "filter_mean",
    "ess",
    "algorithm_id",
];

/// Write a filter record stream: one row per time index, tagged with the
/// algorithm id.
pub fn write_filter_records(
    path: &Path,
    comment: &str,
    algorithm_id: &str,
    records: &[FilterRecord],
) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(FILTER_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record([
            r.time_index.to_string(),
            fmt(r.log_cond_evidence),
            fmt(r.filter_mean),
            fmt(r.ess),
            algorithm_id.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_filter_records(path: &Path) -> Result<LabeledRecords, IoError> {
    let mut reader = commented_reader(path)?;
    check_header(path, &mut reader, &FILTER_COLUMNS)?;
    let mut records = Vec::new();
    let mut algorithm_id = String::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        expect_width(path, &record, 5)?;
        let line = record_line(&record);
        records.push(FilterRecord {
            time_index: parse_usize(path, line, &record[0], "time_index")?,
            log_cond_evidence: parse_f64(path, line, &record[1], "log_cond_evidence")?,
            filter_mean: parse_f64(path, line, &record[2], "filter_mean")?,
            ess: parse_f64(path, line, &record[3], "ess")?,
        });
        if algorithm_id.is_empty() {
            algorithm_id = record[4].to_string();
        } else if algorithm_id != record[4] {
            return Err(parse_err(
                path,
                line,
                format!(
                    "mixed algorithm ids `{algorithm_id}` and `{}` in one file",
                    &record[4]
                ),
            ));
        }
    }
    Ok(LabeledRecords { algorithm_id, records })
}

const POSTERIOR_COLUMNS: [&str; 7] = [
    "iteration",
    "mu",
    "phi",
    "sigma_sq",
    "rho",
    "avg_loglike",
    "accepted",
];

/// Write a posterior chain, one row per iteration, acceptance as 0/1.
pub fn write_posterior_samples(
    path: &Path,
    comment: &str,
    output: &McmcOutput,
) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(POSTERIOR_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (i, theta) in output.samples.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            fmt(theta.mu),
            fmt(theta.phi),
            fmt(theta.sigma_sq),
            fmt(theta.rho),
            fmt(output.avg_loglikes[i]),
            if output.accepted[i] { "1" } else { "0" }.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_posterior_samples(path: &Path) -> Result<Vec<PosteriorRow>, IoError> {
    let mut reader = commented_reader(path)?;
    check_header(path, &mut reader, &POSTERIOR_COLUMNS)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        expect_width(path, &record, 7)?;
        let line = record_line(&record);
        let mu = parse_f64(path, line, &record[1], "mu")?;
        let phi = parse_f64(path, line, &record[2], "phi")?;
        let sigma_sq = parse_f64(path, line, &record[3], "sigma_sq")?;
        let rho = parse_f64(path, line, &record[4], "rho")?;
        let theta = ParameterVector::new(mu, phi, sigma_sq, rho)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        let accepted = match &record[6] {
            "1" => true,
            "0" => false,
            s => return Err(parse_err(path, line, format!("bad accepted flag `{s}`"))),
        };
        rows.push(PosteriorRow {
            iteration: parse_usize(path, line, &record[0], "iteration")?,
            theta,
            avg_loglike: parse_f64(path, line, &record[5], "avg_loglike")?,
            accepted,
        });
    }
    Ok(rows)
}

const RETURNS_COLUMNS: [&str; 2] = ["date", "return_pct"];

pub fn write_returns(path: &Path, comment: &str, series: &ReturnSeries) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(RETURNS_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (date, value) in series.dates.iter().zip(&series.returns) {
        w.write_record([date.to_string(), fmt(*value)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_returns(path: &Path) -> Result<ReturnSeries, IoError> {
    let mut reader = commented_reader(path)?;
    check_header(path, &mut reader, &RETURNS_COLUMNS)?;
    let mut dates = Vec::new();
    let mut returns = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        expect_width(path, &record, 2)?;
        let line = record_line(&record);
        let date: NaiveDate = record[0]
            .parse()
            .map_err(|e| parse_err(path, line, format!("bad date `{}`: {e}", &record[0])))?;
        dates.push(date);
        returns.push(parse_f64(path, line, &record[1], "return_pct")?);
    }
    Ok(ReturnSeries { dates, returns })
}

/// Write a two-column table (`lag,value`) of autocorrelations.
pub fn write_acf(path: &Path, comment: &str, acf: &[f64]) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(["lag", "value"]).map_err(|e| csv_err(path, e))?;
    for (lag, value) in acf.iter().enumerate() {
        w.write_record([lag.to_string(), fmt(*value)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Write a two-column table (`iteration,value`) of chain values.
pub fn write_trace(path: &Path, comment: &str, series: &[f64]) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(["iteration", "value"])
        .map_err(|e| csv_err(path, e))?;
    for (i, value) in series.iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt(*value)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Write a wide table keyed by time index: header `time_index,<labels...>`,
/// one column per labeled series.
pub fn write_wide_table(
    path: &Path,
    comment: &str,
    labels: &[String],
    time_indices: &[usize],
    columns: &[Vec<f64>],
) -> Result<(), IoError> {
    debug_assert_eq!(labels.len(), columns.len());
    let mut w = commented_writer(path, comment)?;
    let header: Vec<&str> = std::iter::once("time_index")
        .chain(labels.iter().map(String::as_str))
        .collect();
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (row, &t) in time_indices.iter().enumerate() {
        let mut fields = vec![t.to_string()];
        for col in columns {
            fields.push(fmt(col[row]));
        }
        w.write_record(&fields).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// One row of a long-format parameter cloud table: a weighted parameter
/// draw belonging to one replicate of one algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudRow {
    pub algorithm: String,
    pub replicate: usize,
    pub particle_index: usize,
    pub theta: ParameterVector,
    pub weight: f64,
}

const CLOUD_COLUMNS: [&str; 8] = [
    "algorithm",
    "replicate",
    "particle_index",
    "mu",
    "phi",
    "sigma_sq",
    "rho",
    "weight",
];

/// Write a long-format table of weighted parameter draws, one block per
/// (algorithm, replicate) pair.
pub fn write_parameter_clouds(
    path: &Path,
    comment: &str,
    rows: &[CloudRow],
) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(CLOUD_COLUMNS).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.replicate.to_string(),
            r.particle_index.to_string(),
            fmt(r.theta.mu),
            fmt(r.theta.phi),
            fmt(r.theta.sigma_sq),
            fmt(r.theta.rho),
            fmt(r.weight),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_parameter_clouds(path: &Path) -> Result<Vec<CloudRow>, IoError> {
    let mut reader = commented_reader(path)?;
    check_header(path, &mut reader, &CLOUD_COLUMNS)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(path, e))?;
        expect_width(path, &record, 8)?;
        let line = record_line(&record);
        let mu = parse_f64(path, line, &record[3], "mu")?;
        let phi = parse_f64(path, line, &record[4], "phi")?;
        let sigma_sq = parse_f64(path, line, &record[5], "sigma_sq")?;
        let rho = parse_f64(path, line, &record[6], "rho")?;
        let theta = ParameterVector::new(mu, phi, sigma_sq, rho)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        rows.push(CloudRow {
            algorithm: record[0].to_string(),
            replicate: parse_usize(path, line, &record[1], "replicate")?,
            particle_index: parse_usize(path, line, &record[2], "particle_index")?,
            theta,
            weight: parse_f64(path, line, &record[7], "weight")?,
        });
    }
    Ok(rows)
}

/// Per-parameter summary rows: `parameter,mean,lower_2_5,upper_97_5,rhat`
/// with an empty rhat field when not computed.
pub fn write_parameter_report(
    path: &Path,
    comment: &str,
    rows: &[(String, crate::diagnostics::PosteriorSummary, Option<f64>)],
) -> Result<(), IoError> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(["parameter", "mean", "lower_2_5", "upper_97_5", "rhat"])
        .map_err(|e| csv_err(path, e))?;
    for (name, summary, rhat) in rows {
        w.write_record([
            name.clone(),
            fmt(summary.mean),
            fmt(summary.lower),
            fmt(summary.upper),
            rhat.map(fmt).unwrap_or_default(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn record(t: usize, v: f64) -> FilterRecord {
        FilterRecord {
            time_index: t,
            log_cond_evidence: v,
            filter_mean: v * 0.5,
            ess: 42.25,
        }
    }

    #[test]
    fn filter_records_round_trip_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        let records = vec![
            record(1, -1.234567890123456789),
            record(2, std::f64::consts::PI),
            record(3, -0.000012345),
        ];
        write_filter_records(&path, "algo=sisr seed=7", "sisr", &records).unwrap();
        let back = read_filter_records(&path).unwrap();
        assert_eq!(back.algorithm_id, "sisr");
        assert_eq!(back.records.len(), 3);
        for (a, b) in records.iter().zip(&back.records) {
            assert_eq!(a.time_index, b.time_index);
            assert_eq!(a.log_cond_evidence.to_bits(), b.log_cond_evidence.to_bits());
            assert_eq!(a.filter_mean.to_bits(), b.filter_mean.to_bits());
            assert_eq!(a.ess.to_bits(), b.ess.to_bits());
        }
    }

    #[test]
    fn comment_lines_start_with_hash_and_are_skipped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_filter_records(&path, "n=100 seed=1", "lw1", &[record(1, 0.5)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# n=100 seed=1\n"));
        let back = read_filter_records(&path).unwrap();
        assert_eq!(back.records.len(), 1);
    }

    #[test]
    fn posterior_samples_round_trip() {
        use crate::pmmh::McmcOutput;
        let dir = tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let samples = vec![
            ParameterVector::new(-0.731, 0.9512, 0.0312, -0.412).unwrap(),
            ParameterVector::new(0.25, 0.8, 0.05, 0.3).unwrap(),
        ];
        let out = McmcOutput {
            samples: samples.clone(),
            accepted: vec![true, false],
            avg_loglikes: vec![-101.25, -101.25],
            acceptance_rate: 0.0,
        };
        write_posterior_samples(&path, "k=7", &out).unwrap();
        let rows = read_posterior_samples(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].iteration, 1);
        assert_eq!(rows[0].theta, samples[0]);
        assert!(rows[0].accepted);
        assert!(!rows[1].accepted);
        assert_eq!(rows[1].avg_loglike.to_bits(), (-101.25f64).to_bits());
    }

    #[test]
    fn empty_posterior_file_keeps_header_only() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let out = McmcOutput {
            samples: vec![],
            accepted: vec![],
            avg_loglikes: vec![],
            acceptance_rate: 0.0,
        };
        write_posterior_samples(&path, "iterations=0", &out).unwrap();
        assert!(read_posterior_samples(&path).unwrap().is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("iteration,mu,phi,sigma_sq,rho,avg_loglike,accepted"));
    }

    #[test]
    fn returns_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("returns.csv");
        let series = ReturnSeries {
            dates: vec![
                NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
                NaiveDate::from_ymd_opt(2020, 1, 3).unwrap(),
            ],
            returns: vec![1.9802627296179712, -69.31471805599453],
        };
        write_returns(&path, "source=test", &series).unwrap();
        let back = read_returns(&path).unwrap();
        assert_eq!(back, series);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(
            &path,
            "# comment\ntime_index,log_cond_evidence,filter_mean,ess,algorithm_id\n1,abc,0,10,sisr\n",
        )
        .unwrap();
        match read_filter_records(&path) {
            Err(IoError::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_mismatch_is_detected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "wrong,header\n1,2\n").unwrap();
        assert!(matches!(
            read_filter_records(&path),
            Err(IoError::BadHeader { .. })
        ));
        assert!(matches!(read_returns(&path), Err(IoError::BadHeader { .. })));
    }

    #[test]
    fn wide_table_layout() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("simplex.csv");
        write_wide_table(
            &path,
            "algs=sisr,lw1",
            &["sisr".to_string(), "lw1".to_string()],
            &[1, 2],
            &[vec![0.5, 0.25], vec![0.5, 0.75]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# algs=sisr,lw1"));
        assert_eq!(lines.next(), Some("time_index,sisr,lw1"));
        assert_eq!(lines.next(), Some("1,0.5,0.5"));
        assert_eq!(lines.next(), Some("2,0.25,0.75"));
    }

    #[test]
    fn acf_trace_and_report_tables() {
        let dir = tempdir().unwrap();
        let acf_path = dir.path().join("acf.csv");
        write_acf(&acf_path, "param=mu", &[1.0, -0.5]).unwrap();
        let text = std::fs::read_to_string(&acf_path).unwrap();
        assert!(text.contains("lag,value\n0,1\n1,-0.5\n"));

        let trace_path = dir.path().join("trace.csv");
        write_trace(&trace_path, "param=mu", &[0.25, 0.5]).unwrap();
        let text = std::fs::read_to_string(&trace_path).unwrap();
        assert!(text.contains("iteration,value\n1,0.25\n2,0.5\n"));

        let report_path = dir.path().join("report.csv");
        let summary = crate::diagnostics::PosteriorSummary {
            mean: 0.5,
            lower: 0.1,
            upper: 0.9,
        };
        write_parameter_report(
            &report_path,
            "chains=2",
            &[
                ("mu".to_string(), summary, Some(1.001)),
                ("phi".to_string(), summary, None),
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(&report_path).unwrap();
        assert!(text.contains("parameter,mean,lower_2_5,upper_97_5,rhat"));
        assert!(text.contains("mu,0.5,0.1,0.9,1.001"));
        assert!(text.contains("phi,0.5,0.1,0.9,\n"));
    }

    #[test]
    fn parameter_cloud_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("clouds.csv");
        let rows = vec![
            CloudRow {
                algorithm: "lw1".to_string(),
                replicate: 1,
                particle_index: 0,
                theta: ParameterVector::new(-0.7, 0.95, 0.03, -0.4).unwrap(),
                weight: 0.625,
            },
            CloudRow {
                algorithm: "pmmh".to_string(),
                replicate: 0,
                particle_index: 1,
                theta: ParameterVector::new(0.1, 0.5, 0.4, 0.2).unwrap(),
                weight: 0.375,
            },
        ];
        write_parameter_clouds(&path, "r=2", &rows).unwrap();
        let back = read_parameter_clouds(&path).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn mixed_algorithm_ids_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mixed.csv");
        std::fs::write(
            &path,
            "time_index,log_cond_evidence,filter_mean,ess,algorithm_id\n1,0,0,10,sisr\n2,0,0,10,lw1\n",
        )
        .unwrap();
        assert!(matches!(
            read_filter_records(&path),
            Err(IoError::Parse { .. })
        ));
    }
}
