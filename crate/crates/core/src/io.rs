//! Counts, prior and histogram CSV formats.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::conjugate::{parse_decimal, ConjugateError, PriorSpec, TransitionCounts};
use crate::graph::Dag;
use crate::montecarlo::HistogramBin;

pub const COUNTS_HEADER: [&str; 3] = ["src", "dst", "count"];
pub const PRIOR_HEADER: [&str; 3] = ["src", "dst", "alpha"];
pub const HISTOGRAM_HEADER: &str = "bin_left,bin_right,count";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("expected header `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Data(#[from] ConjugateError),
}

fn reader<'a>(text: &'a str, header: &[&str]) -> Result<csv::Reader<&'a [u8]>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let found = rdr.headers()?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(FormatError::Header {
            expected: header.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(rdr)
}

/// Reads `src,dst,count` rows; edges without a row count as zero.
pub fn parse_counts_csv(text: &str, dag: &Dag) -> Result<TransitionCounts, FormatError> {
    let mut rows = Vec::new();
    for record in reader(text, &COUNTS_HEADER)?.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let count = record[2].parse::<u64>().map_err(|_| FormatError::Row {
            line,
            message: format!("count `{}` is not a non-negative integer", &record[2]),
        })?;
        rows.push((record[0].to_string(), record[1].to_string(), count));
    }
    Ok(TransitionCounts::from_named(dag, rows)?)
}

/// Reads `src,dst,alpha` rows into a custom prior. Weights are parsed as
/// exact decimals.
pub fn parse_prior_csv(text: &str) -> Result<PriorSpec, FormatError> {
    let mut map = BTreeMap::new();
    for record in reader(text, &PRIOR_HEADER)?.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let alpha = parse_decimal(&record[2]).ok_or_else(|| FormatError::Row {
            line,
            message: format!("alpha `{}` is not a decimal number", &record[2]),
        })?;
        let key = (record[0].to_string(), record[1].to_string());
        if map.insert(key, alpha).is_some() {
            return Err(FormatError::Row {
                line,
                message: format!("duplicate prior for {} -> {}", &record[0], &record[1]),
            });
        }
    }
    Ok(PriorSpec::Custom(map))
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from(HISTOGRAM_HEADER);
    out.push('\n');
    for b in bins {
        out.push_str(&format!("{},{},{}\n", b.left, b.right, b.count));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::parse_graph;

    #[test]
    fn counts_with_missing_rows() {
        let dag = parse_graph("A B\nA C\nB C").unwrap();
        let c = parse_counts_csv("src,dst,count\nA, B, 4\n# skipped\nB,C,2\n", &dag).unwrap();
        assert_eq!(c.as_slice(), &[4, 0, 2]);
    }

    #[test]
    fn counts_errors() {
        let dag = parse_graph("A B").unwrap();
        assert!(matches!(
            parse_counts_csv("from,to,n\nA,B,1\n", &dag),
            Err(FormatError::Header { .. })
        ));
        assert!(matches!(
            parse_counts_csv("src,dst,count\nA,B,-1\n", &dag),
            Err(FormatError::Row { line: 2, .. })
        ));
        assert!(matches!(
            parse_counts_csv("src,dst,count\nB,A,1\n", &dag),
            Err(FormatError::Data(ConjugateError::NotAnEdge { .. }))
        ));
        assert!(parse_counts_csv("src,dst,count\nA,B\n", &dag).is_err());
    }

    #[test]
    fn prior_csv() {
        let p = parse_prior_csv("src,dst,alpha\nA,B,0.5\nA,C,2\n").unwrap();
        let PriorSpec::Custom(map) = p else { panic!() };
        assert_eq!(map.len(), 2);
        assert!(parse_prior_csv("src,dst,alpha\nA,B,x\n").is_err());
        assert!(parse_prior_csv("src,dst,alpha\nA,B,1\nA,B,2\n").is_err());
    }

    #[test]
    fn histogram_export() {
        let csv = histogram_csv(&[HistogramBin {
            left: 0.0,
            right: 0.5,
            count: 3,
        }]);
        assert_eq!(csv, "bin_left,bin_right,count\n0,0.5,3\n");
    }
}
