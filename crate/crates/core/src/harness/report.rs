//! Results tables (CSV and Markdown) and the standalone HTML report.

use std::fmt::Write as _;
use std::path::Path;

use super::experiment::ResultsRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultsTable {
    pub csv: String,
    pub markdown: String,
}

/// Rows grouped by dataset (in order of first appearance), each group
/// sorted by ascending validation log-likelihood.
pub fn sort_rows(rows: &[ResultsRow]) -> Vec<ResultsRow> {
    let mut datasets: Vec<&str> = Vec::new();
    for r in rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut out = Vec::with_capacity(rows.len());
    for d in datasets {
        let mut group: Vec<ResultsRow> = rows.iter().filter(|r| r.dataset == d).cloned().collect();
        group.sort_by(|a, b| a.validation_ll.total_cmp(&b.validation_ll));
        out.extend(group);
    }
    out
}

pub fn emit_results_table(rows: &[ResultsRow]) -> Result<ResultsTable> {
    if rows.is_empty() {
        return Err(Error::Empty("results table rows"));
    }
    let sorted = sort_rows(rows);

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &sorted {
        w.serialize(r)
            .map_err(|e| Error::Data(format!("writing CSV: {e}")))?;
    }
    let csv = String::from_utf8(
        w.into_inner()
            .map_err(|e| Error::Data(format!("writing CSV: {e}")))?,
    )
    .expect("CSV output is UTF-8");

    let mut md = String::from(
        "| Data | Method | Parameters | LSTM dims | HMM states | Validation | Training |\n\
         |------|--------|-----------:|----------:|-----------:|-----------:|---------:|\n",
    );
    let dash = |v: Option<usize>| v.map_or_else(String::new, |x| x.to_string());
    for r in &sorted {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {:.2} | {:.2} |",
            r.dataset,
            r.method.display_name(),
            r.parameter_count,
            dash(r.h),
            dash(r.n_hmm),
            r.validation_ll,
            r.training_ll
        );
    }
    Ok(ResultsTable { csv, markdown: md })
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultsRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<ResultsRow>, _>>()
        .map_err(|e| Error::Data(format!("reading results CSV: {e}")))
}

pub fn read_results_csv(path: &Path) -> Result<Vec<ResultsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results_csv(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Adds `rows` to `dir/results.csv` (keeping what is already there) and
/// rewrites `results.csv` and `results.md` sorted.
pub fn append_results(dir: &Path, rows: &[ResultsRow]) -> Result<ResultsTable> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("results.csv");
    let mut all = if csv_path.exists() {
        read_results_csv(&csv_path)?
    } else {
        Vec::new()
    };
    all.extend_from_slice(rows);
    let table = emit_results_table(&all)?;
    write_table(dir, &table)?;
    Ok(table)
}

pub fn write_table(dir: &Path, table: &ResultsTable) -> Result<()> {
    for (name, body) in [("results.csv", &table.csv), ("results.md", &table.markdown)] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::Method;
    use proptest::prelude::*;

    fn row(dataset: &str, method: Method, v: f64) -> ResultsRow {
        ResultsRow {
            dataset: dataset.into(),
            method,
            parameter_count: 935,
            h: Some(5),
            n_hmm: None,
            validation_ll: v,
            training_ll: v + 0.012345678901234,
            seed: 1,
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn lower_validation_first() {
        let t = emit_results_table(&[row("s", Method::Lstm, -2.3), row("s", Method::Hybrid, -2.5)])
            .unwrap();
        let lines: Vec<&str> = t.markdown.lines().collect();
        assert!(lines[2].contains("-2.50") && lines[3].contains("-2.30"));
        assert!(t.csv.lines().nth(1).unwrap().contains("-2.5"));
    }

    #[test]
    fn single_row_has_header_and_one_line() {
        let t = emit_results_table(&[row("s", Method::Lstm, -2.0)]).unwrap();
        assert_eq!(t.csv.lines().count(), 2);
        assert!(t.csv.starts_with(
            "dataset,method,parameter_count,h,n_hmm,validation_ll,training_ll,seed,wall_time_s"
        ));
        assert_eq!(t.markdown.lines().count(), 3);
    }

    #[test]
    fn empty_input_errors() {
        assert!(emit_results_table(&[]).is_err());
    }

    #[test]
    fn csv_round_trips_exactly() {
        let rows = vec![
            row("a", Method::JointHybrid, -2.123456789012345),
            row("b", Method::DiscreteHmm, -3.0),
        ];
        let back = parse_results_csv(&emit_results_table(&rows).unwrap().csv).unwrap();
        assert_eq!(back, sort_rows(&rows));
    }

    proptest! {
        #[test]
        fn ordering_matches_comparator(vals in proptest::collection::vec((0usize..3, -5.0f64..0.0), 1..30)) {
            let rows: Vec<ResultsRow> = vals.iter().map(|&(d, v)| row(&format!("d{d}"), Method::Lstm, v)).collect();
            let sorted = sort_rows(&rows);
            prop_assert_eq!(sorted.len(), rows.len());
            for w in sorted.windows(2) {
                if w[0].dataset == w[1].dataset {
                    prop_assert!(w[0].validation_ll <= w[1].validation_ll);
                }
            }
            // each dataset forms one contiguous block
            let mut seen: Vec<String> = Vec::new();
            for r in &sorted {
                if seen.last() != Some(&r.dataset) {
                    prop_assert!(!seen.contains(&r.dataset));
                    seen.push(r.dataset.clone());
                }
            }
        }
    }
}
