//! Position deltas and session totals.
//!
//! `delta = p_after - p_before`, so a negative value means the evaluated
//! document moved up. `mean_improvement` flips the sign so that positive
//! numbers are good.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocId;
use crate::feedback::EvaluationRecord;
use crate::store::EvaluationId;

pub const REPORT_HEADER: &str = "evaluation_id,p_before,delta";

#[derive(Debug, Error)]
#[error("{path}: {source}")]
pub struct ReportError {
    pub path: PathBuf,
    #[source]
    pub source: io::Error,
}

pub fn delta(p_before: usize, p_after: usize) -> i64 {
    p_after as i64 - p_before as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionDelta {
    pub evaluation_id: EvaluationId,
    pub doc_id: DocId,
    pub p_before: usize,
    pub p_after: usize,
    pub delta: i64,
}

impl PositionDelta {
    pub fn new(
        evaluation_id: EvaluationId,
        doc_id: DocId,
        p_before: usize,
        p_after: usize,
    ) -> Self {
        Self {
            evaluation_id,
            doc_id,
            p_before,
            p_after,
            delta: delta(p_before, p_after),
        }
    }
}

impl From<&EvaluationRecord> for PositionDelta {
    fn from(r: &EvaluationRecord) -> Self {
        Self::new(r.evaluation_id, r.doc_id, r.p_before, r.p_after)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub deltas: Vec<PositionDelta>,
    /// Sum of all deltas.
    pub total: i64,
    /// Number of evaluated documents.
    pub count: usize,
    /// `-total / count`, or 0 for an empty session.
    pub mean_improvement: f64,
}

impl SessionReport {
    pub fn from_deltas(deltas: Vec<PositionDelta>) -> Self {
        let total: i64 = deltas.iter().map(|d| d.delta).sum();
        let count = deltas.len();
        let mean_improvement = if count == 0 {
            0.0
        } else {
            -(total as f64) / count as f64
        };
        Self {
            deltas,
            total,
            count,
            mean_improvement,
        }
    }
}

pub fn session_report(records: &[EvaluationRecord]) -> SessionReport {
    SessionReport::from_deltas(records.iter().map(PositionDelta::from).collect())
}

/// Writes the CSV rows (`evaluation_id,p_before,delta`, LF endings) in
/// record order.
pub fn write_report_csv<W: Write>(records: &[EvaluationRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for r in records {
        writeln!(out, "{},{},{}", r.evaluation_id, r.p_before, r.delta)?;
    }
    out.flush()
}

pub fn export_report(records: &[EvaluationRecord], destination: &Path) -> Result<(), ReportError> {
    let mut buf = Vec::new();
    write_report_csv(records, &mut buf).expect("writing to a Vec cannot fail");
    fs::write(destination, buf).map_err(|source| ReportError {
        path: destination.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::QueryId;
    use chrono::Utc;
    use proptest::prelude::*;

    fn rec(id: u64, p_before: usize, p_after: usize) -> EvaluationRecord {
        EvaluationRecord {
            evaluation_id: EvaluationId(id),
            query_id: QueryId(1),
            doc_id: DocId(1),
            position: p_before,
            user_id: "u".into(),
            competence: 1.0,
            alpha: 1.0,
            updated_words: vec![],
            p_before,
            p_after,
            delta: delta(p_before, p_after),
            timestamp: Utc::now(),
        }
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta(3, 1), -2);
        assert_eq!(delta(2, 2), 0);
        assert_eq!(delta(1, 4), 3);
    }

    #[test]
    fn report_examples() {
        let empty = session_report(&[]);
        assert_eq!(
            (empty.total, empty.count, empty.mean_improvement),
            (0, 0, 0.0)
        );

        let r = session_report(&[rec(1, 3, 1), rec(2, 2, 2), rec(3, 1, 4)]);
        assert_eq!((r.total, r.count), (1, 3));
        assert_eq!(r.mean_improvement, -1.0 / 3.0);

        let r = session_report(&[rec(1, 2, 1), rec(2, 5, 4)]);
        assert_eq!((r.total, r.mean_improvement), (-2, 1.0));
    }

    #[test]
    fn csv_examples() {
        let mut out = Vec::new();
        write_report_csv(&[rec(1, 5, 3)], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "evaluation_id,p_before,delta\n1,5,-2\n"
        );

        let mut out = Vec::new();
        write_report_csv(&[], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "evaluation_id,p_before,delta\n"
        );

        let mut out = Vec::new();
        write_report_csv(&[rec(1, 3, 1), rec(2, 2, 2), rec(3, 1, 4)], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "evaluation_id,p_before,delta\n1,3,-2\n2,2,0\n3,1,3\n"
        );
    }

    #[test]
    fn export_reports_path_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let ok = dir.path().join("r.csv");
        export_report(&[rec(1, 5, 3)], &ok).unwrap();
        assert_eq!(
            fs::read_to_string(&ok).unwrap(),
            "evaluation_id,p_before,delta\n1,5,-2\n"
        );
        let bad = dir.path().join("missing/r.csv");
        let err = export_report(&[], &bad).unwrap_err();
        assert_eq!(err.path, bad);
    }

    proptest! {
        #[test]
        fn delta_of_equal_positions_is_zero(p in 1usize..10_000) {
            prop_assert_eq!(delta(p, p), 0);
        }

        #[test]
        fn totals_are_order_independent(pairs in proptest::collection::vec((1usize..100, 1usize..100), 0..20)) {
            let records: Vec<_> = pairs.iter().enumerate().map(|(i, (a, b))| rec(i as u64 + 1, *a, *b)).collect();
            let mut reversed = records.clone();
            reversed.reverse();
            let (a, b) = (session_report(&records), session_report(&reversed));
            prop_assert_eq!(a.total, b.total);
            prop_assert_eq!(a.count, b.count);
            prop_assert_eq!(a.total, pairs.iter().map(|(x, y)| *y as i64 - *x as i64).sum::<i64>());
        }
    }
}
