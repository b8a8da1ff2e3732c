//! Statement ingestion through the universal account mapping.

use super::mapping::{AccountMapping, FormatKind};
use super::warehouse::Warehouse;
use super::{Quarter, StoreError};
use serde::{Deserialize, Serialize};
use std::io::Read;

/// One statement line as delivered by a source file, before remapping.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStatementRecord {
    pub stock_code: String,
    pub year: i32,
    pub quarter: i32,
    pub raw_code: String,
    /// Amount in whole currency units, as decimal text.
    pub data: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// A row with the same (stock_code, year, quarter, unified_code) exists.
    Conflict,
    BadQuarter,
    UnmappedCode,
    /// The amount is not an integral decimal that fits in 64 bits.
    BadData,
    /// The source line could not be decoded into a record.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based source line, when ingesting from a file.
    pub line: Option<u64>,
    pub row: Option<RawStatementRecord>,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub inserted: usize,
    /// Inserted rows whose raw code differed from the stored unified code.
    pub remapped: usize,
    pub rejected: Vec<Rejection>,
}

impl IngestReport {
    fn reject(
        &mut self,
        line: Option<u64>,
        row: Option<RawStatementRecord>,
        reason: RejectReason,
        detail: impl Into<String>,
    ) {
        self.rejected.push(Rejection {
            line,
            row,
            reason,
            detail: detail.into(),
        });
    }
}

/// Parses an integral decimal amount. A zero fraction (`12.00`) is accepted.
pub fn parse_amount(text: &str) -> Option<i64> {
    let t = text.trim();
    let (int_part, frac) = match t.split_once('.') {
        Some((i, f)) => (i, f),
        None => (t, ""),
    };
    if !frac.bytes().all(|b| b == b'0') {
        return None;
    }
    let digits = int_part.strip_prefix(['-', '+']).unwrap_or(int_part);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    int_part.parse().ok()
}

impl Warehouse {
    /// Remaps and stores statement rows. Every row ends up either inserted or
    /// listed in `rejected`.
    pub fn ingest_statements<I>(
        &mut self,
        rows: I,
        format: FormatKind,
        mapping: &AccountMapping,
        date_added: &str,
    ) -> Result<IngestReport, StoreError>
    where
        I: IntoIterator<Item = RawStatementRecord>,
    {
        self.ingest_lines(rows.into_iter().map(|r| (None, Ok(r))), format, mapping, date_added)
    }

    /// Reads a delimiter-separated file with header
    /// `stock_code,year,quarter,raw_code,data` and ingests it.
    pub fn ingest_csv<R: Read>(
        &mut self,
        reader: R,
        delimiter: u8,
        format: FormatKind,
        mapping: &AccountMapping,
        date_added: &str,
    ) -> Result<IngestReport, StoreError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        for required in ["stock_code", "year", "quarter", "raw_code", "data"] {
            if !headers.iter().any(|h| h == required) {
                return Err(StoreError::MissingColumn(required.to_string()));
            }
        }
        let lines: Vec<(Option<u64>, Result<RawStatementRecord, String>)> = rdr
            .into_deserialize::<RawStatementRecord>()
            .enumerate()
            .map(|(i, r)| {
                let line = r
                    .as_ref()
                    .err()
                    .and_then(|e| e.position().map(|p| p.line()))
                    .unwrap_or(i as u64 + 2);
                (Some(line), r.map_err(|e| e.to_string()))
            })
            .collect();
        self.ingest_lines(lines, format, mapping, date_added)
    }

    fn ingest_lines<I>(
        &mut self,
        lines: I,
        format: FormatKind,
        mapping: &AccountMapping,
        date_added: &str,
    ) -> Result<IngestReport, StoreError>
    where
        I: IntoIterator<Item = (Option<u64>, Result<RawStatementRecord, String>)>,
    {
        let mut report = IngestReport::default();
        let mut lines = lines.into_iter().peekable();
        if lines.peek().is_none() {
            return Ok(report);
        }
        if !mapping.covers(format) {
            return Err(StoreError::FormatNotCovered(format));
        }
        let tx = self.writer().transaction()?;
        {
            let mut insert = tx.prepare(
                "INSERT INTO financial_statement (stock_code, year, quarter, category_code, data, date_added)
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            )?;
            for (line, parsed) in lines {
                let row = match parsed {
                    Ok(r) => r,
                    Err(msg) => {
                        report.reject(line, None, RejectReason::Malformed, msg);
                        continue;
                    }
                };
                let quarter = match Quarter::new(row.quarter) {
                    Some(q) => q,
                    None => {
                        let detail = format!("quarter {} outside 0..=4", row.quarter);
                        report.reject(line, Some(row), RejectReason::BadQuarter, detail);
                        continue;
                    }
                };
                let Some(entry) = mapping.resolve(format, &row.raw_code) else {
                    let detail = format!("no {format} mapping for `{}`", row.raw_code);
                    report.reject(line, Some(row), RejectReason::UnmappedCode, detail);
                    continue;
                };
                let Some(amount) = parse_amount(&row.data) else {
                    let detail = format!("`{}` is not an integral amount", row.data);
                    report.reject(line, Some(row), RejectReason::BadData, detail);
                    continue;
                };
                let res = insert.execute(rusqlite::params![
                    row.stock_code.trim(),
                    row.year,
                    quarter.get(),
                    entry.unified_code,
                    amount,
                    date_added
                ]);
                match res {
                    Ok(_) => {
                        report.inserted += 1;
                        if entry.unified_code != row.raw_code.trim() {
                            report.remapped += 1;
                        }
                    }
                    Err(rusqlite::Error::SqliteFailure(e, _)) if e.code == rusqlite::ErrorCode::ConstraintViolation => {
                        let detail = format!(
                            "({}, {}, {}, {}) already stored",
                            row.stock_code, row.year, row.quarter, entry.unified_code
                        );
                        report.reject(line, Some(row), RejectReason::Conflict, detail);
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        tx.commit()?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finstore::catalog::SchemaCatalog;
    use crate::finstore::mapping::MappingEntry;
    use crate::finstore::ExecLimits;
    use crate::table::Value;

    fn rec(code: &str, q: i32, data: &str) -> RawStatementRecord {
        RawStatementRecord {
            stock_code: "VCB".into(),
            year: 2023,
            quarter: q,
            raw_code: code.into(),
            data: data.into(),
        }
    }

    fn one_entry_mapping() -> AccountMapping {
        let cat = SchemaCatalog::financial();
        AccountMapping::new(
            vec![MappingEntry {
                format_kind: FormatKind::Bank,
                raw_code: "B.II.1".into(),
                unified_code: "CASH_EQ".into(),
                label: "Cash".into(),
            }],
            &cat,
        )
        .unwrap()
    }

    #[test]
    fn single_row_round_trips_through_storage() {
        let mut wh = Warehouse::in_memory().unwrap();
        let report = wh
            .ingest_statements(
                [rec("B.II.1", 3, "1500")],
                FormatKind::Bank,
                &one_entry_mapping(),
                "2024-01-01",
            )
            .unwrap();
        assert_eq!((report.inserted, report.remapped), (1, 1));
        assert!(report.rejected.is_empty());
        let t = wh
            .execute_readonly(
                "SELECT category_code, data FROM financial_statement WHERE stock_code = 'VCB'",
                &ExecLimits::default(),
            )
            .unwrap();
        assert_eq!(t.rows, vec![vec![Value::from("CASH_EQ"), Value::Int(1500)]]);
    }

    #[test]
    fn empty_stream_is_an_empty_report() {
        let mut wh = Warehouse::in_memory().unwrap();
        let report = wh
            .ingest_statements(Vec::new(), FormatKind::Bank, &one_entry_mapping(), "2024-01-01")
            .unwrap();
        assert_eq!(report, IngestReport::default());
    }

    #[test]
    fn bad_quarter_unmapped_and_conflict_are_reported() {
        let mut wh = Warehouse::in_memory().unwrap();
        let rows = vec![
            rec("B.II.1", 7, "1"),
            rec("Z.9", 1, "1"),
            rec("B.II.1", 1, "1"),
            rec("B.II.1", 1, "2"),
            rec("B.II.1", 2, "1.5"),
        ];
        let report = wh
            .ingest_statements(rows, FormatKind::Bank, &one_entry_mapping(), "2024-01-01")
            .unwrap();
        assert_eq!(report.inserted, 1);
        let reasons: Vec<RejectReason> = report.rejected.iter().map(|r| r.reason).collect();
        assert_eq!(
            reasons,
            vec![
                RejectReason::BadQuarter,
                RejectReason::UnmappedCode,
                RejectReason::Conflict,
                RejectReason::BadData
            ]
        );
    }

    #[test]
    fn uncovered_format_is_an_error() {
        let mut wh = Warehouse::in_memory().unwrap();
        let err = wh
            .ingest_statements(
                [rec("BS.110", 1, "1")],
                FormatKind::Corporation,
                &one_entry_mapping(),
                "d",
            )
            .unwrap_err();
        assert!(matches!(err, StoreError::FormatNotCovered(FormatKind::Corporation)));
    }

    #[test]
    fn csv_ingest_reports_malformed_lines() {
        let mut wh = Warehouse::in_memory().unwrap();
        let text = "stock_code,year,quarter,raw_code,data\nVCB,2023,1,B.II.1,10\nVCB,twenty,1,B.II.1,10\n";
        let report = wh
            .ingest_csv(text.as_bytes(), b',', FormatKind::Bank, &one_entry_mapping(), "d")
            .unwrap();
        assert_eq!(report.inserted, 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].reason, RejectReason::Malformed);
        assert_eq!(report.rejected[0].line, Some(3));
    }

    #[test]
    fn csv_requires_declared_header() {
        let mut wh = Warehouse::in_memory().unwrap();
        let text = "stock_code,year,quarter,code,data\n";
        let err = wh
            .ingest_csv(text.as_bytes(), b',', FormatKind::Bank, &one_entry_mapping(), "d")
            .unwrap_err();
        assert!(matches!(err, StoreError::MissingColumn(c) if c == "raw_code"));
    }

    #[test]
    fn amounts() {
        assert_eq!(parse_amount("1200"), Some(1200));
        assert_eq!(parse_amount("-5.000"), Some(-5));
        assert_eq!(parse_amount("1.5"), None);
        assert_eq!(parse_amount("abc"), None);
        assert_eq!(parse_amount(""), None);
        assert_eq!(parse_amount("99999999999999999999"), None);
    }
}
