//! The universal account mapping: raw statement codes from the bank,
//! corporation and securities report layouts resolved to one unified code set.

use super::catalog::SchemaCatalog;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatKind {
    Bank,
    Corporation,
    Securities,
}

impl FormatKind {
    pub const ALL: [FormatKind; 3] = [FormatKind::Bank, FormatKind::Corporation, FormatKind::Securities];

    pub fn as_str(self) -> &'static str {
        match self {
            FormatKind::Bank => "bank",
            FormatKind::Corporation => "corporation",
            FormatKind::Securities => "securities",
        }
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormatKind {
    type Err = MappingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bank" => Ok(FormatKind::Bank),
            "corporation" | "corp" => Ok(FormatKind::Corporation),
            "securities" => Ok(FormatKind::Securities),
            other => Err(MappingError::UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingEntry {
    pub format_kind: FormatKind,
    pub raw_code: String,
    pub unified_code: String,
    pub label: String,
}

#[derive(Debug, thiserror::Error)]
pub enum MappingError {
    #[error("unknown statement format `{0}`")]
    UnknownFormat(String),
    #[error("duplicate mapping for ({0}, {1})")]
    Duplicate(FormatKind, String),
    #[error("unified code `{0}` is not in the catalog")]
    UnknownUnifiedCode(String),
    #[error("malformed mapping file: {0}")]
    Csv(#[from] csv::Error),
}

/// Validated mapping table. `(format_kind, raw_code)` is unique and every
/// unified code exists in the catalog.
#[derive(Debug, Clone)]
pub struct AccountMapping {
    entries: Vec<MappingEntry>,
    lookup: HashMap<(FormatKind, String), usize>,
}

impl AccountMapping {
    pub fn new(entries: Vec<MappingEntry>, catalog: &SchemaCatalog) -> Result<Self, MappingError> {
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if !catalog.category_codes.contains_key(&e.unified_code) {
                return Err(MappingError::UnknownUnifiedCode(e.unified_code.clone()));
            }
            if lookup.insert((e.format_kind, e.raw_code.clone()), i).is_some() {
                return Err(MappingError::Duplicate(e.format_kind, e.raw_code.clone()));
            }
        }
        Ok(Self { entries, lookup })
    }

    /// Reads `format_kind,raw_code,unified_code,label` rows with a header line.
    pub fn from_csv<R: Read>(reader: R, catalog: &SchemaCatalog) -> Result<Self, MappingError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<CsvEntry>() {
            let row = row?;
            entries.push(MappingEntry {
                format_kind: row.format_kind.parse()?,
                raw_code: row.raw_code,
                unified_code: row.unified_code,
                label: row.label,
            });
        }
        Self::new(entries, catalog)
    }

    /// The shipped fixture mapping, 33 codes across the three layouts.
    pub fn builtin(catalog: &SchemaCatalog) -> Self {
        let entries = BUILTIN
            .iter()
            .map(|(kind, raw, unified, label)| MappingEntry {
                format_kind: *kind,
                raw_code: raw.to_string(),
                unified_code: unified.to_string(),
                label: label.to_string(),
            })
            .collect();
        Self::new(entries, catalog).expect("builtin mapping is consistent with the catalog")
    }

    pub fn resolve(&self, kind: FormatKind, raw_code: &str) -> Option<&MappingEntry> {
        self.lookup
            .get(&(kind, raw_code.trim().to_string()))
            .map(|&i| &self.entries[i])
    }

    pub fn covers(&self, kind: FormatKind) -> bool {
        self.entries.iter().any(|e| e.format_kind == kind)
    }

    pub fn entries(&self) -> &[MappingEntry] {
        &self.entries
    }

    pub fn for_format(&self, kind: FormatKind) -> impl Iterator<Item = &MappingEntry> {
        self.entries.iter().filter(move |e| e.format_kind == kind)
    }
}

#[derive(Deserialize)]
struct CsvEntry {
    format_kind: String,
    raw_code: String,
    unified_code: String,
    label: String,
}

use FormatKind::{Bank, Corporation, Securities};

const BUILTIN: &[(FormatKind, &str, &str, &str)] = &[
    (Corporation, "BS.110", "CASH_EQ", "Cash and cash equivalents"),
    (Corporation, "BS.130", "ST_RECEIVABLES", "Short-term receivables"),
    (Corporation, "BS.140", "INVENTORY", "Inventories"),
    (Corporation, "BS.220", "FIXED_ASSETS", "Fixed assets"),
    (Corporation, "BS.270", "TOTAL_ASSETS", "Total assets"),
    (Corporation, "BS.300", "TOTAL_LIAB", "Liabilities"),
    (Corporation, "BS.400", "OWNERS_EQUITY", "Owners' equity"),
    (Corporation, "IS.10", "NET_REVENUE", "Net revenue"),
    (Corporation, "IS.20", "GROSS_PROFIT", "Gross profit"),
    (Corporation, "IS.30", "OPERATING_PROFIT", "Net operating profit"),
    (
        Corporation,
        "IS.50",
        "PROFIT_BEFORE_TAX",
        "Total accounting profit before tax",
    ),
    (Corporation, "IS.60", "NET_INCOME", "Profit after corporate income tax"),
    (
        Corporation,
        "CF.20",
        "OPERATING_CASH_FLOW",
        "Net cash flows from operating activities",
    ),
    (Bank, "B.II.1", "CASH_EQ", "Cash, gold and gemstones"),
    (Bank, "B.IV.1", "LOANS_TO_CUSTOMERS", "Loans to customers"),
    (Bank, "B.TOTAL", "TOTAL_ASSETS", "Total assets"),
    (Bank, "B.C.II", "CUSTOMER_DEPOSITS", "Deposits from customers"),
    (Bank, "B.C.TOTAL", "TOTAL_LIAB", "Total liabilities"),
    (Bank, "B.D", "OWNERS_EQUITY", "Owners' equity"),
    (Bank, "P.I", "NET_INTEREST_INCOME", "Net interest income"),
    (Bank, "P.II", "NET_FEE_INCOME", "Net fee and commission income"),
    (Bank, "P.X", "CREDIT_LOSS_PROVISION", "Credit loss provision expenses"),
    (Bank, "P.XI", "PROFIT_BEFORE_TAX", "Profit before tax"),
    (Bank, "P.XIII", "NET_INCOME", "Profit after tax"),
    (Securities, "S.111", "CASH_EQ", "Cash and cash equivalents"),
    (
        Securities,
        "S.112",
        "FVTPL_ASSETS",
        "Financial assets at fair value through profit or loss",
    ),
    (Securities, "S.114", "MARGIN_LENDING", "Loans (margin lending)"),
    (Securities, "S.270", "TOTAL_ASSETS", "Total assets"),
    (Securities, "S.300", "TOTAL_LIAB", "Liabilities"),
    (Securities, "S.400", "OWNERS_EQUITY", "Owners' equity"),
    (
        Securities,
        "S.01.6",
        "BROKERAGE_REVENUE",
        "Revenue from brokerage services",
    ),
    (Securities, "S.90", "PROFIT_BEFORE_TAX", "Accounting profit before tax"),
    (Securities, "S.200", "NET_INCOME", "Profit after tax"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_is_consistent() {
        let cat = SchemaCatalog::financial();
        let m = AccountMapping::builtin(&cat);
        assert_eq!(m.entries().len(), 33);
        for kind in FormatKind::ALL {
            assert!(m.covers(kind));
        }
        assert_eq!(m.resolve(Bank, "B.II.1").unwrap().unified_code, "CASH_EQ");
        assert!(m.resolve(Corporation, "B.II.1").is_none());
    }

    #[test]
    fn duplicate_pairs_rejected() {
        let cat = SchemaCatalog::financial();
        let e = MappingEntry {
            format_kind: Bank,
            raw_code: "X".into(),
            unified_code: "CASH_EQ".into(),
            label: "x".into(),
        };
        let err = AccountMapping::new(vec![e.clone(), e], &cat).unwrap_err();
        assert!(matches!(err, MappingError::Duplicate(Bank, _)));
    }

    #[test]
    fn unknown_unified_code_rejected() {
        let cat = SchemaCatalog::financial();
        let e = MappingEntry {
            format_kind: Bank,
            raw_code: "X".into(),
            unified_code: "NOPE".into(),
            label: "x".into(),
        };
        assert!(matches!(
            AccountMapping::new(vec![e], &cat),
            Err(MappingError::UnknownUnifiedCode(_))
        ));
    }

    #[test]
    fn loads_from_csv() {
        let cat = SchemaCatalog::financial();
        let text = "format_kind,raw_code,unified_code,label\nbank, B.II.1 ,CASH_EQ,Cash\n";
        let m = AccountMapping::from_csv(text.as_bytes(), &cat).unwrap();
        assert_eq!(m.resolve(Bank, "B.II.1").unwrap().label, "Cash");
    }
}
