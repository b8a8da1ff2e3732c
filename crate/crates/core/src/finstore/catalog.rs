//! Table, column and code vocabulary of the financial warehouse.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// What a column holds, independent of the storage engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Text,
    Integer,
    /// Currency amount, stored as a 64-bit integer of whole units.
    Amount,
    /// Averaged currency amount (may carry a fraction).
    Decimal,
    /// Dimensionless ratio.
    Ratio,
    Bool,
    Date,
}

impl SemanticType {
    pub(crate) fn sql_type(self) -> &'static str {
        match self {
            SemanticType::Text | SemanticType::Date => "TEXT",
            SemanticType::Integer | SemanticType::Amount => "INTEGER",
            SemanticType::Decimal | SemanticType::Ratio => "REAL",
            SemanticType::Bool => "BOOLEAN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    pub ty: SemanticType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub columns: Vec<ColumnDef>,
}

impl TableDef {
    fn new(name: &str, columns: &[(&str, SemanticType)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns
                .iter()
                .map(|(n, ty)| ColumnDef {
                    name: n.to_string(),
                    ty: *ty,
                })
                .collect(),
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnDef> {
        self.columns.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub(crate) fn ddl(&self) -> String {
        let cols: Vec<String> = self
            .columns
            .iter()
            .map(|c| format!("{} {}", c.name, c.ty.sql_type()))
            .collect();
        format!("CREATE TABLE IF NOT EXISTS {} ({})", self.name, cols.join(", "))
    }
}

/// Description and search aliases for one account or ratio code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeInfo {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub tables: Vec<TableDef>,
    /// Unified statement account code -> description.
    pub category_codes: BTreeMap<String, CodeInfo>,
    /// Ratio code -> description.
    pub ratio_codes: BTreeMap<String, CodeInfo>,
}

pub const TABLE_NAMES: [&str; 7] = [
    "company_info",
    "sub_and_shareholder",
    "financial_statement",
    "industry_financial_statement",
    "financial_ratio",
    "industry_financial_ratio",
    "financial_statement_explaination",
];

use SemanticType::*;

// (code, label, aliases)
const CATEGORY_CODES: &[(&str, &str, &[&str])] = &[
    ("CASH_EQ", "Cash and Cash Equivalents", &["cash"]),
    ("TOTAL_ASSETS", "Total Assets", &[]),
    ("TOTAL_LIAB", "Total Liabilities", &["liabilities"]),
    ("OWNERS_EQUITY", "Owners' Equity", &["shareholders' equity", "equity"]),
    ("NET_REVENUE", "Net Revenue", &["revenue", "sales"]),
    ("GROSS_PROFIT", "Gross Profit", &[]),
    ("OPERATING_PROFIT", "Operating Profit", &["EBIT"]),
    ("PROFIT_BEFORE_TAX", "Profit Before Tax", &["pre-tax profit"]),
    ("NET_INCOME", "Profit After Tax (VAS)", &["net income", "net profit"]),
    ("INVENTORY", "Inventories", &["inventory"]),
    ("ST_RECEIVABLES", "Short-term Receivables", &["receivables"]),
    ("FIXED_ASSETS", "Fixed Assets", &[]),
    (
        "OPERATING_CASH_FLOW",
        "Net Cash Flow from Operating Activities",
        &["operating cash flow"],
    ),
    (
        "LOANS_TO_CUSTOMERS",
        "Loans to Customers",
        &["customer loans", "credit"],
    ),
    ("CUSTOMER_DEPOSITS", "Customer Deposits", &["deposits"]),
    ("NET_INTEREST_INCOME", "Net Interest Income", &[]),
    ("NET_FEE_INCOME", "Net Fee and Commission Income", &["fee income"]),
    (
        "CREDIT_LOSS_PROVISION",
        "Provision for Credit Losses",
        &["loan loss provision"],
    ),
    ("FVTPL_ASSETS", "Financial Assets at FVTPL", &["trading securities"]),
    ("MARGIN_LENDING", "Margin Lending", &["margin loans"]),
    ("BROKERAGE_REVENUE", "Brokerage Revenue", &[]),
    ("LOANS_SHORT_TERM", "Short-term Loans (notes)", &[]),
    ("LOANS_LONG_TERM", "Long-term Loans (notes)", &[]),
    (
        "REAL_ESTATE_HOLDINGS",
        "Real Estate Holdings (notes)",
        &["investment property"],
    ),
];

const RATIO_CODES: &[(&str, &str, &[&str])] = &[
    ("CDGYoY", "Credit Growth YoY", &["credit growth"]),
    ("ROE", "Return on Equity", &["ROE"]),
    (
        "ROE4Q",
        "ROE 4 nearest quarter",
        &["ROE trailing twelve months", "ROE TTM"],
    ),
    ("ROA", "Return on Assets", &["ROA"]),
    ("NIM", "Net Interest Margin", &["NIM"]),
    ("NPL", "Non-performing Loan Ratio", &["bad debt ratio", "NPL"]),
    ("EPS", "Earnings per Share", &["EPS"]),
    ("PE", "Price to Earnings", &["P/E"]),
    ("PB", "Price to Book", &["P/B"]),
    ("NetIncomeYoY", "Net Income YoY", &["net profit growth"]),
    ("RevenueYoY", "Revenue YoY", &["revenue growth"]),
    ("CurrentRatio", "Current Ratio", &[]),
    ("DebtToEquity", "Debt to Equity", &["leverage", "D/E"]),
    ("InventoryTurnover", "Inventory Turnover", &[]),
    ("GrossMargin", "Gross Margin", &[]),
];

fn code_map(src: &[(&str, &str, &[&str])]) -> BTreeMap<String, CodeInfo> {
    src.iter()
        .map(|(code, label, aliases)| {
            (
                code.to_string(),
                CodeInfo {
                    label: label.to_string(),
                    aliases: aliases.iter().map(|a| a.to_string()).collect(),
                },
            )
        })
        .collect()
}

impl SchemaCatalog {
    /// The warehouse schema: seven tables, unified account codes and ratio codes.
    pub fn financial() -> Self {
        let tables = vec![
            TableDef::new(
                "company_info",
                &[
                    ("stock_code", Text),
                    ("industry", Text),
                    ("exchange", Text),
                    ("stock_indices", Text),
                    ("is_bank", Bool),
                    ("is_securities", Bool),
                ],
            ),
            TableDef::new("sub_and_shareholder", &[("stock_code", Text), ("invest_on", Text)]),
            TableDef::new(
                "financial_statement",
                &[
                    ("stock_code", Text),
                    ("year", Integer),
                    ("quarter", Integer),
                    ("category_code", Text),
                    ("data", Amount),
                    ("date_added", Date),
                ],
            ),
            TableDef::new(
                "industry_financial_statement",
                &[
                    ("industry", Text),
                    ("year", Integer),
                    ("quarter", Integer),
                    ("category_code", Text),
                    ("data_mean", Decimal),
                    ("data_sum", Amount),
                    ("date_added", Date),
                ],
            ),
            TableDef::new(
                "financial_ratio",
                &[
                    ("ratio_code", Text),
                    ("stock_code", Text),
                    ("year", Integer),
                    ("quarter", Integer),
                    ("data", Ratio),
                    ("date_added", Date),
                ],
            ),
            TableDef::new(
                "industry_financial_ratio",
                &[
                    ("industry", Text),
                    ("ratio_code", Text),
                    ("year", Integer),
                    ("quarter", Integer),
                    ("data_mean", Ratio),
                    ("date_added", Date),
                ],
            ),
            TableDef::new(
                "financial_statement_explaination",
                &[
                    ("category_code", Text),
                    ("stock_code", Text),
                    ("year", Integer),
                    ("quarter", Integer),
                    ("data", Amount),
                    ("date_added", Date),
                ],
            ),
        ];
        Self {
            tables,
            category_codes: code_map(CATEGORY_CODES),
            ratio_codes: code_map(RATIO_CODES),
        }
    }

    pub fn table(&self, name: &str) -> Option<&TableDef> {
        self.tables.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn table_names(&self) -> impl Iterator<Item = &str> {
        self.tables.iter().map(|t| t.name.as_str())
    }
}
