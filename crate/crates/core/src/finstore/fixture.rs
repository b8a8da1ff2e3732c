//! Deterministic warehouse fixtures.
//!
//! Two profiles share one company roster: `test` seeds all 200 companies,
//! `train` the first 102. Per-company values come from an RNG keyed on the
//! ticker, so a company has the same numbers in both profiles. The 2023 Q3
//! credit-growth figures of the banking industry are pinned so that HDB, VPB,
//! MSB and KLB are the banks above the industry mean of 0.24.

use super::ingest::RawStatementRecord;
use super::mapping::{AccountMapping, FormatKind};
use super::warehouse::Warehouse;
use super::StoreError;
use crate::util::fnv1a64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::ops::RangeInclusive;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Train,
    Test,
}

impl FromStr for ProfileName {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(ProfileName::Train),
            "test" => Ok(ProfileName::Test),
            other => Err(StoreError::UnknownProfile(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureProfile {
    pub name: ProfileName,
    pub company_count: usize,
    pub year_range: RangeInclusive<i32>,
}

impl FixtureProfile {
    pub fn train() -> Self {
        Self {
            name: ProfileName::Train,
            company_count: 102,
            year_range: 2022..=2023,
        }
    }

    pub fn test() -> Self {
        Self {
            name: ProfileName::Test,
            company_count: 200,
            year_range: 2022..=2023,
        }
    }

    pub fn named(name: ProfileName) -> Self {
        match name {
            ProfileName::Train => Self::train(),
            ProfileName::Test => Self::test(),
        }
    }

    fn date_added(&self) -> &'static str {
        match self.name {
            ProfileName::Train => "2024-03-31",
            ProfileName::Test => "2024-06-30",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCompany {
    pub stock_code: String,
    pub name: String,
    pub industry: String,
    pub exchange: String,
    pub stock_indices: String,
    pub format: FormatKind,
}

const BANKS: &[(&str, &str, &str, &str)] = &[
    ("HDB", "HDBank", "HOSE", "VN30"),
    ("VPB", "VPBank", "HOSE", "VN30"),
    ("MSB", "Maritime Bank", "HOSE", "VN30"),
    ("KLB", "Kienlongbank", "UPCOM", ""),
    ("VCB", "Vietcombank", "HOSE", "VN30"),
    ("BID", "BIDV", "HOSE", "VN30"),
    ("CTG", "VietinBank", "HOSE", "VN30"),
    ("TCB", "Techcombank", "HOSE", "VN30"),
    ("MBB", "Military Commercial Bank", "HOSE", "VN30"),
    ("ACB", "Asia Commercial Bank", "HOSE", "VN30"),
    ("STB", "Sacombank", "HOSE", "VN30"),
    ("SHB", "Saigon-Hanoi Bank", "HOSE", "VN30"),
    ("TPB", "TPBank", "HOSE", "VN30"),
    ("VIB", "Vietnam International Bank", "HOSE", "VN30"),
    ("LPB", "LPBank", "HOSE", ""),
    ("EIB", "Eximbank", "HOSE", ""),
    ("OCB", "Orient Commercial Bank", "HOSE", ""),
    ("SSB", "SeABank", "HOSE", "VN30"),
    ("NAB", "Nam A Bank", "HOSE", ""),
    ("BAB", "Bac A Bank", "HNX", "HNX30"),
];

/// 2023 Q3 credit growth YoY in hundredths, aligned with `BANKS`.
/// Sum is 480 over 20 banks, so the industry mean is exactly 0.24.
const BANK_CDG_2023Q3: [i64; 20] = [
    64, 52, 35, 34, 23, 22, 21, 20, 19, 19, 18, 18, 17, 17, 16, 16, 18, 17, 17, 17,
];

const SECURITIES: &[(&str, &str, &str, &str)] = &[
    ("SSI", "SSI Securities", "HOSE", "VN30"),
    ("VND", "VNDirect Securities", "HOSE", ""),
    ("HCM", "Ho Chi Minh City Securities", "HOSE", ""),
    ("VCI", "Vietcap Securities", "HOSE", ""),
    ("SHS", "Saigon-Hanoi Securities", "HNX", "HNX30"),
    ("MBS", "MB Securities", "HNX", "HNX30"),
    ("FTS", "FPT Securities", "HOSE", ""),
    ("BSI", "BIDV Securities", "HOSE", ""),
];

const CORPORATIONS: &[(&str, &str, &str, &str, &str)] = &[
    ("HPG", "Hoa Phat Group", "Materials", "HOSE", "VN30"),
    ("HSG", "Hoa Sen Group", "Materials", "HOSE", ""),
    ("NKG", "Nam Kim Steel", "Materials", "HOSE", ""),
    ("DGC", "Duc Giang Chemicals", "Materials", "HOSE", ""),
    ("GVR", "Vietnam Rubber Group", "Materials", "HOSE", "VN30"),
    ("VNM", "Vinamilk", "Consumer Staples", "HOSE", "VN30"),
    ("MSN", "Masan Group", "Consumer Staples", "HOSE", "VN30"),
    ("SAB", "Sabeco", "Consumer Staples", "HOSE", "VN30"),
    ("FPT", "FPT Corporation", "Technology", "HOSE", "VN30"),
    ("CMG", "CMC Corporation", "Technology", "HOSE", ""),
    ("MWG", "Mobile World Investment", "Retail", "HOSE", "VN30"),
    ("PNJ", "Phu Nhuan Jewelry", "Retail", "HOSE", ""),
    ("FRT", "FPT Digital Retail", "Retail", "HOSE", ""),
    ("VIC", "Vingroup", "Real Estate", "HOSE", "VN30"),
    ("VHM", "Vinhomes", "Real Estate", "HOSE", "VN30"),
    ("VRE", "Vincom Retail", "Real Estate", "HOSE", "VN30"),
    ("NVL", "Novaland", "Real Estate", "HOSE", ""),
    ("KDH", "Khang Dien House", "Real Estate", "HOSE", ""),
    ("NLG", "Nam Long Investment", "Real Estate", "HOSE", ""),
    ("DXG", "Dat Xanh Group", "Real Estate", "HOSE", ""),
    ("PDR", "Phat Dat Real Estate", "Real Estate", "HOSE", ""),
    ("KBC", "Kinh Bac City", "Industrials", "HOSE", ""),
    ("BCM", "Becamex IDC", "Industrials", "HOSE", "VN30"),
    ("GMD", "Gemadept", "Industrials", "HOSE", ""),
    ("VJC", "Vietjet Aviation", "Industrials", "HOSE", "VN30"),
    ("CTD", "Coteccons Construction", "Industrials", "HOSE", ""),
    ("IDC", "IDICO Corporation", "Industrials", "HNX", "HNX30"),
    ("GAS", "PetroVietnam Gas", "Energy", "HOSE", "VN30"),
    ("PLX", "Petrolimex", "Energy", "HOSE", "VN30"),
    ("BSR", "Binh Son Refining", "Energy", "UPCOM", ""),
    ("PVS", "PetroVietnam Technical Services", "Energy", "HNX", "HNX30"),
    ("POW", "PetroVietnam Power", "Utilities", "HOSE", "VN30"),
    ("REE", "Refrigeration Electrical Engineering", "Utilities", "HOSE", ""),
    ("PC1", "PC1 Group", "Utilities", "HOSE", ""),
];

const FILLER_INDUSTRIES: [&str; 8] = [
    "Materials",
    "Consumer Staples",
    "Technology",
    "Retail",
    "Real Estate",
    "Industrials",
    "Energy",
    "Utilities",
];

const EXCHANGES: [&str; 3] = ["HOSE", "HNX", "UPCOM"];

const HOLDINGS: &[(&str, &str)] = &[
    ("VIC", "VHM"),
    ("VIC", "VRE"),
    ("FPT", "FRT"),
    ("MSN", "Masan Consumer"),
    ("HPG", "Hoa Phat Dung Quat Steel"),
    ("GAS", "PV Gas South"),
    ("MWG", "Bach Hoa Xanh"),
];

const ROSTER_SIZE: usize = 200;

/// The full 200-company roster in seeding order. Named companies first, then
/// synthetic tickers.
pub fn roster() -> Vec<FixtureCompany> {
    let mut out = Vec::with_capacity(ROSTER_SIZE);
    for (code, name, exchange, idx) in BANKS {
        out.push(FixtureCompany {
            stock_code: code.to_string(),
            name: name.to_string(),
            industry: "Banking".into(),
            exchange: exchange.to_string(),
            stock_indices: idx.to_string(),
            format: FormatKind::Bank,
        });
    }
    for (code, name, exchange, idx) in SECURITIES {
        out.push(FixtureCompany {
            stock_code: code.to_string(),
            name: name.to_string(),
            industry: "Securities".into(),
            exchange: exchange.to_string(),
            stock_indices: idx.to_string(),
            format: FormatKind::Securities,
        });
    }
    for (code, name, industry, exchange, idx) in CORPORATIONS {
        out.push(FixtureCompany {
            stock_code: code.to_string(),
            name: name.to_string(),
            industry: industry.to_string(),
            exchange: exchange.to_string(),
            stock_indices: idx.to_string(),
            format: FormatKind::Corporation,
        });
    }
    let mut taken: HashSet<String> = out.iter().map(|c| c.stock_code.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_f1a7);
    let mut i = 0;
    while out.len() < ROSTER_SIZE {
        let ticker: String = (0..3).map(|_| rng.gen_range(b'A'..=b'Z') as char).collect();
        if !taken.insert(ticker.clone()) {
            continue;
        }
        out.push(FixtureCompany {
            name: format!("{ticker} Joint Stock Company"),
            stock_code: ticker,
            industry: FILLER_INDUSTRIES[i % FILLER_INDUSTRIES.len()].into(),
            exchange: EXCHANGES[i % EXCHANGES.len()].into(),
            stock_indices: String::new(),
            format: FormatKind::Corporation,
        });
        i += 1;
    }
    out
}

fn is_flow(unified: &str) -> bool {
    matches!(
        unified,
        "NET_REVENUE"
            | "GROSS_PROFIT"
            | "OPERATING_PROFIT"
            | "PROFIT_BEFORE_TAX"
            | "NET_INCOME"
            | "OPERATING_CASH_FLOW"
            | "NET_INTEREST_INCOME"
            | "NET_FEE_INCOME"
            | "CREDIT_LOSS_PROVISION"
            | "BROKERAGE_REVENUE"
    )
}

/// Size of a line item relative to the company's scale, in thousandths.
fn weight(unified: &str) -> i64 {
    match unified {
        "TOTAL_ASSETS" => 1000,
        "TOTAL_LIAB" => 620,
        "OWNERS_EQUITY" => 380,
        "CASH_EQ" => 60,
        "ST_RECEIVABLES" => 120,
        "INVENTORY" => 150,
        "FIXED_ASSETS" => 300,
        "LOANS_TO_CUSTOMERS" => 650,
        "CUSTOMER_DEPOSITS" => 700,
        "FVTPL_ASSETS" => 250,
        "MARGIN_LENDING" => 400,
        "NET_REVENUE" => 180,
        "GROSS_PROFIT" => 40,
        "OPERATING_PROFIT" => 25,
        "PROFIT_BEFORE_TAX" => 22,
        "NET_INCOME" => 18,
        "OPERATING_CASH_FLOW" => 20,
        "NET_INTEREST_INCOME" => 9,
        "NET_FEE_INCOME" => 2,
        "CREDIT_LOSS_PROVISION" => 3,
        "BROKERAGE_REVENUE" => 12,
        _ => 10,
    }
}

/// Ratio codes per layout with their value range in hundredths.
fn ratio_specs(format: FormatKind) -> Vec<(&'static str, RangeInclusive<i64>)> {
    let mut specs = vec![
        ("ROE", 5..=30),
        ("ROE4Q", 5..=30),
        ("ROA", 1..=4),
        ("EPS", 50_000..=600_000),
        ("PE", 500..=2500),
        ("PB", 50..=400),
        ("NetIncomeYoY", -30..=60),
    ];
    match format {
        FormatKind::Bank => specs.extend([("CDGYoY", 5..=23), ("NIM", 2..=6), ("NPL", 1..=5)]),
        FormatKind::Securities => specs.extend([("RevenueYoY", -20..=40), ("DebtToEquity", 20..=250)]),
        FormatKind::Corporation => specs.extend([
            ("RevenueYoY", -20..=40),
            ("CurrentRatio", 80..=300),
            ("DebtToEquity", 20..=250),
            ("InventoryTurnover", 100..=1200),
            ("GrossMargin", 5..=45),
        ]),
    }
    specs
}

struct Generated {
    statements: Vec<(FormatKind, RawStatementRecord)>,
    ratios: Vec<(String, String, i32, i32, f64)>,
    explanations: Vec<(String, String, i32, i32, i64)>,
}

fn generate(companies: &[FixtureCompany], years: &RangeInclusive<i32>, mapping: &AccountMapping) -> Generated {
    let mut g = Generated {
        statements: Vec::new(),
        ratios: Vec::new(),
        explanations: Vec::new(),
    };
    for company in companies {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(company.stock_code.as_bytes()));
        // Scale in billions of VND.
        let scale: i64 = rng.gen_range(1_000..=60_000) * 1_000_000_000;
        let entries: Vec<_> = mapping.for_format(company.format).collect();
        for year in years.clone() {
            let mut quarterly: Vec<Vec<i64>> = Vec::with_capacity(4);
            for _q in 1..=4 {
                let vals = entries
                    .iter()
                    .map(|e| {
                        let jitter = rng.gen_range(800..=1200);
                        let base = scale / 1000 * weight(&e.unified_code) / 1000 * jitter;
                        let base = if is_flow(&e.unified_code) { base / 4 } else { base };
                        // Round to millions.
                        base / 1_000_000 * 1_000_000
                    })
                    .collect();
                quarterly.push(vals);
            }
            for q in 0..=4 {
                for (j, e) in entries.iter().enumerate() {
                    let value = if q == 0 {
                        if is_flow(&e.unified_code) {
                            quarterly.iter().map(|v| v[j]).sum()
                        } else {
                            quarterly[3][j]
                        }
                    } else {
                        quarterly[q - 1][j]
                    };
                    g.statements.push((
                        company.format,
                        RawStatementRecord {
                            stock_code: company.stock_code.clone(),
                            year,
                            quarter: q as i32,
                            raw_code: e.raw_code.clone(),
                            data: value.to_string(),
                        },
                    ));
                    let explain = match (company.format, e.unified_code.as_str()) {
                        (FormatKind::Bank, "LOANS_TO_CUSTOMERS") => {
                            vec![
                                ("LOANS_SHORT_TERM", value / 10 * 6),
                                ("LOANS_LONG_TERM", value / 10 * 4),
                            ]
                        }
                        (_, "TOTAL_ASSETS") if company.industry == "Real Estate" => {
                            vec![("REAL_ESTATE_HOLDINGS", value / 10 * 3)]
                        }
                        _ => vec![],
                    };
                    for (code, v) in explain {
                        g.explanations
                            .push((code.to_string(), company.stock_code.clone(), year, q as i32, v));
                    }
                }
            }
            for q in 0..=4 {
                for (code, range) in ratio_specs(company.format) {
                    let hundredths = rng.gen_range(range);
                    g.ratios.push((
                        code.to_string(),
                        company.stock_code.clone(),
                        year,
                        q,
                        hundredths as f64 / 100.0,
                    ));
                }
            }
        }
        if company.format == FormatKind::Bank {
            let pos = BANKS
                .iter()
                .position(|b| b.0 == company.stock_code)
                .expect("bank roster");
            let pinned = BANK_CDG_2023Q3[pos] as f64 / 100.0;
            for r in g.ratios.iter_mut() {
                if r.0 == "CDGYoY" && r.1 == company.stock_code && r.2 == 2023 && r.3 == 3 {
                    r.4 = pinned;
                }
            }
        }
    }
    g
}

impl Warehouse {
    /// Replaces the warehouse contents with the given profile.
    pub fn seed(&mut self, profile: &FixtureProfile) -> Result<(), StoreError> {
        self.clear()?;
        let companies: Vec<FixtureCompany> = roster().into_iter().take(profile.company_count).collect();
        let mapping = AccountMapping::builtin(self.catalog());
        let generated = generate(&companies, &profile.year_range, &mapping);
        let date = profile.date_added();

        {
            let tx = self.writer().transaction()?;
            {
                let mut ins = tx.prepare(
                    "INSERT INTO company_info (stock_code, industry, exchange, stock_indices, is_bank, is_securities)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                )?;
                for c in &companies {
                    ins.execute(rusqlite::params![
                        c.stock_code,
                        c.industry,
                        c.exchange,
                        c.stock_indices,
                        c.format == FormatKind::Bank,
                        c.format == FormatKind::Securities
                    ])?;
                }
                let present: HashSet<&str> = companies.iter().map(|c| c.stock_code.as_str()).collect();
                let mut ins = tx.prepare("INSERT INTO sub_and_shareholder (stock_code, invest_on) VALUES (?1, ?2)")?;
                for (parent, child) in HOLDINGS {
                    if present.contains(parent) {
                        ins.execute([parent, child])?;
                    }
                }
                let mut ins = tx.prepare(
                    "INSERT INTO financial_ratio (ratio_code, stock_code, year, quarter, data, date_added)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                )?;
                for (code, stock, year, q, v) in &generated.ratios {
                    ins.execute(rusqlite::params![code, stock, year, q, v, date])?;
                }
                let mut ins = tx.prepare(
                    "INSERT INTO financial_statement_explaination (category_code, stock_code, year, quarter, data, date_added)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
                )?;
                for (code, stock, year, q, v) in &generated.explanations {
                    ins.execute(rusqlite::params![code, stock, year, q, v, date])?;
                }
            }
            tx.commit()?;
        }

        for format in FormatKind::ALL {
            let rows = generated
                .statements
                .iter()
                .filter(|(f, _)| *f == format)
                .map(|(_, r)| r.clone());
            let report = self.ingest_statements(rows, format, &mapping, date)?;
            if let Some(r) = report.rejected.first() {
                return Err(StoreError::Fixture(format!("fixture row rejected: {}", r.detail)));
            }
        }

        let tx = self.writer().transaction()?;
        tx.execute(
            "INSERT INTO industry_financial_ratio (industry, ratio_code, year, quarter, data_mean, date_added)
             SELECT ci.industry, fr.ratio_code, fr.year, fr.quarter, ROUND(AVG(fr.data), 4), ?1
             FROM financial_ratio fr JOIN company_info ci ON fr.stock_code = ci.stock_code
             GROUP BY ci.industry, fr.ratio_code, fr.year, fr.quarter",
            [date],
        )?;
        tx.execute(
            "INSERT INTO industry_financial_statement (industry, year, quarter, category_code, data_mean, data_sum, date_added)
             SELECT ci.industry, fs.year, fs.quarter, fs.category_code, ROUND(AVG(fs.data), 2), SUM(fs.data), ?1
             FROM financial_statement fs JOIN company_info ci ON fs.stock_code = ci.stock_code
             GROUP BY ci.industry, fs.year, fs.quarter, fs.category_code",
            [date],
        )?;
        tx.commit()?;
        Ok(())
    }
}

/// Builds a fresh in-memory warehouse seeded with `profile`.
pub fn seed_fixture(profile: &FixtureProfile) -> Result<Warehouse, StoreError> {
    let mut wh = Warehouse::in_memory()?;
    wh.seed(profile)?;
    Ok(wh)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_is_unique_and_sized() {
        let r = roster();
        assert_eq!(r.len(), 200);
        let codes: HashSet<_> = r.iter().map(|c| &c.stock_code).collect();
        assert_eq!(codes.len(), 200);
    }

    #[test]
    fn pinned_bank_growth_averages_to_the_industry_mean() {
        assert_eq!(BANK_CDG_2023Q3.len(), BANKS.len());
        let sum: i64 = BANK_CDG_2023Q3.iter().sum();
        assert_eq!(sum, 24 * BANK_CDG_2023Q3.len() as i64);
        let above: Vec<&str> = BANKS
            .iter()
            .zip(BANK_CDG_2023Q3)
            .filter(|(_, v)| *v > 24)
            .map(|(b, _)| b.0)
            .collect();
        assert_eq!(above, ["HDB", "VPB", "MSB", "KLB"]);
    }

    #[test]
    fn profile_names_parse() {
        assert_eq!("TEST".parse::<ProfileName>().unwrap(), ProfileName::Test);
        assert!("dev".parse::<ProfileName>().is_err());
    }
}
