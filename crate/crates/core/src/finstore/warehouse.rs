use super::catalog::SchemaCatalog;
use super::StoreError;
use crate::table::{ResultTable, Value};
use rusqlite::{Connection, ErrorCode, OpenFlags};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Environment variable holding the warehouse connection string.
pub const DATABASE_URL_ENV: &str = "FINSQL_DATABASE_URL";

static MEMORY_DB_SEQ: AtomicUsize = AtomicUsize::new(0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecErrorKind {
    Syntax,
    Semantic,
    Timeout,
    Empty,
}

impl fmt::Display for ExecErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExecErrorKind::Syntax => "syntax",
            ExecErrorKind::Semantic => "semantic",
            ExecErrorKind::Timeout => "timeout",
            ExecErrorKind::Empty => "empty",
        })
    }
}

/// Failure of a read-only query. An empty result is reported here too so the
/// correction loop can react to it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind} error: {message}")]
pub struct ExecError {
    pub kind: ExecErrorKind,
    pub message: String,
}

impl ExecError {
    pub fn new(kind: ExecErrorKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    fn from_sqlite(err: rusqlite::Error) -> Self {
        let classify = |code: ErrorCode, msg: String| {
            if code == ErrorCode::OperationInterrupted {
                ExecError::new(ExecErrorKind::Timeout, "query exceeded its time budget")
            } else if msg.contains("syntax error")
                || msg.contains("incomplete input")
                || msg.contains("unrecognized token")
            {
                ExecError::new(ExecErrorKind::Syntax, msg)
            } else {
                ExecError::new(ExecErrorKind::Semantic, msg)
            }
        };
        match err {
            rusqlite::Error::SqliteFailure(e, msg) => {
                let msg = msg.unwrap_or_else(|| e.to_string());
                classify(e.code, msg)
            }
            rusqlite::Error::SqlInputError { error, msg, offset, .. } => {
                classify(error.code, format!("{msg} (at offset {offset})"))
            }
            rusqlite::Error::MultipleStatement => {
                ExecError::new(ExecErrorKind::Semantic, "multiple statements are not allowed")
            }
            other => ExecError::new(ExecErrorKind::Semantic, other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecLimits {
    pub row_cap: usize,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
}

impl Default for ExecLimits {
    fn default() -> Self {
        Self {
            row_cap: 1000,
            timeout: Duration::from_secs(5),
        }
    }
}

pub(crate) mod duration_ms {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone)]
enum Location {
    Memory(String),
    File(PathBuf),
}

/// Handle to the warehouse. Writes (`&mut self`) happen before serving;
/// `execute_readonly` is safe to call from many threads at once.
pub struct Warehouse {
    location: Location,
    writer: Mutex<Connection>,
    readers: Mutex<Vec<Connection>>,
    catalog: SchemaCatalog,
}

impl fmt::Debug for Warehouse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Warehouse").field("location", &self.location).finish()
    }
}

impl Warehouse {
    /// Private in-memory warehouse with the schema created and no rows.
    pub fn in_memory() -> Result<Self, StoreError> {
        let seq = MEMORY_DB_SEQ.fetch_add(1, Ordering::Relaxed);
        let uri = format!(
            "file:finsql-mem-{}-{}?mode=memory&cache=shared",
            std::process::id(),
            seq
        );
        let writer = Connection::open_with_flags(
            &uri,
            OpenFlags::SQLITE_OPEN_READ_WRITE
                | OpenFlags::SQLITE_OPEN_CREATE
                | OpenFlags::SQLITE_OPEN_URI
                | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )?;
        Self::with_writer(Location::Memory(uri), writer)
    }

    /// File-backed warehouse; the schema is created when missing.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let writer = Connection::open(&path)?;
        Self::with_writer(Location::File(path), writer)
    }

    /// Accepts `:memory:`, `sqlite::memory:`, `sqlite://<path>`, `sqlite:<path>`
    /// or a bare path.
    pub fn open_url(url: &str) -> Result<Self, StoreError> {
        let url = url.trim();
        match url {
            "" => Err(StoreError::BadConnectionString(url.to_string())),
            ":memory:" | "sqlite::memory:" => Self::in_memory(),
            _ => {
                let path = url
                    .strip_prefix("sqlite://")
                    .or_else(|| url.strip_prefix("sqlite:"))
                    .unwrap_or(url);
                if path.is_empty() {
                    return Err(StoreError::BadConnectionString(url.to_string()));
                }
                Self::open(path)
            }
        }
    }

    /// Opens the warehouse named by `FINSQL_DATABASE_URL`.
    pub fn from_env() -> Result<Self, StoreError> {
        let url = std::env::var(DATABASE_URL_ENV).map_err(|_| StoreError::MissingEnv(DATABASE_URL_ENV))?;
        Self::open_url(&url)
    }

    fn with_writer(location: Location, writer: Connection) -> Result<Self, StoreError> {
        let catalog = SchemaCatalog::financial();
        for table in &catalog.tables {
            writer.execute(&table.ddl(), [])?;
        }
        writer.execute_batch(
            "CREATE UNIQUE INDEX IF NOT EXISTS fs_key ON financial_statement(stock_code, year, quarter, category_code);
             CREATE UNIQUE INDEX IF NOT EXISTS fr_key ON financial_ratio(ratio_code, stock_code, year, quarter);
             CREATE UNIQUE INDEX IF NOT EXISTS ci_key ON company_info(stock_code);",
        )?;
        Ok(Self {
            location,
            writer: Mutex::new(writer),
            readers: Mutex::new(Vec::new()),
            catalog,
        })
    }

    pub fn catalog(&self) -> &SchemaCatalog {
        &self.catalog
    }

    pub(crate) fn writer(&mut self) -> &mut Connection {
        self.writer.get_mut().unwrap_or_else(|p| p.into_inner())
    }

    /// Deletes every row from every table.
    pub fn clear(&mut self) -> Result<(), StoreError> {
        // Pooled readers would otherwise hold stale schema caches.
        self.readers.get_mut().unwrap_or_else(|p| p.into_inner()).clear();
        let names: Vec<String> = self.catalog.tables.iter().map(|t| t.name.clone()).collect();
        let tx = self.writer().transaction()?;
        for name in names {
            tx.execute(&format!("DELETE FROM {name}"), [])?;
        }
        tx.commit()?;
        Ok(())
    }

    fn open_reader(&self) -> Result<Connection, rusqlite::Error> {
        let flags = OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX;
        let conn = match &self.location {
            Location::Memory(uri) => Connection::open_with_flags(uri, flags | OpenFlags::SQLITE_OPEN_URI)?,
            Location::File(path) => Connection::open_with_flags(path, flags)?,
        };
        conn.execute_batch("PRAGMA query_only = ON")?;
        Ok(conn)
    }

    fn checkout(&self) -> Result<Connection, ExecError> {
        let pooled = self.readers.lock().unwrap_or_else(|p| p.into_inner()).pop();
        match pooled {
            Some(c) => Ok(c),
            None => self.open_reader().map_err(ExecError::from_sqlite),
        }
    }

    fn checkin(&self, conn: Connection) {
        self.readers.lock().unwrap_or_else(|p| p.into_inner()).push(conn);
    }

    /// Runs one SELECT on a read-only connection. Callers are expected to
    /// have passed the SQL through the guard first.
    pub fn execute_readonly(&self, sql: &str, limits: &ExecLimits) -> Result<ResultTable, ExecError> {
        let conn = self.checkout()?;
        let deadline = Instant::now() + limits.timeout;
        conn.progress_handler(1000, Some(move || Instant::now() >= deadline));
        let result = run_query(&conn, sql, limits.row_cap);
        conn.progress_handler(0, None::<fn() -> bool>);
        self.checkin(conn);
        result
    }

    /// Row count per table, in catalog order.
    pub fn table_counts(&self) -> Result<BTreeMap<String, i64>, StoreError> {
        let conn = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut out = BTreeMap::new();
        for t in &self.catalog.tables {
            let n: i64 = conn.query_row(&format!("SELECT count(*) FROM {}", t.name), [], |r| r.get(0))?;
            out.insert(t.name.clone(), n);
        }
        Ok(out)
    }

    pub fn company_count(&self) -> Result<i64, StoreError> {
        let conn = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        Ok(conn.query_row("SELECT count(*) FROM company_info", [], |r| r.get(0))?)
    }

    /// True once company and fact rows are present.
    pub fn is_seeded(&self) -> bool {
        self.table_counts()
            .map(|c| c["company_info"] > 0 && c["financial_ratio"] > 0)
            .unwrap_or(false)
    }

    /// Exports statement and ratio facts as delimiter-separated text with the
    /// ingest header `stock_code,year,quarter,raw_code,data`, in a stable order.
    pub fn export_facts<W: Write>(&self, out: W) -> Result<(), StoreError> {
        let conn = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["stock_code", "year", "quarter", "raw_code", "data"])?;
        let mut stmt = conn.prepare(
            "SELECT stock_code, year, quarter, category_code AS code, data FROM financial_statement
             UNION ALL
             SELECT stock_code, year, quarter, ratio_code AS code, data FROM financial_ratio
             ORDER BY 1, 2, 3, 4",
        )?;
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let record = [
                value_of(row.get_ref(0)?).to_string(),
                value_of(row.get_ref(1)?).to_string(),
                value_of(row.get_ref(2)?).to_string(),
                value_of(row.get_ref(3)?).to_string(),
                value_of(row.get_ref(4)?).to_string(),
            ];
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn value_of(v: rusqlite::types::ValueRef<'_>) -> Value {
    use rusqlite::types::ValueRef;
    match v {
        ValueRef::Null => Value::Null,
        ValueRef::Integer(i) => Value::Int(i),
        ValueRef::Real(r) => Value::Real(r),
        ValueRef::Text(t) => Value::Text(String::from_utf8_lossy(t).into_owned()),
        ValueRef::Blob(b) => Value::Text(b.iter().map(|x| format!("{x:02x}")).collect()),
    }
}

fn run_query(conn: &Connection, sql: &str, row_cap: usize) -> Result<ResultTable, ExecError> {
    let mut stmt = conn.prepare(sql.trim()).map_err(ExecError::from_sqlite)?;
    if !stmt.readonly() {
        return Err(ExecError::new(ExecErrorKind::Semantic, "statement is not read-only"));
    }
    let columns: Vec<String> = stmt.column_names().into_iter().map(String::from).collect();
    let width = columns.len();
    let mut rows = stmt.query([]).map_err(ExecError::from_sqlite)?;
    let mut out = Vec::new();
    while out.len() < row_cap {
        match rows.next().map_err(ExecError::from_sqlite)? {
            Some(row) => {
                let mut cells = Vec::with_capacity(width);
                for i in 0..width {
                    cells.push(value_of(row.get_ref(i).map_err(ExecError::from_sqlite)?));
                }
                out.push(cells);
            }
            None => break,
        }
    }
    if out.is_empty() {
        return Err(ExecError::new(ExecErrorKind::Empty, "query returned no rows"));
    }
    Ok(ResultTable::new(columns, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_result_is_an_error() {
        let wh = Warehouse::in_memory().unwrap();
        let err = wh
            .execute_readonly("SELECT 1 WHERE 1=0", &ExecLimits::default())
            .unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Empty);
    }

    #[test]
    fn malformed_sql_is_a_syntax_error() {
        let wh = Warehouse::in_memory().unwrap();
        let err = wh.execute_readonly("SELEC 1", &ExecLimits::default()).unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Syntax);
    }

    #[test]
    fn unknown_column_is_semantic() {
        let wh = Warehouse::in_memory().unwrap();
        let err = wh
            .execute_readonly("SELECT nope FROM company_info", &ExecLimits::default())
            .unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Semantic);
    }

    #[test]
    fn writes_are_refused() {
        let wh = Warehouse::in_memory().unwrap();
        let err = wh
            .execute_readonly("DELETE FROM company_info", &ExecLimits::default())
            .unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Semantic);
    }

    #[test]
    fn runaway_query_times_out() {
        let wh = Warehouse::in_memory().unwrap();
        let limits = ExecLimits {
            row_cap: 10,
            timeout: Duration::from_millis(50),
        };
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c) SELECT count(*) FROM c";
        let err = wh.execute_readonly(sql, &limits).unwrap_err();
        assert_eq!(err.kind, ExecErrorKind::Timeout);
        // The pooled connection is usable again afterwards.
        assert!(wh.execute_readonly("SELECT 1", &limits).is_ok());
    }

    #[test]
    fn row_cap_truncates_and_columns_keep_select_order() {
        let wh = Warehouse::in_memory().unwrap();
        let limits = ExecLimits {
            row_cap: 3,
            ..ExecLimits::default()
        };
        let sql = "WITH RECURSIVE c(x) AS (SELECT 1 UNION ALL SELECT x + 1 FROM c WHERE x < 10) SELECT x AS b, x * 2 AS a FROM c";
        let t = wh.execute_readonly(sql, &limits).unwrap();
        assert_eq!(t.columns, vec!["b", "a"]);
        assert_eq!(t.row_count(), 3);
        assert_eq!(t.rows[2], vec![Value::Int(3), Value::Int(6)]);
    }

    #[test]
    fn connection_strings() {
        assert!(Warehouse::open_url(":memory:").is_ok());
        assert!(matches!(
            Warehouse::open_url(""),
            Err(StoreError::BadConnectionString(_))
        ));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.db");
        let url = format!("sqlite://{}", path.display());
        let wh = Warehouse::open_url(&url).unwrap();
        assert!(wh.execute_readonly("SELECT 1", &ExecLimits::default()).is_ok());
        assert!(path.exists());
    }
}
