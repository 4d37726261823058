//! SQLite sessions over a small function table, so the same driver code runs
//! against the statically linked release and against any `libsqlite3`
//! shared object loaded at runtime.

use std::ffi::{c_char, c_int, c_uchar, c_void, CStr, CString};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use libsqlite3_sys as ffi;

use super::{ColumnInfo, Engine, EngineProfile, ErrorKind, ExecutionError, QueryResult};
use crate::error::DriverError;
use crate::value::SqlValue;

type Db = ffi::sqlite3;
type Stmt = ffi::sqlite3_stmt;
type ProgressCallback = Option<unsafe extern "C" fn(*mut c_void) -> c_int>;

/// Largest string or blob a statement may produce.
const MAX_VALUE_LENGTH: c_int = 1_000_000;
/// VM instructions between deadline checks.
const PROGRESS_PERIOD: c_int = 1000;

#[derive(Clone, Copy)]
struct Api {
    open_v2: unsafe extern "C" fn(*const c_char, *mut *mut Db, c_int, *const c_char) -> c_int,
    close: unsafe extern "C" fn(*mut Db) -> c_int,
    prepare_v2: unsafe extern "C" fn(*mut Db, *const c_char, c_int, *mut *mut Stmt, *mut *const c_char) -> c_int,
    step: unsafe extern "C" fn(*mut Stmt) -> c_int,
    finalize: unsafe extern "C" fn(*mut Stmt) -> c_int,
    column_count: unsafe extern "C" fn(*mut Stmt) -> c_int,
    column_name: unsafe extern "C" fn(*mut Stmt, c_int) -> *const c_char,
    column_decltype: unsafe extern "C" fn(*mut Stmt, c_int) -> *const c_char,
    column_type: unsafe extern "C" fn(*mut Stmt, c_int) -> c_int,
    column_int64: unsafe extern "C" fn(*mut Stmt, c_int) -> i64,
    column_double: unsafe extern "C" fn(*mut Stmt, c_int) -> f64,
    column_text: unsafe extern "C" fn(*mut Stmt, c_int) -> *const c_uchar,
    column_blob: unsafe extern "C" fn(*mut Stmt, c_int) -> *const c_void,
    column_bytes: unsafe extern "C" fn(*mut Stmt, c_int) -> c_int,
    errmsg: unsafe extern "C" fn(*mut Db) -> *const c_char,
    progress_handler: unsafe extern "C" fn(*mut Db, c_int, ProgressCallback, *mut c_void),
    limit: unsafe extern "C" fn(*mut Db, c_int, c_int) -> c_int,
    libversion: unsafe extern "C" fn() -> *const c_char,
}

impl Api {
    fn bundled() -> Self {
        Self {
            open_v2: ffi::sqlite3_open_v2,
            close: ffi::sqlite3_close,
            prepare_v2: ffi::sqlite3_prepare_v2,
            step: ffi::sqlite3_step,
            finalize: ffi::sqlite3_finalize,
            column_count: ffi::sqlite3_column_count,
            column_name: ffi::sqlite3_column_name,
            column_decltype: ffi::sqlite3_column_decltype,
            column_type: ffi::sqlite3_column_type,
            column_int64: ffi::sqlite3_column_int64,
            column_double: ffi::sqlite3_column_double,
            column_text: ffi::sqlite3_column_text,
            column_blob: ffi::sqlite3_column_blob,
            column_bytes: ffi::sqlite3_column_bytes,
            errmsg: ffi::sqlite3_errmsg,
            progress_handler: ffi::sqlite3_progress_handler,
            limit: ffi::sqlite3_limit,
            libversion: ffi::sqlite3_libversion,
        }
    }
}

/// A `libsqlite3` shared object opened at runtime.
pub struct SqliteLibrary {
    path: PathBuf,
    api: Api,
    // Keeps the function pointers in `api` valid.
    _lib: libloading::Library,
}

impl SqliteLibrary {
    pub fn load(path: PathBuf) -> Result<Self, DriverError> {
        let err = |e: libloading::Error| DriverError::Load { path: path.clone(), message: e.to_string() };
        // SAFETY: loading runs the library's initializers; libsqlite3 has
        // none with observable side effects.
        let lib = unsafe { libloading::Library::new(&path) }.map_err(err)?;
        macro_rules! sym {
            ($name:literal) => {
                // SAFETY: the symbol type matches the documented C signature.
                *unsafe { lib.get(concat!($name, "\0").as_bytes()) }.map_err(err)?
            };
        }
        let api = Api {
            open_v2: sym!("sqlite3_open_v2"),
            close: sym!("sqlite3_close"),
            prepare_v2: sym!("sqlite3_prepare_v2"),
            step: sym!("sqlite3_step"),
            finalize: sym!("sqlite3_finalize"),
            column_count: sym!("sqlite3_column_count"),
            column_name: sym!("sqlite3_column_name"),
            column_decltype: sym!("sqlite3_column_decltype"),
            column_type: sym!("sqlite3_column_type"),
            column_int64: sym!("sqlite3_column_int64"),
            column_double: sym!("sqlite3_column_double"),
            column_text: sym!("sqlite3_column_text"),
            column_blob: sym!("sqlite3_column_blob"),
            column_bytes: sym!("sqlite3_column_bytes"),
            errmsg: sym!("sqlite3_errmsg"),
            progress_handler: sym!("sqlite3_progress_handler"),
            limit: sym!("sqlite3_limit"),
            libversion: sym!("sqlite3_libversion"),
        };
        Ok(Self { path, api, _lib: lib })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

struct Deadline {
    at: Option<Instant>,
    fired: bool,
}

unsafe extern "C" fn progress(arg: *mut c_void) -> c_int {
    // SAFETY: `arg` is the boxed Deadline owned by the session, which
    // outlives the connection the handler is registered on.
    let deadline = unsafe { &mut *(arg as *mut Deadline) };
    match deadline.at {
        Some(at) if Instant::now() >= at => {
            deadline.fired = true;
            1
        }
        _ => 0,
    }
}

/// One in-memory database connection.
pub struct SqliteSession {
    api: Api,
    // Holds the dynamic library open for as long as the connection lives.
    library: Option<Arc<SqliteLibrary>>,
    db: *mut Db,
    deadline: Box<Deadline>,
    profile: EngineProfile,
}

// SAFETY: the connection is opened in serialized or multi-thread mode and a
// session is only ever used by one thread at a time (`&mut self`).
unsafe impl Send for SqliteSession {}

impl SqliteSession {
    pub fn open_bundled(profile: EngineProfile) -> Result<Self, DriverError> {
        Self::open_with(Api::bundled(), None, profile)
    }

    pub fn open_dynamic(library: Arc<SqliteLibrary>, profile: EngineProfile) -> Result<Self, DriverError> {
        let api = library.api;
        Self::open_with(api, Some(library), profile)
    }

    fn open_with(api: Api, library: Option<Arc<SqliteLibrary>>, profile: EngineProfile) -> Result<Self, DriverError> {
        let mut session = Self {
            api,
            library,
            db: ptr::null_mut(),
            deadline: Box::new(Deadline { at: None, fired: false }),
            profile,
        };
        session.connect()?;
        Ok(session)
    }

    fn connect(&mut self) -> Result<(), DriverError> {
        let name = CString::new(":memory:").unwrap();
        let mut db = ptr::null_mut();
        let flags = ffi::SQLITE_OPEN_READWRITE | ffi::SQLITE_OPEN_CREATE | ffi::SQLITE_OPEN_NOMUTEX;
        // SAFETY: valid NUL-terminated name and out-pointer.
        let rc = unsafe { (self.api.open_v2)(name.as_ptr(), &mut db, flags, ptr::null()) };
        if rc != ffi::SQLITE_OK {
            let msg = if db.is_null() { format!("error code {rc}") } else { self.message(db) };
            if !db.is_null() {
                unsafe { (self.api.close)(db) };
            }
            return Err(DriverError::Open(msg));
        }
        self.db = db;
        let arg = &mut *self.deadline as *mut Deadline as *mut c_void;
        // SAFETY: db is open; the deadline box lives as long as `self`.
        unsafe {
            (self.api.progress_handler)(db, PROGRESS_PERIOD, Some(progress), arg);
            (self.api.limit)(db, ffi::SQLITE_LIMIT_LENGTH, MAX_VALUE_LENGTH);
        }
        Ok(())
    }

    fn disconnect(&mut self) {
        if !self.db.is_null() {
            // SAFETY: every statement is finalized before execute returns.
            unsafe { (self.api.close)(self.db) };
            self.db = ptr::null_mut();
        }
    }

    fn message(&self, db: *mut Db) -> String {
        // SAFETY: errmsg returns a NUL-terminated string owned by SQLite.
        unsafe { cstr_lossy((self.api.errmsg)(db)) }.unwrap_or_default()
    }

    fn classify(&self, rc: c_int) -> ExecutionError {
        let message = self.message(self.db);
        if self.deadline.fired || rc == ffi::SQLITE_INTERRUPT {
            return ExecutionError::new(ErrorKind::Hang, format!("timeout elapsed ({message})"));
        }
        let kind = if self.profile.is_expected_error(&message) { ErrorKind::Expected } else { ErrorKind::Internal };
        ExecutionError::new(kind, message)
    }

    fn read_value(&self, stmt: *mut Stmt, i: c_int) -> SqlValue {
        let api = &self.api;
        // SAFETY: stmt has a current row and `i` is below the column count.
        unsafe {
            match (api.column_type)(stmt, i) {
                ffi::SQLITE_INTEGER => SqlValue::Integer((api.column_int64)(stmt, i)),
                ffi::SQLITE_FLOAT => SqlValue::Real((api.column_double)(stmt, i)),
                ffi::SQLITE_TEXT => {
                    let p = (api.column_text)(stmt, i);
                    let n = (api.column_bytes)(stmt, i) as usize;
                    let bytes = if p.is_null() { &[][..] } else { std::slice::from_raw_parts(p, n) };
                    SqlValue::Text(String::from_utf8_lossy(bytes).into_owned())
                }
                ffi::SQLITE_BLOB => {
                    let p = (api.column_blob)(stmt, i) as *const u8;
                    let n = (api.column_bytes)(stmt, i) as usize;
                    let bytes = if p.is_null() { &[][..] } else { std::slice::from_raw_parts(p, n) };
                    SqlValue::Blob(bytes.to_vec())
                }
                _ => SqlValue::Null,
            }
        }
    }

    /// Runs one prepared statement to completion.
    fn run(&mut self, stmt: *mut Stmt) -> Result<QueryResult, ExecutionError> {
        let api = self.api;
        // SAFETY: stmt is a live prepared statement on self.db.
        let ncol = unsafe { (api.column_count)(stmt) };
        let columns = (0..ncol)
            .map(|i| unsafe {
                ColumnInfo {
                    name: cstr_lossy((api.column_name)(stmt, i)).unwrap_or_default(),
                    declared_type: cstr_lossy((api.column_decltype)(stmt, i)),
                }
            })
            .collect();
        let mut rows = Vec::new();
        loop {
            match unsafe { (api.step)(stmt) } {
                ffi::SQLITE_ROW => rows.push((0..ncol).map(|i| self.read_value(stmt, i)).collect()),
                ffi::SQLITE_DONE => break,
                rc => return Err(self.classify(rc)),
            }
        }
        Ok(QueryResult { columns, rows, ordered: false })
    }
}

impl Engine for SqliteSession {
    fn profile(&self) -> &EngineProfile {
        &self.profile
    }

    fn version(&self) -> String {
        // SAFETY: libversion returns a static NUL-terminated string.
        unsafe { cstr_lossy((self.api.libversion)()) }.unwrap_or_default()
    }

    fn execute(&mut self, sql: &str, timeout: Duration) -> Result<QueryResult, ExecutionError> {
        if self.db.is_null() {
            return Err(ExecutionError::new(ErrorKind::Crash, "session is closed"));
        }
        let text = CString::new(sql)
            .map_err(|_| ExecutionError::new(ErrorKind::Expected, "statement contains a NUL byte"))?;
        self.deadline.at = Some(Instant::now() + timeout);
        self.deadline.fired = false;
        let mut tail: *const c_char = text.as_ptr();
        let mut last = QueryResult::default();
        let outcome = loop {
            // SAFETY: tail points into `text`, which is NUL-terminated.
            if unsafe { *tail } == 0 {
                break Ok(());
            }
            let mut stmt = ptr::null_mut();
            let mut next: *const c_char = ptr::null();
            let rc = unsafe { (self.api.prepare_v2)(self.db, tail, -1, &mut stmt, &mut next) };
            if rc != ffi::SQLITE_OK {
                break Err(self.classify(rc));
            }
            if stmt.is_null() {
                // Whitespace or a comment only.
                break Ok(());
            }
            let result = self.run(stmt);
            unsafe { (self.api.finalize)(stmt) };
            match result {
                Ok(r) => last = r,
                Err(e) => break Err(e),
            }
            tail = next;
        };
        self.deadline.at = None;
        outcome.map(|_| last)
    }

    fn reopen(&mut self) -> Result<(), DriverError> {
        self.disconnect();
        self.connect()
    }
}

impl Drop for SqliteSession {
    fn drop(&mut self) {
        self.disconnect();
        // The library (if any) is released after the connection is closed.
        self.library.take();
    }
}

unsafe fn cstr_lossy(p: *const c_char) -> Option<String> {
    if p.is_null() {
        None
    } else {
        Some(unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned())
    }
}
