//! Persistent tables: `user_acc`, `user_contact` and `user_photo`.
//!
//! Backed by a single SQLite file. Every mutation is one transaction, so a
//! crash leaves the file at either the pre- or post-mutation state.

use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard};

use argon2::Argon2;
use chrono::{NaiveDate, NaiveTime};
use rand::RngCore;
use rusqlite::{params, Connection, OptionalExtension};
use serde::{Deserialize, Serialize};
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::sms::is_valid_recipient;

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const TIME_FORMAT: &str = "%H:%M:%S";

const SALT_LEN: usize = 16;
const HASH_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: i64 },
    #[error("photo {0:?} already recorded")]
    DuplicatePhoto(String),
    #[error("username {0:?} already exists")]
    DuplicateUser(String),
    #[error("invalid credentials")]
    InvalidCredentials,
    #[error("invalid {field}: {value:?}")]
    Invalid { field: &'static str, value: String },
    #[error("password hashing failed: {0}")]
    Hash(String),
    #[error("database error: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("archive file error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StoreError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserAccount {
    pub id: i64,
    pub username: String,
    pub password_hash: Vec<u8>,
    pub salt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contact {
    pub id: i64,
    pub contact_no: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub id: i64,
    pub photo_name: String,
    pub photo_time: String,
    pub photo_date: String,
}

impl PhotoRecord {
    /// Last path component of `photo_name`, the file inside the archive
    /// directory.
    pub fn file_name(&self) -> &str {
        file_component(&self.photo_name)
    }
}

/// A photo row before insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewPhoto {
    pub photo_name: String,
    pub photo_time: String,
    pub photo_date: String,
}

fn file_component(name: &str) -> &str {
    name.rsplit('/').next().unwrap_or(name)
}

fn invalid(field: &'static str, value: &str) -> StoreError {
    StoreError::Invalid {
        field,
        value: value.to_string(),
    }
}

fn validate_photo(p: &NewPhoto) -> Result<()> {
    let file = file_component(&p.photo_name);
    if file.is_empty()
        || file == "."
        || file == ".."
        || p.photo_name.contains('\\')
        || p.photo_name.contains('\0')
        || p.photo_name.split('/').any(|c| c == "..")
    {
        return Err(invalid("photo_name", &p.photo_name));
    }
    let date_ok = NaiveDate::parse_from_str(&p.photo_date, DATE_FORMAT)
        .map(|d| d.format(DATE_FORMAT).to_string() == p.photo_date)
        .unwrap_or(false);
    if !date_ok {
        return Err(invalid("photo_date", &p.photo_date));
    }
    let time_ok = NaiveTime::parse_from_str(&p.photo_time, TIME_FORMAT)
        .map(|t| t.format(TIME_FORMAT).to_string() == p.photo_time)
        .unwrap_or(false);
    if !time_ok {
        return Err(invalid("photo_time", &p.photo_time));
    }
    Ok(())
}

fn hash_password(password: &str, salt: &[u8]) -> Result<Vec<u8>> {
    let mut out = vec![0u8; HASH_LEN];
    Argon2::default()
        .hash_password_into(password.as_bytes(), salt, &mut out)
        .map_err(|e| StoreError::Hash(e.to_string()))?;
    Ok(out)
}

fn fresh_salt() -> Vec<u8> {
    let mut salt = vec![0u8; SALT_LEN];
    rand::thread_rng().fill_bytes(&mut salt);
    salt
}

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS user_acc (
    id            INTEGER PRIMARY KEY AUTOINCREMENT,
    username      TEXT NOT NULL UNIQUE,
    password_hash BLOB NOT NULL,
    salt          BLOB NOT NULL
);
CREATE TABLE IF NOT EXISTS user_contact (
    id         INTEGER PRIMARY KEY AUTOINCREMENT,
    contact_no TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS user_photo (
    id         INTEGER PRIMARY KEY AUTOINCREMENT,
    photo_name TEXT NOT NULL UNIQUE,
    photo_time TEXT NOT NULL,
    photo_date TEXT NOT NULL
);
";

pub struct Store {
    conn: Mutex<Connection>,
    archive_dir: PathBuf,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("archive_dir", &self.archive_dir)
            .finish_non_exhaustive()
    }
}

impl Store {
    /// Opens (creating if needed) the data file. `archive_dir` is where the
    /// image files named by photo records live.
    pub fn open(path: impl AsRef<Path>, archive_dir: impl Into<PathBuf>) -> Result<Store> {
        let conn = Connection::open(path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        Ok(Store {
            conn: Mutex::new(conn),
            archive_dir: archive_dir.into(),
        })
    }

    pub fn archive_dir(&self) -> &Path {
        &self.archive_dir
    }

    pub fn archive_path(&self, record: &PhotoRecord) -> PathBuf {
        self.archive_dir.join(record.file_name())
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    // user_acc

    /// Seeds the admin account when the account table is empty. Returns
    /// whether an account was created.
    pub fn bootstrap_admin(&self, username: &str, password: &str) -> Result<bool> {
        let exists: i64 = self
            .conn()
            .query_row("SELECT COUNT(*) FROM user_acc", [], |r| r.get(0))?;
        if exists > 0 {
            return Ok(false);
        }
        self.create_account(username, password)?;
        Ok(true)
    }

    pub fn create_account(&self, username: &str, password: &str) -> Result<i64> {
        if username.trim().is_empty() {
            return Err(invalid("username", username));
        }
        let salt = fresh_salt();
        let hash = hash_password(password, &salt)?;
        let conn = self.conn();
        match conn.execute(
            "INSERT INTO user_acc (username, password_hash, salt) VALUES (?1, ?2, ?3)",
            params![username, hash, salt],
        ) {
            Ok(_) => Ok(conn.last_insert_rowid()),
            Err(e) if is_unique_violation(&e) => Err(StoreError::DuplicateUser(username.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn account(&self, id: i64) -> Result<UserAccount> {
        self.conn()
            .query_row(
                "SELECT id, username, password_hash, salt FROM user_acc WHERE id = ?1",
                [id],
                row_to_account,
            )
            .optional()?
            .ok_or(StoreError::NotFound { what: "account", id })
    }

    fn account_by_name(&self, username: &str) -> Result<Option<UserAccount>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT id, username, password_hash, salt FROM user_acc WHERE username = ?1",
                [username],
                row_to_account,
            )
            .optional()?)
    }

    pub fn verify_login(&self, username: &str, password: &str) -> Result<UserAccount> {
        let Some(account) = self.account_by_name(username)? else {
            // Burn the same work as a real check so timing does not reveal
            // which usernames exist.
            let _ = hash_password(password, &[0u8; SALT_LEN]);
            return Err(StoreError::InvalidCredentials);
        };
        let candidate = hash_password(password, &account.salt)?;
        if bool::from(candidate.ct_eq(&account.password_hash)) {
            Ok(account)
        } else {
            Err(StoreError::InvalidCredentials)
        }
    }

    pub fn change_password(&self, account_id: i64, old: &str, new: &str) -> Result<()> {
        let account = self.account(account_id)?;
        let candidate = hash_password(old, &account.salt)?;
        if !bool::from(candidate.ct_eq(&account.password_hash)) {
            return Err(StoreError::InvalidCredentials);
        }
        let salt = fresh_salt();
        let hash = hash_password(new, &salt)?;
        let changed = self.conn().execute(
            "UPDATE user_acc SET password_hash = ?1, salt = ?2 WHERE id = ?3",
            params![hash, salt, account_id],
        )?;
        if changed == 0 {
            return Err(StoreError::NotFound {
                what: "account",
                id: account_id,
            });
        }
        Ok(())
    }

    // user_photo

    pub fn insert_photo(&self, photo: &NewPhoto) -> Result<i64> {
        validate_photo(photo)?;
        let conn = self.conn();
        match conn.execute(
            "INSERT INTO user_photo (photo_name, photo_time, photo_date) VALUES (?1, ?2, ?3)",
            params![photo.photo_name, photo.photo_time, photo.photo_date],
        ) {
            Ok(_) => Ok(conn.last_insert_rowid()),
            Err(e) if is_unique_violation(&e) => Err(StoreError::DuplicatePhoto(photo.photo_name.clone())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn photo(&self, id: i64) -> Result<PhotoRecord> {
        self.conn()
            .query_row(
                "SELECT id, photo_name, photo_time, photo_date FROM user_photo WHERE id = ?1",
                [id],
                row_to_photo,
            )
            .optional()?
            .ok_or(StoreError::NotFound { what: "photo", id })
    }

    pub fn photo_name_exists(&self, photo_name: &str) -> Result<bool> {
        Ok(self
            .conn()
            .query_row("SELECT 1 FROM user_photo WHERE photo_name = ?1", [photo_name], |_| {
                Ok(())
            })
            .optional()?
            .is_some())
    }

    /// Newest first by date and time, higher id first within a second.
    pub fn list_photos(&self) -> Result<Vec<PhotoRecord>> {
        let conn = self.conn();
        let mut stmt = conn.prepare(
            "SELECT id, photo_name, photo_time, photo_date FROM user_photo
             ORDER BY photo_date DESC, photo_time DESC, id DESC",
        )?;
        let rows = stmt.query_map([], row_to_photo)?;
        Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
    }

    pub fn latest_photo(&self) -> Result<Option<PhotoRecord>> {
        Ok(self
            .conn()
            .query_row(
                "SELECT id, photo_name, photo_time, photo_date FROM user_photo
                 ORDER BY photo_date DESC, photo_time DESC, id DESC LIMIT 1",
                [],
                row_to_photo,
            )
            .optional()?)
    }

    /// Removes the record, then its archived image. A crash between the two
    /// can orphan a file but never leaves a record without its file.
    pub fn delete_photo(&self, id: i64) -> Result<()> {
        let record = self.photo(id)?;
        let removed = self.conn().execute("DELETE FROM user_photo WHERE id = ?1", [id])?;
        if removed == 0 {
            return Err(StoreError::NotFound { what: "photo", id });
        }
        match std::fs::remove_file(self.archive_path(&record)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    // user_contact

    pub fn add_contact(&self, contact_no: &str) -> Result<i64> {
        if !is_valid_recipient(contact_no) {
            return Err(invalid("contact_no", contact_no));
        }
        let conn = self.conn();
        conn.execute("INSERT INTO user_contact (contact_no) VALUES (?1)", [contact_no])?;
        Ok(conn.last_insert_rowid())
    }

    pub fn delete_contact(&self, id: i64) -> Result<()> {
        let removed = self.conn().execute("DELETE FROM user_contact WHERE id = ?1", [id])?;
        if removed == 0 {
            return Err(StoreError::NotFound { what: "contact", id });
        }
        Ok(())
    }

    /// In insertion order.
    pub fn list_contacts(&self) -> Result<Vec<Contact>> {
        let conn = self.conn();
        let mut stmt = conn.prepare("SELECT id, contact_no FROM user_contact ORDER BY id")?;
        let rows = stmt.query_map([], |r| {
            Ok(Contact {
                id: r.get(0)?,
                contact_no: r.get(1)?,
            })
        })?;
        Ok(rows.collect::<rusqlite::Result<Vec<_>>>()?)
    }

    /// Runs SQLite's own structural check; `Ok(true)` means the file is sound.
    pub fn integrity_check(&self) -> Result<bool> {
        let verdict: String = self.conn().query_row("PRAGMA integrity_check", [], |r| r.get(0))?;
        Ok(verdict == "ok")
    }
}

fn is_unique_violation(e: &rusqlite::Error) -> bool {
    matches!(
        e,
        rusqlite::Error::SqliteFailure(err, _)
            if err.extended_code == rusqlite::ffi::SQLITE_CONSTRAINT_UNIQUE
    )
}

fn row_to_account(r: &rusqlite::Row<'_>) -> rusqlite::Result<UserAccount> {
    Ok(UserAccount {
        id: r.get(0)?,
        username: r.get(1)?,
        password_hash: r.get(2)?,
        salt: r.get(3)?,
    })
}

fn row_to_photo(r: &rusqlite::Row<'_>) -> rusqlite::Result<PhotoRecord> {
    Ok(PhotoRecord {
        id: r.get(0)?,
        photo_name: r.get(1)?,
        photo_time: r.get(2)?,
        photo_date: r.get(3)?,
    })
}
