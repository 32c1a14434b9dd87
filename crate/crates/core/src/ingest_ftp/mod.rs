//! Upload-only FTP server for camera pushes: USER/PASS/TYPE/PASV/STOR/QUIT
//! over passive data connections. Each completed STOR is renamed into the
//! source directory and published once as an [`UploadEvent`].

mod client;
mod server;
mod session;

pub use client::{parse_pasv, FtpClient, FtpClientError};
pub use server::{FtpConfig, FtpServer, UploadEvent};
pub use session::{sanitize_name, Action, Credentials, FtpSession, Reply, SessionState, TransferType, MAX_LINE};
