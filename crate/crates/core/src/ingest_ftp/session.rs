//! Protocol state for one control connection, free of I/O. The server feeds
//! it command lines and performs whatever [`Action`] comes back.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Credentials {
    pub user: String,
    pub password: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    AwaitUser,
    AwaitPass,
    Ready,
    /// Logged in with a passive data channel waiting for a transfer.
    DataPending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferType {
    Ascii,
    Image,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub code: u16,
    pub text: String,
}

impl Reply {
    pub fn new(code: u16, text: impl Into<String>) -> Self {
        Reply {
            code,
            text: text.into(),
        }
    }

    pub fn to_wire(&self) -> String {
        format!("{} {}\r\n", self.code, self.text)
    }
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.code, self.text)
    }
}

/// What the I/O layer must do after a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// Send the reply and carry on.
    Reply(Reply),
    /// Open a passive listener, then call [`FtpSession::passive_opened`] or
    /// [`FtpSession::passive_failed`] for the reply.
    OpenPassive,
    /// Send `150`, receive the file over the data channel, then call
    /// [`FtpSession::transfer_finished`] for the final reply.
    Store { name: String },
    /// Send the reply and close the connection.
    Close(Reply),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FtpSession {
    pub state: SessionState,
    pub authenticated_as: Option<String>,
    pub data_port: Option<u16>,
    pub cwd: String,
    pub transfer_type: TransferType,
    pending_user: Option<String>,
}

impl Default for FtpSession {
    fn default() -> Self {
        FtpSession::new()
    }
}

pub const MAX_LINE: usize = 512;

/// Validates a STOR argument as a plain file name inside the upload root.
/// A single leading `/` (the virtual root) is tolerated.
pub fn sanitize_name(raw: &str) -> Option<String> {
    let name = raw.strip_prefix('/').unwrap_or(raw);
    let bad = name.is_empty()
        || name == "."
        || name == ".."
        || name.starts_with('.')
        || name.len() > 255
        || name.chars().any(|c| c == '/' || c == '\\' || c.is_control());
    (!bad).then(|| name.to_string())
}

impl FtpSession {
    pub fn new() -> Self {
        FtpSession {
            state: SessionState::AwaitUser,
            authenticated_as: None,
            data_port: None,
            cwd: "/".into(),
            transfer_type: TransferType::Ascii,
            pending_user: None,
        }
    }

    pub fn greeting() -> Reply {
        Reply::new(220, "Service ready")
    }

    fn logged_in(&self) -> bool {
        matches!(self.state, SessionState::Ready | SessionState::DataPending)
    }

    /// Handles one command line (without CRLF).
    pub fn handle_command(&mut self, line: &str, creds: &Credentials) -> Action {
        use Action::Reply as R;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            return R(Reply::new(500, "Empty command"));
        }
        if line.len() > MAX_LINE {
            return R(Reply::new(500, "Line too long"));
        }
        let (verb, arg) = match line.split_once(' ') {
            Some((v, a)) => (v, a.trim()),
            None => (line, ""),
        };
        let verb = verb.to_ascii_uppercase();

        match verb.as_str() {
            "USER" => {
                if arg.is_empty() {
                    return R(Reply::new(501, "Missing user name"));
                }
                if self.logged_in() {
                    return R(Reply::new(503, "Already logged in"));
                }
                self.pending_user = Some(arg.to_string());
                self.state = SessionState::AwaitPass;
                R(Reply::new(331, "Password required"))
            }
            "PASS" => {
                if self.state != SessionState::AwaitPass {
                    return R(Reply::new(503, "Login with USER first"));
                }
                let user = self.pending_user.take().unwrap_or_default();
                if user == creds.user && arg == creds.password {
                    self.authenticated_as = Some(user);
                    self.state = SessionState::Ready;
                    R(Reply::new(230, "Logged in"))
                } else {
                    self.state = SessionState::AwaitUser;
                    R(Reply::new(530, "Login incorrect"))
                }
            }
            "QUIT" => Action::Close(Reply::new(221, "Goodbye")),
            "NOOP" => R(Reply::new(200, "OK")),
            "PORT" | "EPRT" => R(Reply::new(502, "Active mode not supported, use PASV")),
            _ if !self.logged_in() => {
                if is_known(&verb) {
                    R(Reply::new(530, "Not logged in"))
                } else {
                    R(Reply::new(502, "Command not implemented"))
                }
            }
            "TYPE" => match arg.to_ascii_uppercase().as_str() {
                "I" | "L 8" => {
                    self.transfer_type = TransferType::Image;
                    R(Reply::new(200, "Type set to I"))
                }
                "A" | "A N" => {
                    self.transfer_type = TransferType::Ascii;
                    R(Reply::new(200, "Type set to A"))
                }
                _ => R(Reply::new(504, "Type not supported")),
            },
            "PASV" => Action::OpenPassive,
            "STOR" => {
                if arg.is_empty() {
                    return R(Reply::new(501, "Missing file name"));
                }
                let Some(name) = sanitize_name(arg) else {
                    return R(Reply::new(553, "File name not allowed"));
                };
                if self.state != SessionState::DataPending {
                    return R(Reply::new(425, "Use PASV first"));
                }
                Action::Store { name }
            }
            "PWD" => R(Reply::new(257, format!("\"{}\" is the current directory", self.cwd))),
            "CWD" => {
                if arg == "/" || arg == "." || arg.is_empty() {
                    R(Reply::new(250, "Directory unchanged"))
                } else {
                    R(Reply::new(550, "No such directory"))
                }
            }
            "SYST" => R(Reply::new(215, "UNIX Type: L8")),
            _ => R(Reply::new(502, "Command not implemented")),
        }
    }

    /// Completes PASV once the listener is bound.
    pub fn passive_opened(&mut self, ip: [u8; 4], port: u16) -> Reply {
        self.data_port = Some(port);
        self.state = SessionState::DataPending;
        Reply::new(
            227,
            format!(
                "Entering Passive Mode ({},{},{},{},{},{})",
                ip[0],
                ip[1],
                ip[2],
                ip[3],
                port >> 8,
                port & 0xFF
            ),
        )
    }

    pub fn passive_failed(&mut self) -> Reply {
        Reply::new(425, "Cannot open data connection")
    }

    /// Completes STOR. The data channel is consumed either way.
    pub fn transfer_finished(&mut self, ok: bool) -> Reply {
        self.data_port = None;
        self.state = SessionState::Ready;
        if ok {
            Reply::new(226, "Transfer complete")
        } else {
            Reply::new(426, "Transfer aborted")
        }
    }
}

fn is_known(verb: &str) -> bool {
    matches!(verb, "TYPE" | "PASV" | "STOR" | "PWD" | "CWD" | "SYST")
}
