use std::collections::VecDeque;
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::Serialize;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use super::session::{Action, Credentials, FtpSession, Reply, MAX_LINE};
use crate::time::Timestamp;

#[derive(Debug, Clone)]
pub struct FtpConfig {
    pub bind: IpAddr,
    /// Control port; 0 picks an ephemeral port.
    pub port: u16,
    /// Inclusive passive port range; `None` uses ephemeral ports.
    pub pasv_range: Option<(u16, u16)>,
    pub source_dir: PathBuf,
    pub credentials: Credentials,
    /// Limit for the client to open the data connection, and for each read
    /// on it.
    pub data_timeout: Duration,
}

impl FtpConfig {
    pub fn new(source_dir: impl Into<PathBuf>, credentials: Credentials) -> Self {
        FtpConfig {
            bind: IpAddr::V4(Ipv4Addr::UNSPECIFIED),
            port: 2121,
            pasv_range: None,
            source_dir: source_dir.into(),
            credentials,
            data_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UploadEvent {
    pub stored_path: PathBuf,
    pub byte_count: u64,
    pub received_at: Timestamp,
    pub remote_name: String,
}

pub struct FtpServer {
    local_addr: SocketAddr,
    task: JoinHandle<()>,
}

impl FtpServer {
    /// Binds the control port and starts accepting sessions. Completed
    /// uploads are published on `events`.
    pub async fn start(config: FtpConfig, events: mpsc::UnboundedSender<UploadEvent>) -> io::Result<FtpServer> {
        tokio::fs::create_dir_all(&config.source_dir).await?;
        let listener = TcpListener::bind((config.bind, config.port)).await?;
        let local_addr = listener.local_addr()?;
        info!(%local_addr, "ftp listening");
        let config = Arc::new(config);
        let task = tokio::spawn(async move {
            loop {
                let (stream, peer) = match listener.accept().await {
                    Ok(c) => c,
                    Err(e) => {
                        warn!(error = %e, "ftp accept failed");
                        tokio::time::sleep(Duration::from_millis(50)).await;
                        continue;
                    }
                };
                let config = Arc::clone(&config);
                let events = events.clone();
                tokio::spawn(async move {
                    debug!(%peer, "ftp session opened");
                    if let Err(e) = run_session(stream, config, events).await {
                        debug!(%peer, error = %e, "ftp session ended with error");
                    }
                });
            }
        });
        Ok(FtpServer { local_addr, task })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(self) {
        self.task.abort();
    }
}

impl Drop for FtpServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

enum Line {
    Text(String),
    TooLong,
}

/// Splits the control stream into lines on a separate task so the session
/// can notice a closed connection while a transfer is running.
async fn read_lines(mut rd: OwnedReadHalf, tx: mpsc::Sender<Line>) {
    let mut line = Vec::new();
    let mut overflow = false;
    let mut chunk = [0u8; 1024];
    loop {
        let n = match rd.read(&mut chunk).await {
            Ok(0) | Err(_) => return,
            Ok(n) => n,
        };
        for &b in &chunk[..n] {
            if b == b'\n' {
                let item = if overflow {
                    Line::TooLong
                } else {
                    let text = String::from_utf8_lossy(&line);
                    Line::Text(text.trim_end_matches('\r').to_string())
                };
                line.clear();
                overflow = false;
                if tx.send(item).await.is_err() {
                    return;
                }
            } else if line.len() > MAX_LINE + 1 {
                overflow = true;
            } else {
                line.push(b);
            }
        }
    }
}

struct Control {
    writer: OwnedWriteHalf,
    lines: mpsc::Receiver<Line>,
    backlog: VecDeque<Line>,
}

impl Control {
    async fn reply(&mut self, r: &Reply) -> io::Result<()> {
        debug!(target: "ftp", "-> {r}");
        self.writer.write_all(r.to_wire().as_bytes()).await
    }

    async fn next(&mut self) -> Option<Line> {
        match self.backlog.pop_front() {
            Some(l) => Some(l),
            None => self.lines.recv().await,
        }
    }
}

async fn open_passive(ip: IpAddr, range: Option<(u16, u16)>) -> io::Result<TcpListener> {
    let Some((lo, hi)) = range else {
        return TcpListener::bind((ip, 0)).await;
    };
    let span = u32::from(hi.saturating_sub(lo)) + 1;
    let start = rand::thread_rng().gen_range(0..span);
    for i in 0..span {
        let port = lo + ((start + i) % span) as u16;
        if let Ok(l) = TcpListener::bind((ip, port)).await {
            return Ok(l);
        }
    }
    Err(io::Error::new(io::ErrorKind::AddrInUse, "passive port range exhausted"))
}

fn ipv4_of(ip: IpAddr) -> Option<Ipv4Addr> {
    match ip {
        IpAddr::V4(v4) => Some(v4),
        IpAddr::V6(v6) => v6.to_ipv4_mapped(),
    }
}

async fn run_session(
    stream: TcpStream,
    config: Arc<FtpConfig>,
    events: mpsc::UnboundedSender<UploadEvent>,
) -> io::Result<()> {
    let local_ip = stream.local_addr()?.ip();
    let (rd, writer) = stream.into_split();
    let (tx, lines) = mpsc::channel(64);
    let reader = tokio::spawn(read_lines(rd, tx));
    let mut ctl = Control {
        writer,
        lines,
        backlog: VecDeque::new(),
    };
    let result = session_loop(&mut ctl, local_ip, &config, &events).await;
    reader.abort();
    result
}

async fn session_loop(
    ctl: &mut Control,
    local_ip: IpAddr,
    config: &FtpConfig,
    events: &mpsc::UnboundedSender<UploadEvent>,
) -> io::Result<()> {
    ctl.reply(&FtpSession::greeting()).await?;
    let mut session = FtpSession::new();
    let mut passive: Option<TcpListener> = None;

    while let Some(line) = ctl.next().await {
        let action = match line {
            Line::Text(text) => {
                debug!(target: "ftp", "<- {}", if text.starts_with("PASS") { "PASS ****" } else { &text });
                session.handle_command(&text, &config.credentials)
            }
            Line::TooLong => Action::Reply(Reply::new(500, "Line too long")),
        };
        match action {
            Action::Reply(r) => ctl.reply(&r).await?,
            Action::Close(r) => {
                ctl.reply(&r).await?;
                return Ok(());
            }
            Action::OpenPassive => {
                passive = None;
                let reply = match ipv4_of(local_ip) {
                    Some(v4) => match open_passive(local_ip, config.pasv_range).await {
                        Ok(l) => {
                            let port = l.local_addr()?.port();
                            passive = Some(l);
                            session.passive_opened(v4.octets(), port)
                        }
                        Err(e) => {
                            warn!(error = %e, "passive listener failed");
                            session.passive_failed()
                        }
                    },
                    None => session.passive_failed(),
                };
                ctl.reply(&reply).await?;
            }
            Action::Store { name } => {
                let Some(listener) = passive.take() else {
                    session.transfer_finished(false);
                    ctl.reply(&Reply::new(425, "Use PASV first")).await?;
                    continue;
                };
                match receive(ctl, listener, &name, config).await? {
                    Transfer::Done(event) => {
                        info!(name = %event.remote_name, bytes = event.byte_count, "upload stored");
                        let _ = events.send(event);
                        let r = session.transfer_finished(true);
                        ctl.reply(&r).await?;
                    }
                    Transfer::NoConnection => {
                        session.transfer_finished(false);
                        ctl.reply(&Reply::new(425, "Data connection not opened")).await?;
                    }
                    Transfer::Aborted => {
                        let r = session.transfer_finished(false);
                        ctl.reply(&r).await?;
                    }
                    Transfer::ControlClosed => return Ok(()),
                }
            }
        }
    }
    Ok(())
}

enum Transfer {
    Done(UploadEvent),
    NoConnection,
    Aborted,
    ControlClosed,
}

fn temp_path(dir: &Path, name: &str) -> PathBuf {
    let tag: u64 = rand::thread_rng().gen();
    dir.join(format!(".{name}.{tag:016x}.part"))
}

async fn receive(ctl: &mut Control, listener: TcpListener, name: &str, config: &FtpConfig) -> io::Result<Transfer> {
    let mut data = match tokio::time::timeout(config.data_timeout, listener.accept()).await {
        Ok(Ok((s, _))) => s,
        _ => return Ok(Transfer::NoConnection),
    };
    drop(listener);
    ctl.reply(&Reply::new(150, "Opening data connection")).await?;

    let temp = temp_path(&config.source_dir, name);
    let outcome = copy_to(ctl, &mut data, &temp, config.data_timeout).await;
    let byte_count = match outcome {
        Ok(Some(n)) => n,
        Ok(None) => {
            let _ = tokio::fs::remove_file(&temp).await;
            return Ok(Transfer::ControlClosed);
        }
        Err(e) => {
            debug!(error = %e, "transfer aborted");
            let _ = tokio::fs::remove_file(&temp).await;
            return Ok(Transfer::Aborted);
        }
    };
    let stored_path = config.source_dir.join(name);
    if let Err(e) = tokio::fs::rename(&temp, &stored_path).await {
        warn!(error = %e, "rename into place failed");
        let _ = tokio::fs::remove_file(&temp).await;
        return Ok(Transfer::Aborted);
    }
    Ok(Transfer::Done(UploadEvent {
        stored_path,
        byte_count,
        received_at: Timestamp::now(),
        remote_name: name.to_string(),
    }))
}

/// Copies the data stream into `temp`. `Ok(None)` means the control
/// connection closed first; `Err` covers data errors and ABOR.
async fn copy_to(ctl: &mut Control, data: &mut TcpStream, temp: &Path, idle: Duration) -> io::Result<Option<u64>> {
    let mut file = tokio::fs::File::create(temp).await?;
    let mut buf = vec![0u8; 64 * 1024];
    let mut total = 0u64;
    loop {
        tokio::select! {
            read = tokio::time::timeout(idle, data.read(&mut buf)) => {
                let n = read.map_err(|_| io::Error::new(io::ErrorKind::TimedOut, "data connection idle"))??;
                if n == 0 {
                    file.sync_all().await?;
                    return Ok(Some(total));
                }
                file.write_all(&buf[..n]).await?;
                total += n as u64;
            }
            line = ctl.lines.recv() => match line {
                None => return Ok(None),
                Some(Line::Text(t)) if t.trim().eq_ignore_ascii_case("ABOR") => {
                    return Err(io::Error::new(io::ErrorKind::Interrupted, "ABOR"));
                }
                Some(other) => ctl.backlog.push_back(other),
            },
        }
    }
}
