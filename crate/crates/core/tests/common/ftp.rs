//! FTP test harness: a server on an ephemeral port and a raw control
//! connection.

use std::io::{BufRead, BufReader, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr, TcpStream};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sentinel_core::ingest_ftp::{parse_pasv, Credentials, FtpConfig, FtpServer, UploadEvent};
use tokio::sync::mpsc;

pub const USER: &str = "camera";
pub const PASS: &str = "secret";

pub struct Harness {
    pub server: FtpServer,
    pub dir: tempfile::TempDir,
    pub events: mpsc::UnboundedReceiver<UploadEvent>,
}

pub async fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = FtpConfig::new(
        dir.path(),
        Credentials {
            user: USER.into(),
            password: PASS.into(),
        },
    );
    cfg.bind = IpAddr::V4(Ipv4Addr::LOCALHOST);
    cfg.port = 0;
    cfg.data_timeout = Duration::from_secs(2);
    let (tx, events) = mpsc::unbounded_channel();
    Harness {
        server: FtpServer::start(cfg, tx).await.unwrap(),
        dir,
        events,
    }
}

impl Harness {
    pub fn addr(&self) -> SocketAddr {
        self.server.local_addr()
    }

    pub fn entries(&self) -> Vec<String> {
        let mut v: Vec<String> = std::fs::read_dir(self.dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    }

    pub async fn no_event_within(&mut self, limit: Duration) -> bool {
        tokio::time::timeout(limit, self.events.recv()).await.is_err()
    }

    pub async fn next_event(&mut self) -> UploadEvent {
        tokio::time::timeout(Duration::from_secs(5), self.events.recv())
            .await
            .expect("no upload event")
            .unwrap()
    }
}

/// Raw blocking control connection, one reply line per read.
pub struct Ctl {
    pub rd: BufReader<TcpStream>,
    pub wr: TcpStream,
}

impl Ctl {
    pub fn connect(addr: SocketAddr) -> Ctl {
        let s = TcpStream::connect(addr).unwrap();
        s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
        let mut c = Ctl {
            rd: BufReader::new(s.try_clone().unwrap()),
            wr: s,
        };
        assert_eq!(c.read().0, 220);
        c
    }

    pub fn read(&mut self) -> (u16, String) {
        let mut line = String::new();
        self.rd.read_line(&mut line).unwrap();
        assert!(line.ends_with("\r\n"), "unterminated reply {line:?}");
        let code = line[..3].parse().unwrap_or_else(|_| panic!("bad reply {line:?}"));
        (code, line[4..].trim_end().to_string())
    }

    pub fn send_raw(&mut self, bytes: &[u8]) {
        self.wr.write_all(bytes).unwrap();
    }

    pub fn cmd(&mut self, line: &str) -> (u16, String) {
        self.send_raw(format!("{line}\r\n").as_bytes());
        self.read()
    }

    pub fn login(&mut self) {
        assert_eq!(self.cmd(&format!("USER {USER}")).0, 331);
        assert_eq!(self.cmd(&format!("PASS {PASS}")).0, 230);
    }

    pub fn pasv(&mut self) -> TcpStream {
        let (code, text) = self.cmd("PASV");
        assert_eq!(code, 227);
        TcpStream::connect(parse_pasv(&text).unwrap()).unwrap()
    }
}

pub async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.unwrap()
}

pub fn fuzz_line(rng: &mut ChaCha8Rng) -> Vec<u8> {
    const VERBS: [&str; 14] = [
        "USER", "PASS", "NOOP", "TYPE", "PWD", "CWD", "SYST", "PORT", "EPRT", "LIST", "RETR", "DELE", "MKD", "FEAT",
    ];
    match rng.gen_range(0..4) {
        0 => (0..rng.gen_range(0..80))
            .map(|_| loop {
                let b: u8 = rng.gen();
                if b != b'\n' {
                    break b;
                }
            })
            .collect(),
        1 => {
            let verb = VERBS[rng.gen_range(0..VERBS.len())];
            let arg: String = (0..rng.gen_range(0..20)).map(|_| rng.gen_range(' '..='~')).collect();
            format!("{verb} {arg}").into_bytes()
        }
        2 => vec![b'A'; rng.gen_range(400..2000)],
        _ => {
            let verb = VERBS[rng.gen_range(0..VERBS.len())].to_lowercase();
            format!("  {verb}\t\r").into_bytes()
        }
    }
}

pub async fn settles(mut check: impl FnMut() -> bool) -> bool {
    for _ in 0..200 {
        if check() {
            return true;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    false
}

pub const FUZZ_LINES: usize = 1000;

/// Sends seed-pinned malformed lines and requires exactly one well-formed
/// reply per line, then a working session afterwards.
pub async fn fuzz_session(addr: SocketAddr, seed: u64) {
    blocking(move || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Ctl::connect(addr);
        for i in 0..FUZZ_LINES {
            let mut line = fuzz_line(&mut rng);
            line.extend_from_slice(b"\r\n");
            c.send_raw(&line);
            let (code, _) = c.read();
            assert!((200..600).contains(&code), "line {i}: code {code}");
        }
        // one reply per line means the next reply belongs to this NOOP
        assert_eq!(c.cmd("NOOP").0, 200);
        c.login();
        assert_eq!(c.cmd("NOOP").0, 200);
    })
    .await;
    // the listener still accepts new sessions
    blocking(move || drop(Ctl::connect(addr))).await;
}

/// Resets the data connection halfway through a STOR.
pub async fn reset_mid_transfer(h: &mut Harness) {
    let addr = h.addr();
    blocking(move || {
        let mut c = Ctl::connect(addr);
        c.login();
        let mut data = c.pasv();
        assert_eq!(c.cmd("STOR reset.jpg").0, 150);
        data.write_all(&[0xAB; 4096]).unwrap();
        std::thread::sleep(Duration::from_millis(50));
        let sock = socket2::Socket::from(data);
        sock.set_linger(Some(Duration::ZERO)).unwrap();
        drop(sock);
        assert_eq!(c.read().0, 426);
        assert_eq!(c.cmd("NOOP").0, 200);
    })
    .await;
    assert!(
        h.no_event_within(Duration::from_millis(300)).await,
        "aborted upload published an event"
    );
    assert!(h.entries().is_empty(), "left behind {:?}", h.entries());
}

/// Uploads with an independent FTP client library.
pub async fn stock_client_upload(h: &mut Harness) {
    let addr = h.addr();
    let payload: Vec<u8> = (0..50_000u32).map(|i| (i * 31 % 251) as u8).collect();
    let sent = payload.clone();
    blocking(move || {
        let mut ftp = suppaftp::FtpStream::connect(addr).unwrap();
        ftp.login(USER, PASS).unwrap();
        ftp.transfer_type(suppaftp::types::FileType::Binary).unwrap();
        ftp.put_file("interop.jpg", &mut std::io::Cursor::new(sent)).unwrap();
        ftp.quit().unwrap();
    })
    .await;
    let ev = h.next_event().await;
    assert_eq!(ev.remote_name, "interop.jpg");
    assert_eq!(ev.byte_count, payload.len() as u64);
    assert_eq!(std::fs::read(&ev.stored_path).unwrap(), payload);
    assert_eq!(h.entries(), vec!["interop.jpg".to_string()]);
}
