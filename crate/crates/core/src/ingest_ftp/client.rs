//! Blocking upload-only FTP client used by the camera simulator.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FtpClientError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("unexpected reply to {command}: {code} {text}")]
    Unexpected { command: String, code: u16, text: String },
    #[error("malformed reply: {0}")]
    Malformed(String),
}

pub struct FtpClient {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    peer: SocketAddr,
    timeout: Duration,
}

fn expect(command: &str, (code, text): (u16, String), ok: &[u16]) -> Result<(), FtpClientError> {
    if ok.contains(&code) {
        Ok(())
    } else {
        Err(FtpClientError::Unexpected {
            command: command.to_string(),
            code,
            text,
        })
    }
}

/// Parses the `h1,h2,h3,h4,p1,p2` tuple of a 227 reply.
pub fn parse_pasv(text: &str) -> Option<SocketAddr> {
    let open = text.find('(')?;
    let close = text[open..].find(')')? + open;
    let n: Vec<u8> = text[open + 1..close]
        .split(',')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    if n.len() != 6 {
        return None;
    }
    let port = u16::from(n[4]) << 8 | u16::from(n[5]);
    Some(SocketAddr::from(([n[0], n[1], n[2], n[3]], port)))
}

impl FtpClient {
    pub fn connect(addr: impl ToSocketAddrs, timeout: Duration) -> Result<Self, FtpClientError> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        let stream = TcpStream::connect_timeout(&addr, timeout)?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        let mut client = FtpClient {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            peer: addr,
            timeout,
        };
        let greeting = client.read_reply()?;
        expect("connect", greeting, &[220])?;
        Ok(client)
    }

    fn read_reply(&mut self) -> Result<(u16, String), FtpClientError> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "control connection closed").into());
        }
        let line = line.trim_end().to_string();
        let code: u16 = line
            .get(..3)
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| FtpClientError::Malformed(line.clone()))?;
        if line.as_bytes().get(3) == Some(&b'-') {
            // multi-line reply runs until "<code> "
            let end = format!("{code} ");
            loop {
                let mut more = String::new();
                if self.reader.read_line(&mut more)? == 0 {
                    return Err(FtpClientError::Malformed(line));
                }
                if more.starts_with(&end) {
                    return Ok((code, more[4..].trim_end().to_string()));
                }
            }
        }
        Ok((code, line.get(4..).unwrap_or("").to_string()))
    }

    pub fn command(&mut self, line: &str) -> Result<(u16, String), FtpClientError> {
        self.writer.write_all(format!("{line}\r\n").as_bytes())?;
        self.read_reply()
    }

    pub fn login(&mut self, user: &str, password: &str) -> Result<(), FtpClientError> {
        let r = self.command(&format!("USER {user}"))?;
        expect("USER", r, &[331, 230])?;
        let r = self.command(&format!("PASS {password}"))?;
        expect("PASS", r, &[230])?;
        let r = self.command("TYPE I")?;
        expect("TYPE", r, &[200])
    }

    /// Uploads `bytes` as `name` and waits for the server to confirm it.
    pub fn store(&mut self, name: &str, bytes: &[u8]) -> Result<(), FtpClientError> {
        let (code, text) = self.command("PASV")?;
        expect("PASV", (code, text.clone()), &[227])?;
        let mut addr = parse_pasv(&text).ok_or(FtpClientError::Malformed(text))?;
        if addr.ip().is_unspecified() {
            addr.set_ip(self.peer.ip());
        }
        let mut data = TcpStream::connect_timeout(&addr, self.timeout)?;
        data.set_write_timeout(Some(self.timeout))?;
        let r = self.command(&format!("STOR {name}"))?;
        expect("STOR", r, &[125, 150])?;
        data.write_all(bytes)?;
        data.shutdown(Shutdown::Write)?;
        drop(data);
        let r = self.read_reply()?;
        expect("STOR", r, &[226, 250])
    }

    pub fn quit(mut self) -> Result<(), FtpClientError> {
        let r = self.command("QUIT")?;
        expect("QUIT", r, &[221])
    }
}
