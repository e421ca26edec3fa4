//! Line-delimited JSON messages and the channels that carry them.
//!
//! A [`LineChannel`] writes one JSON object per line and reads lines on a
//! background thread so that receives can time out. The same type serves
//! child-process stdio, TCP sockets and in-process pipes.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, ChildStdout};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::QrcError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    /// Referee → challenger at the start of a session.
    Hello {
        n: usize,
        session: u64,
        /// Set when no-detection (`0`) entries are accepted in rows.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        loophole: bool,
    },
    /// Referee → challenger: SHA-256 of `x,y,nonce` for the coming round.
    Commit { hash: String },
    /// Challenger → referee: the round's counterfactual outcomes.
    Row { a: i8, ap: i8, b: i8, bp: i8 },
    /// Referee → challenger: opens the commitment.
    Reveal { x: u8, y: u8, nonce: String },
    /// Referee → challenger at the end of a session.
    Result { s: f64, win: bool },
    /// Mediator → source: produce the messages for one round.
    Emit { round: usize },
    /// Source → mediator: one opaque payload per station.
    Emission {
        to_a: serde_json::Value,
        to_b: serde_json::Value,
    },
    /// Mediator → station: the source's payload.
    Deliver { payload: serde_json::Value },
    /// Mediator → station: the setting bit, after the link is cut.
    Setting { bit: u8 },
    /// Station → mediator.
    Outcome { value: i8 },
    /// Either side, before hanging up on an error.
    Abort { reason: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::Commit { .. } => "commit",
            Message::Row { .. } => "row",
            Message::Reveal { .. } => "reveal",
            Message::Result { .. } => "result",
            Message::Emit { .. } => "emit",
            Message::Emission { .. } => "emission",
            Message::Deliver { .. } => "deliver",
            Message::Setting { .. } => "setting",
            Message::Outcome { .. } => "outcome",
            Message::Abort { .. } => "abort",
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }
}

/// Lowercase hex SHA-256 of the ASCII string `x,y,nonce`.
pub fn commit_hash(x: u8, y: u8, nonce: &str) -> String {
    hex::encode(Sha256::digest(format!("{x},{y},{nonce}").as_bytes()))
}

/// What arrived on a channel: a decoded message or an undecodable line.
#[derive(Debug, Clone, PartialEq)]
pub enum Incoming {
    Message(Message),
    Garbled { line: String, error: String },
}

pub struct LineChannel {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    child: Option<Child>,
    label: String,
}

impl std::fmt::Debug for LineChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LineChannel")
            .field("label", &self.label)
            .finish()
    }
}

impl LineChannel {
    pub fn new<R, W>(reader: R, writer: W, label: impl Into<String>) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(reader).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        LineChannel {
            writer: Box::new(writer),
            lines: rx,
            child: None,
            label: label.into(),
        }
    }

    /// Talks to a child spawned with piped stdin and stdout.
    pub fn from_child(mut child: Child, label: impl Into<String>) -> std::io::Result<Self> {
        let stdin: ChildStdin = child
            .stdin
            .take()
            .ok_or_else(|| std::io::Error::other("child stdin is not piped"))?;
        let stdout: ChildStdout = child
            .stdout
            .take()
            .ok_or_else(|| std::io::Error::other("child stdout is not piped"))?;
        let mut ch = Self::new(stdout, stdin, label);
        ch.child = Some(child);
        Ok(ch)
    }

    pub fn from_tcp(stream: TcpStream, label: impl Into<String>) -> std::io::Result<Self> {
        // one small message per turn; Nagle would stall every round
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        Ok(Self::new(reader, stream, label))
    }

    /// Two connected in-process endpoints.
    pub fn pair(label_a: &str, label_b: &str) -> std::io::Result<(LineChannel, LineChannel)> {
        let (r1, w1) = std::io::pipe()?;
        let (r2, w2) = std::io::pipe()?;
        Ok((Self::new(r1, w2, label_a), Self::new(r2, w1, label_b)))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), QrcError> {
        self.send_line(&msg.to_line())
    }

    pub fn send_line(&mut self, line: &str) -> Result<(), QrcError> {
        let res = writeln!(self.writer, "{line}").and_then(|_| self.writer.flush());
        res.map_err(|e| QrcError::Disconnected(format!("{}: {e}", self.label)))
    }

    /// Next non-blank line, decoded. Times out with [`QrcError::Timeout`].
    pub fn recv(&mut self, timeout: Duration) -> Result<Incoming, QrcError> {
        loop {
            let line = match self.lines.recv_timeout(timeout) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(QrcError::Disconnected(format!("{}: {e}", self.label))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(QrcError::Timeout {
                        what: self.label.clone(),
                        after_ms: timeout.as_millis() as u64,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(QrcError::Disconnected(format!(
                        "{}: end of stream",
                        self.label
                    )))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            return Ok(match serde_json::from_str::<Message>(&line) {
                Ok(m) => Incoming::Message(m),
                Err(e) => Incoming::Garbled {
                    line,
                    error: e.to_string(),
                },
            });
        }
    }

    /// Lines already waiting, without blocking.
    pub fn drain(&mut self) -> Vec<String> {
        let mut out = Vec::new();
        while let Ok(Ok(line)) = self.lines.try_recv() {
            if !line.trim().is_empty() {
                out.push(line);
            }
        }
        out
    }

    /// Closes the write side; a child process is then waited for.
    pub fn close(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.writer = Box::new(std::io::sink());
        if let Some(mut child) = self.child.take() {
            let deadline = std::time::Instant::now() + Duration::from_secs(2);
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if std::time::Instant::now() < deadline => {
                        std::thread::sleep(Duration::from_millis(10))
                    }
                    _ => {
                        let _ = child.kill();
                        let _ = child.wait();
                        break;
                    }
                }
            }
        }
    }
}

impl Drop for LineChannel {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_format_is_exact() {
        let cases = [
            (
                Message::Hello {
                    n: 800,
                    session: 3,
                    loophole: false,
                },
                r#"{"type":"hello","n":800,"session":3}"#,
            ),
            (
                Message::Commit { hash: "ab".into() },
                r#"{"type":"commit","hash":"ab"}"#,
            ),
            (
                Message::Row {
                    a: 1,
                    ap: -1,
                    b: 1,
                    bp: 1,
                },
                r#"{"type":"row","a":1,"ap":-1,"b":1,"bp":1}"#,
            ),
            (
                Message::Reveal {
                    x: 0,
                    y: 1,
                    nonce: "ff".into(),
                },
                r#"{"type":"reveal","x":0,"y":1,"nonce":"ff"}"#,
            ),
            (
                Message::Result { s: 2.5, win: true },
                r#"{"type":"result","s":2.5,"win":true}"#,
            ),
        ];
        for (m, line) in cases {
            assert_eq!(m.to_line(), line);
            assert_eq!(serde_json::from_str::<Message>(line).unwrap(), m);
        }
        let h: Message =
            serde_json::from_str(r#"{"type":"hello","n":4,"session":0,"loophole":true}"#).unwrap();
        assert_eq!(
            h,
            Message::Hello {
                n: 4,
                session: 0,
                loophole: true
            }
        );
    }

    #[test]
    fn commit_hash_is_sha256_of_ascii() {
        // sha256("0,1,abc")
        assert_eq!(
            commit_hash(0, 1, "abc"),
            hex::encode(Sha256::digest(b"0,1,abc"))
        );
        assert_eq!(commit_hash(0, 1, "abc").len(), 64);
        assert_ne!(commit_hash(0, 1, "abc"), commit_hash(1, 1, "abc"));
    }

    #[test]
    fn pair_round_trip_and_timeout() {
        let (mut a, mut b) = LineChannel::pair("a", "b").unwrap();
        a.send(&Message::Commit { hash: "x".into() }).unwrap();
        assert_eq!(
            b.recv(Duration::from_secs(1)).unwrap(),
            Incoming::Message(Message::Commit { hash: "x".into() })
        );
        b.send_line("not json").unwrap();
        assert!(matches!(
            a.recv(Duration::from_secs(1)).unwrap(),
            Incoming::Garbled { .. }
        ));
        assert!(matches!(
            a.recv(Duration::from_millis(20)),
            Err(QrcError::Timeout { .. })
        ));
    }

    #[test]
    fn unknown_type_is_garbled() {
        let (mut a, mut b) = LineChannel::pair("a", "b").unwrap();
        a.send_line(r#"{"type":"request_settings"}"#).unwrap();
        assert!(matches!(
            b.recv(Duration::from_secs(1)).unwrap(),
            Incoming::Garbled { .. }
        ));
    }
}
