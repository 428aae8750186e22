//! Live event streaming over TCP with cursor-based resume.
//!
//! The endpoint speaks a line protocol compatible with the replay wire
//! format:
//!
//! 1. The client connects and sends one JSON line, `{"cursor":"<token>"}`
//!    to resume after a previously seen position or `{}` to start from the
//!    beginning of the provider's replay horizon.
//! 2. The server answers with NDJSON event lines. Each line is a regular
//!    wire event plus a `cursor` key naming the position of that event.
//! 3. A graceful end of stream is signalled by the marker line
//!    `{"end":true}`. A connection that closes without the marker is
//!    treated as dropped: the client reconnects with the last seen cursor,
//!    up to a bounded number of retries, so no events inside the replay
//!    horizon are lost and none are delivered twice.
//!
//! Events are yielded in arrival order without window filtering; callers
//! that want replay semantics can collect them into an
//! [`EventLog`](super::EventLog).

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use super::Event;

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// `host:port` of the streaming endpoint.
    pub endpoint: String,
    /// Resume position; `None` starts from the beginning of the horizon.
    pub cursor: Option<String>,
    /// Reconnect attempts after an abnormal close before giving up.
    pub max_retries: u32,
    pub connect_timeout: Duration,
    pub read_timeout: Duration,
}

impl LiveConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        LiveConfig {
            endpoint: endpoint.into(),
            cursor: None,
            max_retries: 3,
            connect_timeout: Duration::from_secs(5),
            read_timeout: Duration::from_secs(30),
        }
    }
}

/// Stream failure after retries were exhausted. Carries the last cursor so
/// the caller can resume later.
#[derive(Debug, thiserror::Error)]
#[error("live stream failed after {attempts} attempts (last cursor {last_cursor:?}): {message}")]
pub struct StreamError {
    pub message: String,
    pub last_cursor: Option<String>,
    pub attempts: u32,
}

/// Iterator over live events. Yields `Err` once when the stream fails
/// permanently, then `None`.
pub struct LiveStream {
    config: LiveConfig,
    reader: Option<BufReader<TcpStream>>,
    last_cursor: Option<String>,
    retries_used: u32,
    ended: bool,
    failed: bool,
    malformed: u64,
}

/// Connects to a live endpoint. Connection errors here are retried with the
/// same bound as mid-stream drops; an unreachable endpoint yields an error
/// and zero events.
pub fn connect_live(config: LiveConfig) -> Result<LiveStream, StreamError> {
    let mut stream = LiveStream {
        last_cursor: config.cursor.clone(),
        config,
        reader: None,
        retries_used: 0,
        ended: false,
        failed: false,
        malformed: 0,
    };
    match stream.connect() {
        Ok(reader) => {
            stream.reader = Some(reader);
            Ok(stream)
        }
        Err(e) => match stream.reconnect(&e) {
            Ok(()) => Ok(stream),
            Err(err) => Err(err),
        },
    }
}

impl LiveStream {
    /// Last cursor seen on the stream; pass it to a future
    /// [`connect_live`] call to resume.
    pub fn cursor(&self) -> Option<&str> {
        self.last_cursor.as_deref()
    }

    /// Lines that were neither events nor protocol markers.
    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    fn connect(&self) -> Result<BufReader<TcpStream>, String> {
        let addr = self
            .config
            .endpoint
            .parse::<std::net::SocketAddr>()
            .map_err(|e| format!("bad endpoint `{}`: {e}", self.config.endpoint))?;
        let mut sock = TcpStream::connect_timeout(&addr, self.config.connect_timeout)
            .map_err(|e| format!("connect to {addr} failed: {e}"))?;
        sock.set_read_timeout(Some(self.config.read_timeout))
            .map_err(|e| e.to_string())?;
        let hello = match &self.last_cursor {
            Some(c) => format!("{{\"cursor\":{}}}\n", serde_json::to_string(c).unwrap()),
            None => "{}\n".to_string(),
        };
        sock.write_all(hello.as_bytes()).map_err(|e| e.to_string())?;
        Ok(BufReader::new(sock))
    }

    fn reconnect(&mut self, reason: &str) -> Result<(), StreamError> {
        loop {
            if self.retries_used >= self.config.max_retries {
                self.failed = true;
                return Err(StreamError {
                    message: reason.to_string(),
                    last_cursor: self.last_cursor.clone(),
                    attempts: self.retries_used + 1,
                });
            }
            self.retries_used += 1;
            std::thread::sleep(Duration::from_millis(20 * self.retries_used as u64));
            match self.connect() {
                Ok(reader) => {
                    self.reader = Some(reader);
                    return Ok(());
                }
                Err(_) => continue,
            }
        }
    }
}

impl Iterator for LiveStream {
    type Item = Result<Event, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.ended || self.failed {
                return None;
            }
            let reader = self.reader.as_mut()?;
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) | Err(_) => {
                    // Closed without the end marker: dropped connection.
                    if let Err(e) = self.reconnect("connection dropped") {
                        return Some(Err(e));
                    }
                    continue;
                }
                Ok(_) => {}
            }
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Ok(value) = serde_json::from_str::<serde_json::Value>(trimmed) {
                if value.get("end").and_then(|v| v.as_bool()) == Some(true) {
                    self.ended = true;
                    return None;
                }
                if let Some(cursor) = value.get("cursor").and_then(|v| v.as_str()) {
                    self.last_cursor = Some(cursor.to_string());
                }
            }
            match super::parse_wire_line_public(trimmed) {
                Some(event) => return Some(Ok(event)),
                None => {
                    self.malformed += 1;
                    continue;
                }
            }
        }
    }
}
