//! Blocking client for scripted remote agents and tests.

use std::io;
use std::net::TcpStream;
use std::time::{Duration, Instant};

use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

use crate::protocol::*;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Ws(#[from] tungstenite::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("connection closed: {0}")]
    Closed(String),
    #[error("timed out waiting for a message")]
    Timeout,
    #[error("server refused: {0:?}")]
    Refused(ErrorMsg),
    #[error("unexpected message: {0:?}")]
    Unexpected(Box<ServerMsg>),
}

pub struct Client {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    seq: u64,
    pub timeout: Duration,
}

impl Client {
    /// Opens the socket without saying hello.
    pub fn connect_raw(url: &str) -> Result<Self, ClientError> {
        let (ws, _) = tungstenite::connect(url)?;
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_millis(20))).map_err(tungstenite::Error::Io)?;
            let _ = s.set_nodelay(true);
        }
        Ok(Client { ws, seq: 0, timeout: Duration::from_secs(10) })
    }

    /// Connects and completes the hello/attach exchange. The join snapshot
    /// that follows the attach is left in the stream.
    pub fn connect(url: &str, role: Role) -> Result<(Self, Attach), ClientError> {
        let mut c = Self::connect_raw(url)?;
        c.send(&ClientMsg::Hello { protocol: PROTOCOL.into(), role, client: Some("oikos-client".into()) })?;
        match c.recv()?.1 {
            ServerMsg::Attach(a) => Ok((c, a)),
            ServerMsg::Error(e) => Err(ClientError::Refused(e)),
            other => Err(ClientError::Unexpected(Box::new(other))),
        }
    }

    /// Sends a message and returns its sequence number.
    pub fn send(&mut self, msg: &ClientMsg) -> Result<u64, ClientError> {
        self.seq += 1;
        self.ws.send(Message::text(encode(msg, self.seq)))?;
        Ok(self.seq)
    }

    pub fn send_text(&mut self, text: &str) -> Result<(), ClientError> {
        self.ws.send(Message::text(text.to_string()))?;
        Ok(())
    }

    /// Next server message with its sequence number.
    pub fn recv(&mut self) -> Result<(u64, ServerMsg), ClientError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            match self.ws.read() {
                Ok(Message::Text(t)) => return Ok(decode::<ServerMsg>(t.as_str())?),
                Ok(Message::Close(f)) => return Err(ClientError::Closed(f.map(|f| f.reason.to_string()).unwrap_or_default())),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    if Instant::now() > deadline {
                        return Err(ClientError::Timeout);
                    }
                }
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                    return Err(ClientError::Closed(String::new()))
                }
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Skips messages until `pick` accepts one.
    pub fn recv_until<T>(&mut self, mut pick: impl FnMut(&ServerMsg) -> Option<T>) -> Result<T, ClientError> {
        loop {
            let (_, m) = self.recv()?;
            if let Some(t) = pick(&m) {
                return Ok(t);
            }
        }
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        let deadline = Instant::now() + Duration::from_millis(300);
        while Instant::now() < deadline {
            match self.ws.read() {
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(_) => break,
                Ok(_) => {}
            }
        }
    }
}
