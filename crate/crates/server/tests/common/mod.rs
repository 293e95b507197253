#![allow(dead_code)]

use needleguide_core::protocol::{encode, FrameDecoder, Hello, Message, PROTOCOL_VERSION};
use needleguide_server::{parse_config, start, ServerConfig, ServerHandle};
use std::net::SocketAddr;
use std::time::Duration;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

pub const WAIT: Duration = Duration::from_secs(10);

/// Loopback config on ephemeral ports with the given overrides.
pub fn config(overrides: &[(&str, &str)]) -> ServerConfig {
    let mut all = vec![("tcp_bind".to_string(), "\"127.0.0.1:0\"".to_string()), ("ws_bind".into(), "\"127.0.0.1:0\"".into())];
    all.extend(overrides.iter().map(|(k, v)| (k.to_string(), v.to_string())));
    parse_config("", &all).expect("test config")
}

pub async fn server(overrides: &[(&str, &str)]) -> ServerHandle {
    start(config(overrides)).await.expect("server start")
}

pub struct Client {
    stream: TcpStream,
    decoder: FrameDecoder,
    buf: Vec<u8>,
    pub closed: bool,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).await.expect("connect");
        stream.set_nodelay(true).unwrap();
        Client { stream, decoder: FrameDecoder::new(), buf: vec![0; 64 * 1024], closed: false }
    }

    pub async fn greeted(addr: SocketAddr) -> Self {
        let mut c = Self::connect(addr).await;
        c.hello().await;
        c
    }

    pub async fn hello(&mut self) {
        self.send(&Message::Hello(Hello { client_name: "test".into(), protocol_version: PROTOCOL_VERSION })).await;
    }

    pub async fn send(&mut self, m: &Message) {
        self.send_raw(&encode(m).unwrap()).await;
    }

    pub async fn send_raw(&mut self, bytes: &[u8]) {
        self.stream.write_all(bytes).await.expect("send");
    }

    /// Next message; `None` on disconnect or after `WAIT` of silence.
    pub async fn recv(&mut self) -> Option<Message> {
        self.recv_within(WAIT).await
    }

    pub async fn recv_within(&mut self, limit: Duration) -> Option<Message> {
        loop {
            if let Some(m) = self.decoder.next_message().expect("server sent malformed data") {
                return Some(m);
            }
            if self.closed {
                return None;
            }
            match tokio::time::timeout(limit, self.stream.read(&mut self.buf)).await {
                Ok(Ok(0)) | Ok(Err(_)) => self.closed = true,
                Ok(Ok(n)) => self.decoder.feed(&self.buf[..n]),
                Err(_) => return None,
            }
        }
    }

    /// Reads until `pred` matches, returning the match and everything before.
    pub async fn recv_until(&mut self, mut pred: impl FnMut(&Message) -> bool) -> (Option<Message>, Vec<Message>) {
        let mut seen = Vec::new();
        while let Some(m) = self.recv().await {
            if pred(&m) {
                return (Some(m), seen);
            }
            seen.push(m);
        }
        (None, seen)
    }
}
