//! TCP client for the line-delimited JSON model protocol.

use std::io::{self, BufRead, BufReader, ErrorKind, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use super::wire::{encode_line, ClientMessage, ServerMessage, PROTOCOL_VERSION};
use super::{LanguageModel, LmError, NextTokenDistribution, TokenId, Vocabulary};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Connection {
    fn open(endpoint: &str, timeout: Duration) -> Result<Self, LmError> {
        let addrs: Vec<_> = endpoint
            .to_socket_addrs()
            .map_err(|e| transport(format!("cannot resolve {endpoint}: {e}")))?
            .collect();
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    let io = |e: io::Error| transport(e.to_string());
                    stream.set_read_timeout(Some(timeout)).map_err(io)?;
                    stream.set_write_timeout(Some(timeout)).map_err(io)?;
                    stream.set_nodelay(true).map_err(io)?;
                    let writer = stream.try_clone().map_err(io)?;
                    return Ok(Self {
                        reader: BufReader::new(stream),
                        writer,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(transport(format!(
            "cannot connect to {endpoint}: {}",
            last.map_or_else(|| "no addresses".to_string(), |e| e.to_string())
        )))
    }

    fn exchange(&mut self, msg: &ClientMessage) -> Result<ServerMessage, LmError> {
        let line = encode_line(msg).map_err(|e| LmError::Protocol(e.to_string()))?;
        self.writer.write_all(line.as_bytes()).map_err(io_error)?;
        self.writer.flush().map_err(io_error)?;
        let mut buf = String::new();
        let n = self.reader.read_line(&mut buf).map_err(io_error)?;
        if n == 0 || !buf.ends_with('\n') {
            return Err(LmError::Transport {
                message: "connection closed mid-response".into(),
                retryable: true,
            });
        }
        serde_json::from_str(buf.trim_end()).map_err(|e| LmError::Protocol(format!("malformed response: {e}")))
    }
}

fn transport(message: String) -> LmError {
    LmError::Transport {
        message,
        retryable: true,
    }
}

fn io_error(e: io::Error) -> LmError {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => LmError::Timeout,
        ErrorKind::InvalidData => LmError::Protocol(format!("response is not UTF-8: {e}")),
        _ => transport(e.to_string()),
    }
}

fn handshake(conn: &mut Connection) -> Result<Vocabulary, LmError> {
    match conn.exchange(&ClientMessage::Hello {
        proto: PROTOCOL_VERSION,
    })? {
        ServerMessage::Vocab { tokens, bos, eos, unk } => {
            Vocabulary::new(tokens, bos, eos, unk).map_err(|e| LmError::Protocol(format!("server vocabulary: {e}")))
        }
        ServerMessage::Err { code, msg } => Err(LmError::Remote { code, message: msg }),
        other => Err(LmError::Protocol(format!("expected vocab, got {other:?}"))),
    }
}

/// A model served over TCP. Holds one connection, re-established on the
/// next call after a transport failure.
pub struct RemoteModel {
    endpoint: String,
    timeout: Duration,
    vocab: Vocabulary,
    conn: Mutex<Option<Connection>>,
}

impl std::fmt::Debug for RemoteModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteModel")
            .field("endpoint", &self.endpoint)
            .field("vocab_size", &self.vocab.len())
            .finish()
    }
}

impl RemoteModel {
    pub fn connect(endpoint: &str) -> Result<Self, LmError> {
        Self::connect_with_timeout(endpoint, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(endpoint: &str, timeout: Duration) -> Result<Self, LmError> {
        let mut conn = Connection::open(endpoint, timeout)?;
        let vocab = handshake(&mut conn)?;
        Ok(Self {
            endpoint: endpoint.to_string(),
            timeout,
            vocab,
            conn: Mutex::new(Some(conn)),
        })
    }

    /// Connects and fails with [`LmError::VocabularyMismatch`] unless the
    /// server declares exactly `expected`.
    pub fn connect_expecting(endpoint: &str, expected: &Vocabulary) -> Result<Self, LmError> {
        let model = Self::connect(endpoint)?;
        check_same_vocab(expected, &model.vocab)?;
        Ok(model)
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn request(&self, ctx: &[TokenId]) -> Result<ServerMessage, LmError> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            let mut conn = Connection::open(&self.endpoint, self.timeout)?;
            let vocab = handshake(&mut conn)?;
            check_same_vocab(&self.vocab, &vocab)?;
            *guard = Some(conn);
        }
        let conn = guard.as_mut().expect("connection present");
        let result = conn.exchange(&ClientMessage::Next { ctx: ctx.to_vec() });
        if matches!(
            result,
            Err(LmError::Transport { .. } | LmError::Timeout | LmError::Protocol(_))
        ) {
            // Stream position is unknown after these; start over next time.
            *guard = None;
        }
        result
    }
}

fn check_same_vocab(expected: &Vocabulary, got: &Vocabulary) -> Result<(), LmError> {
    if expected == got {
        return Ok(());
    }
    Err(LmError::VocabularyMismatch(format!(
        "expected {} tokens (bos {}, eos {}, unk {}), server declared {} tokens (bos {}, eos {}, unk {})",
        expected.len(),
        expected.bos(),
        expected.eos(),
        expected.unk(),
        got.len(),
        got.bos(),
        got.eos(),
        got.unk()
    )))
}

impl LanguageModel for RemoteModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Servers may send log probabilities or raw logits; the latter are
    /// log-softmax normalized.
    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        self.vocab.check_ids(context)?;
        match self.request(context)? {
            ServerMessage::Dist { logp } => {
                if logp.len() != self.vocab.len() {
                    return Err(LmError::Protocol(format!(
                        "distribution has {} entries, vocabulary has {}",
                        logp.len(),
                        self.vocab.len()
                    )));
                }
                // Normalized replies are kept bit for bit; anything else is
                // treated as logits.
                NextTokenDistribution::from_log_probs(logp.clone())
                    .or_else(|_| NextTokenDistribution::from_logits(&logp))
                    .map_err(|e| LmError::Protocol(e.to_string()))
            }
            ServerMessage::Err { code, msg } => Err(LmError::Remote { code, message: msg }),
            other => Err(LmError::Protocol(format!("expected dist, got {other:?}"))),
        }
    }
}

/// One-shot request: connect, handshake, fetch one distribution.
pub fn remote_next(endpoint: &str, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
    RemoteModel::connect(endpoint)?.next(context)
}
