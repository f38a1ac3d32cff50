//! Protocol-conformant model server, with injectable faults for testing
//! clients and the harness.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::wire::{encode_line, ClientMessage, ServerMessage, PROTOCOL_VERSION};
use super::LanguageModel;

/// Deliberate misbehaviour applied to every `next` reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Drop the last entry of every distribution.
    WrongLength,
    /// Send half a reply, then close the connection.
    CloseMidResponse,
    /// Reply with a line that is not JSON.
    Garbage,
    /// Reply with an `err` message.
    ErrorReply,
    /// Never reply.
    Stall,
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Fault::None),
            "wrong-length" => Ok(Fault::WrongLength),
            "close-mid-response" => Ok(Fault::CloseMidResponse),
            "garbage" => Ok(Fault::Garbage),
            "error-reply" => Ok(Fault::ErrorReply),
            "stall" => Ok(Fault::Stall),
            other => Err(format!("unknown fault `{other}`")),
        }
    }
}

fn error_reply(code: &str, msg: impl Into<String>) -> ServerMessage {
    ServerMessage::Err {
        code: code.into(),
        msg: msg.into(),
    }
}

fn send<W: Write>(w: &mut W, msg: &ServerMessage) -> io::Result<()> {
    let line = encode_line(msg).map_err(io::Error::other)?;
    w.write_all(line.as_bytes())?;
    w.flush()
}

/// Serves one client until it disconnects.
pub fn serve_connection<M, R, W>(model: &M, fault: Fault, reader: R, mut writer: W) -> io::Result<()>
where
    M: LanguageModel + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut greeted = false;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = match serde_json::from_str::<ClientMessage>(&line) {
            Ok(m) => m,
            Err(e) => {
                send(&mut writer, &error_reply("bad_request", e.to_string()))?;
                continue;
            }
        };
        let reply = match msg {
            ClientMessage::Hello { proto } if proto != PROTOCOL_VERSION => {
                error_reply("unsupported_proto", format!("server speaks proto {PROTOCOL_VERSION}"))
            }
            ClientMessage::Hello { .. } => {
                greeted = true;
                let v = model.vocabulary();
                ServerMessage::Vocab {
                    tokens: v.tokens().to_vec(),
                    bos: v.bos(),
                    eos: v.eos(),
                    unk: v.unk(),
                }
            }
            ClientMessage::Next { .. } if !greeted => error_reply("no_handshake", "send hello first"),
            ClientMessage::Next { ctx } => match fault {
                Fault::Stall => continue,
                Fault::ErrorReply => error_reply("injected", "fault injection"),
                Fault::Garbage => {
                    writer.write_all(b"this is not json\n")?;
                    writer.flush()?;
                    continue;
                }
                _ => match model.next(&ctx) {
                    Ok(dist) => {
                        let mut logp = dist.log_probs().to_vec();
                        if fault == Fault::WrongLength {
                            logp.pop();
                        }
                        let reply = ServerMessage::Dist { logp };
                        if fault == Fault::CloseMidResponse {
                            let line = encode_line(&reply).map_err(io::Error::other)?;
                            writer.write_all(&line.as_bytes()[..line.len() / 2])?;
                            writer.flush()?;
                            return Ok(());
                        }
                        reply
                    }
                    Err(e) => error_reply("bad_context", e.to_string()),
                },
            },
        };
        send(&mut writer, &reply)?;
    }
    Ok(())
}

/// A background TCP server. Stops accepting on drop.
pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept_thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `bind` (use port 0 for an ephemeral port) and serves each
    /// connection on its own thread.
    pub fn spawn(model: Arc<dyn LanguageModel>, bind: &str, fault: Fault) -> io::Result<Self> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = Arc::clone(&stop);
        let accept_thread = thread::spawn(move || {
            for stream in listener.incoming() {
                if stop_flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let model = Arc::clone(&model);
                thread::spawn(move || {
                    let _ = handle_stream(&*model, fault, stream);
                });
            }
        });
        Ok(Self {
            addr,
            stop,
            accept_thread: Some(accept_thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock accept().
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept_thread.take() {
            let _ = h.join();
        }
    }
}

fn handle_stream(model: &dyn LanguageModel, fault: Fault, stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let writer = stream.try_clone()?;
    serve_connection(model, fault, BufReader::new(stream), writer)
}

/// Blocking accept loop on an already bound listener.
pub fn serve_forever(listener: TcpListener, model: Arc<dyn LanguageModel>, fault: Fault) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let model = Arc::clone(&model);
        thread::spawn(move || {
            let _ = handle_stream(&*model, fault, stream);
        });
    }
    Ok(())
}
