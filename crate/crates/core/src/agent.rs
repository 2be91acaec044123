//! Module agents over TCP: the cell-side listener and a small client for
//! writing agents.
//!
//! One connection is one module. The first frame must be HELLO; the
//! listener answers WELCOME and from then on forwards commands to the agent
//! and heartbeats, results and events to the cell.

use std::io::BufReader;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;
use tokio::sync::mpsc::unbounded_channel;

use crate::registry::protocol::{Frame, FrameError, FrameReader};
use crate::registry::{ModuleDescriptor, ModuleId};
use crate::service::CellHandle;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error("registry refused the module: {0}")]
    Refused(String),
    #[error("connection closed")]
    Closed,
}

/// Accepts agent connections on its own thread until the handle is dropped
/// or the cell stops.
pub struct AgentListener {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<thread::JoinHandle<()>>,
}

impl AgentListener {
    pub fn bind(addr: impl ToSocketAddrs, cell: CellHandle) -> std::io::Result<AgentListener> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::Builder::new().name("reconcell-agents".into()).spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, peer)) => {
                        let cell = cell.clone();
                        thread::spawn(move || {
                            if let Err(e) = serve_agent(stream, cell) {
                                log::info!("agent {peer}: {e}");
                            }
                        });
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(20)),
                    Err(e) => {
                        log::warn!("agent listener: {e}");
                        thread::sleep(Duration::from_millis(100));
                    }
                }
            }
        })?;
        Ok(AgentListener {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for AgentListener {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn send(stream: &Mutex<TcpStream>, frame: &Frame) -> Result<(), FrameError> {
    frame.write_to(&mut *stream.lock().expect("writer lock"))
}

fn serve_agent(stream: TcpStream, cell: CellHandle) -> Result<(), AgentError> {
    stream.set_nonblocking(false)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    let mut reader = FrameReader::new(BufReader::new(stream));
    let descriptor = loop {
        match reader.next_frame() {
            Ok(Some(Frame::Hello { descriptor })) => break descriptor,
            Ok(Some(_)) => send(&writer, &Frame::Error { detail: "expected HELLO".into() })?,
            Ok(None) => return Ok(()),
            Err(e) if e.is_recoverable() => send(&writer, &e.to_frame())?,
            Err(e) => return Err(e.into()),
        }
    };
    let (outbox, mut commands) = unbounded_channel::<Frame>();
    let attached = cell
        .call_blocking(move |c| c.attach_remote(descriptor, outbox).map_err(|e| e.to_string()))
        .map_err(|_| AgentError::Closed)?;
    let id = match attached {
        Ok(id) => id,
        Err(detail) => {
            send(&writer, &Frame::Error { detail: detail.clone() })?;
            return Err(AgentError::Refused(detail));
        }
    };
    send(&writer, &Frame::Welcome { module_id: id.clone() })?;

    let out = writer.clone();
    let pump = thread::spawn(move || {
        while let Some(frame) = commands.blocking_recv() {
            if send(&out, &frame).is_err() {
                break;
            }
        }
        // outbox closed: the cell let go of the module
        let _ = out.lock().expect("writer lock").shutdown(std::net::Shutdown::Both);
    });

    let result = loop {
        let frame = match reader.next_frame() {
            Ok(Some(f)) => f,
            Ok(None) => break Ok(()),
            Err(e) if e.is_recoverable() => {
                send(&writer, &e.to_frame())?;
                continue;
            }
            Err(e) => break Err(e.into()),
        };
        let bye = frame == Frame::Bye;
        let module = id.clone();
        let reply = cell.call_blocking(move |c| c.remote_frame(&module, frame));
        match reply {
            Ok(Some(f)) => send(&writer, &f)?,
            Ok(None) => {}
            Err(_) => break Err(AgentError::Closed),
        }
        if bye {
            break Ok(());
        }
    };
    let module = id.clone();
    let _ = cell.call_blocking(move |c| c.remote_gone(&module));
    let _ = writer.lock().expect("writer lock").shutdown(std::net::Shutdown::Both);
    let _ = pump.join();
    result
}

/// Command handler for [`Agent::run`]: verb and params in, outcome and
/// result document out.
pub type Handler = dyn FnMut(&str, &Value) -> (String, Value) + Send;

/// Client side of one module connection.
pub struct Agent {
    module_id: ModuleId,
    writer: Arc<Mutex<TcpStream>>,
    reader: FrameReader<BufReader<TcpStream>>,
}

impl Agent {
    /// Connects and registers `descriptor`. The module stays ATTACHED until
    /// the first heartbeat.
    pub fn connect(addr: impl ToSocketAddrs, descriptor: ModuleDescriptor) -> Result<Agent, AgentError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let writer = Arc::new(Mutex::new(stream.try_clone()?));
        let mut reader = FrameReader::new(BufReader::new(stream));
        send(&writer, &Frame::Hello { descriptor })?;
        match reader.next_frame()? {
            Some(Frame::Welcome { module_id }) => Ok(Agent {
                module_id,
                writer,
                reader,
            }),
            Some(Frame::Error { detail }) => Err(AgentError::Refused(detail)),
            Some(other) => Err(AgentError::Refused(format!("unexpected reply {other:?}"))),
            None => Err(AgentError::Closed),
        }
    }

    pub fn module_id(&self) -> &ModuleId {
        &self.module_id
    }

    pub fn send(&self, frame: &Frame) -> Result<(), AgentError> {
        Ok(send(&self.writer, frame)?)
    }

    pub fn heartbeat(&self, seq: u64) -> Result<(), AgentError> {
        self.send(&Frame::Heartbeat { seq })
    }

    /// Next frame from the cell; `None` once the connection closes.
    pub fn recv(&mut self) -> Result<Option<Frame>, AgentError> {
        Ok(self.reader.next_frame()?)
    }

    /// Heartbeats every `period` on a helper thread and answers commands
    /// with `handler` until the connection closes.
    pub fn run(mut self, period: Duration, mut handler: Box<Handler>) -> Result<(), AgentError> {
        let beats = self.writer.clone();
        let alive = Arc::new(AtomicBool::new(true));
        let flag = alive.clone();
        let beat_thread = thread::spawn(move || {
            let mut seq = 0;
            while flag.load(Ordering::Relaxed) {
                seq += 1;
                if send(&beats, &Frame::Heartbeat { seq }).is_err() {
                    break;
                }
                thread::sleep(period);
            }
        });
        let result = loop {
            match self.recv() {
                Ok(Some(Frame::Command { id, verb, params })) => {
                    let (outcome, result) = handler(&verb, &params);
                    if let Err(e) = self.send(&Frame::Result { id, outcome, result }) {
                        break Err(e);
                    }
                }
                Ok(Some(Frame::Error { detail })) => log::warn!("cell: {detail}"),
                Ok(Some(Frame::Bye)) | Ok(None) => break Ok(()),
                Ok(Some(_)) => {}
                Err(e) => break Err(e),
            }
        };
        alive.store(false, Ordering::Relaxed);
        let _ = beat_thread.join();
        result
    }

    /// Says goodbye and closes the connection.
    pub fn close(self) -> Result<(), AgentError> {
        self.send(&Frame::Bye)?;
        let _ = self.writer.lock().expect("writer lock").shutdown(std::net::Shutdown::Write);
        Ok(())
    }
}
