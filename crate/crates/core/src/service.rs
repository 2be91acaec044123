//! Runs a [`Cell`] on its own thread. Everything else talks to it by
//! sending closures; replies come back over oneshot channels, events go out
//! on a broadcast channel and live robot state on a watch channel.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;
use tokio::sync::{broadcast, oneshot, watch};

use crate::cell::Cell;
use crate::model::CellEvent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("cell service has stopped")]
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    /// Simulated seconds per wall-clock second; `None` leaves the clock to
    /// explicit advance calls.
    pub speed: Option<f64>,
    /// Ticks between live state pushes.
    pub state_every: u64,
    pub event_buffer: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            speed: Some(1.0),
            state_every: 5,
            event_buffer: 1024,
        }
    }
}

impl ServiceConfig {
    pub fn manual() -> Self {
        Self {
            speed: None,
            ..Self::default()
        }
    }
}

/// Runs against the cell and returns the reply, which is sent only after
/// the events the job caused have been published.
type Job = Box<dyn FnOnce(&mut Cell) -> Box<dyn FnOnce() + Send> + Send>;

enum Msg {
    Job(Job),
    Stop,
}

/// Cheap to clone; all clones address the same cell.
#[derive(Clone)]
pub struct CellHandle {
    jobs: mpsc::Sender<Msg>,
    events: broadcast::Sender<CellEvent>,
    live: watch::Receiver<Value>,
}

pub struct CellService {
    handle: CellHandle,
    thread: Option<JoinHandle<Cell>>,
}

/// Largest number of clock ticks taken in one go before looking at the
/// queue again.
const CATCH_UP: u64 = 200;

struct Actor {
    cell: Cell,
    config: ServiceConfig,
    events: broadcast::Sender<CellEvent>,
    live: watch::Sender<Value>,
    published: u64,
    last_live_tick: u64,
}

impl Actor {
    fn publish(&mut self) {
        let fresh = self.cell.registry().events_since(self.published);
        for e in fresh {
            // no receivers is fine
            let _ = self.events.send(e.clone());
        }
        self.published += fresh.len() as u64;
        let tick = self.cell.ticks();
        if tick != self.last_live_tick && tick / self.config.state_every != self.last_live_tick / self.config.state_every {
            self.last_live_tick = tick;
            self.live.send_replace(self.cell.live_state());
        }
    }

    fn run(mut self, jobs: mpsc::Receiver<Msg>) -> Cell {
        let dt = self.cell.config().dt;
        let started = Instant::now();
        let mut clock_ticks = 0u64;
        loop {
            let msg = match self.config.speed {
                None => jobs.recv().map_err(|_| RecvTimeoutError::Disconnected),
                Some(speed) => {
                    let due_at = (clock_ticks + 1) as f64 * dt / speed;
                    let wait = due_at - started.elapsed().as_secs_f64();
                    if wait > 0.0 {
                        jobs.recv_timeout(Duration::from_secs_f64(wait))
                    } else {
                        Err(RecvTimeoutError::Timeout)
                    }
                }
            };
            match msg {
                Ok(Msg::Job(job)) => {
                    let reply = job(&mut self.cell);
                    self.publish();
                    reply();
                }
                Ok(Msg::Stop) | Err(RecvTimeoutError::Disconnected) => break,
                Err(RecvTimeoutError::Timeout) => {
                    let speed = self.config.speed.expect("timeouts only with a clock");
                    let due = (started.elapsed().as_secs_f64() * speed / dt) as u64;
                    let mut budget = CATCH_UP;
                    while clock_ticks < due && budget > 0 {
                        self.cell.step();
                        clock_ticks += 1;
                        budget -= 1;
                        self.publish();
                    }
                }
            }
        }
        self.publish();
        self.cell
    }
}

impl CellService {
    pub fn spawn(cell: Cell, config: ServiceConfig) -> CellService {
        assert!(config.state_every > 0, "state_every must be positive");
        let (tx, rx) = mpsc::channel();
        let (events, _) = broadcast::channel(config.event_buffer.max(64));
        let (live_tx, live_rx) = watch::channel(cell.live_state());
        let published = cell.registry().next_seq();
        let last_live_tick = cell.ticks();
        let actor = Actor {
            cell,
            config,
            events: events.clone(),
            live: live_tx,
            published,
            last_live_tick,
        };
        let thread = std::thread::Builder::new()
            .name("reconcell-cell".into())
            .spawn(move || actor.run(rx))
            .expect("spawn cell thread");
        CellService {
            handle: CellHandle {
                jobs: tx,
                events,
                live: live_rx,
            },
            thread: Some(thread),
        }
    }

    pub fn handle(&self) -> CellHandle {
        self.handle.clone()
    }

    /// Stops the thread and hands the cell back.
    pub fn shutdown(mut self) -> Cell {
        let _ = self.handle.jobs.send(Msg::Stop);
        self.thread
            .take()
            .expect("joined once")
            .join()
            .expect("cell thread panicked")
    }
}

impl Drop for CellService {
    fn drop(&mut self) {
        if let Some(t) = self.thread.take() {
            let _ = self.handle.jobs.send(Msg::Stop);
            let _ = t.join();
        }
    }
}

impl CellHandle {
    fn submit<R: Send + 'static>(&self, f: impl FnOnce(&mut Cell) -> R + Send + 'static) -> Result<oneshot::Receiver<R>, ServiceError> {
        let (tx, rx) = oneshot::channel();
        let job: Job = Box::new(move |cell| {
            let out = f(cell);
            Box::new(move || {
                let _ = tx.send(out);
            })
        });
        self.jobs.send(Msg::Job(job)).map_err(|_| ServiceError::Stopped)?;
        Ok(rx)
    }

    /// Runs `f` on the cell thread.
    pub async fn call<R: Send + 'static>(&self, f: impl FnOnce(&mut Cell) -> R + Send + 'static) -> Result<R, ServiceError> {
        self.submit(f)?.await.map_err(|_| ServiceError::Stopped)
    }

    /// Like [`CellHandle::call`] for code outside an async runtime.
    pub fn call_blocking<R: Send + 'static>(&self, f: impl FnOnce(&mut Cell) -> R + Send + 'static) -> Result<R, ServiceError> {
        self.submit(f)?.blocking_recv().map_err(|_| ServiceError::Stopped)
    }

    /// Events from `from_seq` on (or only new ones), without gaps or
    /// duplicates: the backlog plus a live receiver for what follows.
    pub async fn subscribe(&self, from_seq: Option<u64>) -> Result<(Vec<CellEvent>, broadcast::Receiver<CellEvent>), ServiceError> {
        let events = self.events.clone();
        self.call(move |cell| {
            let backlog = match from_seq {
                Some(seq) => cell.registry().events_since(seq).to_vec(),
                None => Vec::new(),
            };
            (backlog, events.subscribe())
        })
        .await
    }

    /// Latest robot and table state pushed by the cell thread.
    pub fn live(&self) -> watch::Receiver<Value> {
        self.live.clone()
    }
}
