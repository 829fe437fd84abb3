//! Request/response transports: in-process dispatch for deterministic tests
//! and real stream sockets on localhost for the integration demo.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::registry::wire::{read_frame, write_frame, Body, Envelope};

/// A node that can answer protocol envelopes. Handlers must not panic on
/// malformed input; they answer with [`Body::Error`] instead.
pub trait NodeHandler {
    fn handle_envelope(&mut self, envelope: Envelope) -> Envelope;
}

/// Request/response channel to named nodes.
pub trait Transport {
    fn request(&self, to: &str, envelope: Envelope) -> Result<Envelope>;
}

/// Synchronous single-threaded dispatch; behaves like a lossless queue pair
/// per node.
#[derive(Default)]
pub struct InProcessTransport {
    nodes: RefCell<BTreeMap<String, Box<dyn NodeHandler>>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&self, id: impl Into<String>, handler: Box<dyn NodeHandler>) {
        self.nodes.borrow_mut().insert(id.into(), handler);
    }

    /// Swaps a node's handler, e.g. to simulate a restart.
    pub fn replace(&self, id: &str, handler: Box<dyn NodeHandler>) {
        self.nodes.borrow_mut().insert(id.to_string(), handler);
    }
}

impl Transport for InProcessTransport {
    fn request(&self, to: &str, envelope: Envelope) -> Result<Envelope> {
        let mut nodes = self.nodes.borrow_mut();
        let handler = nodes
            .get_mut(to)
            .ok_or_else(|| Error::Protocol(format!("unknown node '{to}'")))?;
        Ok(handler.handle_envelope(envelope))
    }
}

/// One listening node: accepts connections on a loopback port and serves
/// frames until shut down. State mutation is serialized by the handler mutex,
/// so interleaved frames from concurrent connections cannot corrupt it.
pub struct NodeServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    live_streams: Arc<Mutex<Vec<TcpStream>>>,
    accept_thread: Option<JoinHandle<()>>,
}

impl NodeServer {
    pub fn spawn(node_id: &str, handler: Arc<Mutex<dyn NodeHandler + Send>>) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", 0))?;
        let addr = listener.local_addr()?;
        listener.set_nonblocking(true)?;
        let stop = Arc::new(AtomicBool::new(false));
        let stop_flag = stop.clone();
        let live_streams: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let live = live_streams.clone();
        let id = node_id.to_string();

        let accept_thread = thread::spawn(move || {
            let mut connections: Vec<JoinHandle<()>> = Vec::new();
            while !stop_flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        if let Ok(clone) = stream.try_clone() {
                            live.lock().unwrap().push(clone);
                        }
                        let handler = handler.clone();
                        let id = id.clone();
                        connections.push(thread::spawn(move || serve_connection(stream, handler, id)));
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(1));
                    }
                    Err(_) => break,
                }
            }
            for c in connections {
                let _ = c.join();
            }
        });

        Ok(Self { addr, stop, live_streams, accept_thread: Some(accept_thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, severs any open connections, and joins all threads.
    pub fn shutdown(mut self) {
        self.stop_and_join();
    }

    fn stop_and_join(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for stream in self.live_streams.lock().unwrap().drain(..) {
            let _ = stream.shutdown(std::net::Shutdown::Both);
        }
        if let Some(t) = self.accept_thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for NodeServer {
    fn drop(&mut self) {
        self.stop_and_join();
    }
}

fn serve_connection(mut stream: TcpStream, handler: Arc<Mutex<dyn NodeHandler + Send>>, node_id: String) {
    let _ = stream.set_read_timeout(Some(Duration::from_secs(30)));
    let _ = stream.set_nodelay(true);
    loop {
        match read_frame(&mut stream) {
            Ok(envelope) => {
                let reply = handler.lock().unwrap().handle_envelope(envelope);
                if write_frame(&mut stream, &reply).is_err() {
                    break;
                }
            }
            // The frame arrived intact but did not decode: answer and keep
            // the connection alive.
            Err(Error::Protocol(message)) => {
                let reply = Envelope { sender: node_id.clone(), body: Body::Error { message } };
                if write_frame(&mut stream, &reply).is_err() {
                    break;
                }
            }
            Err(_) => break,
        }
    }
}

/// Connect-per-request client over loopback TCP.
#[derive(Default)]
pub struct SocketTransport {
    peers: Mutex<BTreeMap<String, SocketAddr>>,
}

impl SocketTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_peer(&self, id: impl Into<String>, addr: SocketAddr) {
        self.peers.lock().unwrap().insert(id.into(), addr);
    }
}

impl Transport for SocketTransport {
    fn request(&self, to: &str, envelope: Envelope) -> Result<Envelope> {
        let addr = *self
            .peers
            .lock()
            .unwrap()
            .get(to)
            .ok_or_else(|| Error::Protocol(format!("unknown node '{to}'")))?;
        let mut stream = TcpStream::connect(addr)?;
        stream.set_read_timeout(Some(Duration::from_secs(30)))?;
        stream.set_nodelay(true)?;
        write_frame(&mut stream, &envelope)?;
        read_frame(&mut stream)
    }
}
