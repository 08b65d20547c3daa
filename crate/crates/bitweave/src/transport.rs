//! Remote evaluation. The benchmark runs as a TCP service that owns the
//! machine; the agent connects as a client and asks for one plan at a time.
//!
//! Frames are a 4-byte big-endian length followed by one UTF-8 JSON
//! document carrying a mandatory `v` (protocol version), `type`, and `id`.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use bitweave_core::env::{Environment, EvalStatus, Measurement, RewardOrigin, RewardSource};
use bitweave_core::linearize::{BitBudget, EncodingPlan};

pub const PROTOCOL_VERSION: u32 = 1;
const MAX_FRAME: u32 = 16 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<B> {
    pub v: u32,
    pub id: u64,
    #[serde(flatten)]
    pub body: B,
}

/// Bench settings a client may ask for. The server only accepts values
/// equal to its own, since the baseline was measured under them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Request {
    Hello,
    Eval {
        tensor: String,
        plan: String,
        #[serde(default)]
        overrides: Overrides,
    },
    Shutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Response {
    Hello {
        tensor: String,
        dims: Vec<usize>,
        bits: Vec<u32>,
        baseline_seconds: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        baseline_plan: Option<String>,
    },
    Result {
        candidate_seconds: f64,
        baseline_seconds: f64,
        speedup: f64,
        status: Status,
        #[serde(default)]
        message: String,
        #[serde(default)]
        cached: bool,
    },
    Bye,
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg)?;
    let len = u32::try_from(body.len()).ok().filter(|&n| n <= MAX_FRAME);
    let len = len.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&body)?;
    w.flush()
}

/// `Ok(None)` on a clean end of stream before a new frame.
pub fn read_frame<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> io::Result<Option<T>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {len} bytes")));
    }
    let mut body = vec![0u8; len as usize];
    r.read_exact(&mut body)?;
    serde_json::from_slice(&body).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}

/// What the server exposes about its tensor and bench settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerInfo {
    pub tensor: String,
    pub dims: Vec<usize>,
    pub rank: usize,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
}

/// Serves evaluations from an [`Environment`], one connection at a time.
pub struct Server<S> {
    env: Environment<S>,
    info: ServerInfo,
}

/// Whether the serving loop should keep accepting connections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Shutdown,
}

impl<S: RewardSource> Server<S> {
    pub fn new(env: Environment<S>, info: ServerInfo) -> Self {
        Self { env, info }
    }

    pub fn environment(&self) -> &Environment<S> {
        &self.env
    }

    /// Accepts connections until a client sends SHUTDOWN.
    pub fn serve(&mut self, listener: &TcpListener) -> io::Result<()> {
        loop {
            let (stream, _) = listener.accept()?;
            match self.serve_connection(stream) {
                Ok(Flow::Shutdown) => return Ok(()),
                Ok(Flow::Continue) => {}
                // a broken or malformed connection only ends that connection
                Err(_) => {}
            }
        }
    }

    pub fn serve_connection(&mut self, mut stream: TcpStream) -> io::Result<Flow> {
        stream.set_nodelay(true)?;
        while let Some(req) = read_frame::<_, Envelope<Request>>(&mut stream)? {
            let (body, flow) = if req.v != PROTOCOL_VERSION {
                (error_result(&self.env, format!("protocol version {} not supported", req.v)), Flow::Continue)
            } else {
                self.handle(req.body)
            };
            write_frame(&mut stream, &Envelope { v: PROTOCOL_VERSION, id: req.id, body })?;
            if flow == Flow::Shutdown {
                return Ok(Flow::Shutdown);
            }
        }
        Ok(Flow::Continue)
    }

    fn handle(&mut self, req: Request) -> (Response, Flow) {
        match req {
            Request::Hello => (
                Response::Hello {
                    tensor: self.info.tensor.clone(),
                    dims: self.info.dims.clone(),
                    bits: self.env.budget().per_mode().to_vec(),
                    baseline_seconds: self.env.baseline_seconds(),
                    baseline_plan: self.env.source().baseline_plan().map(|p| p.to_text()),
                },
                Flow::Continue,
            ),
            Request::Shutdown => (Response::Bye, Flow::Shutdown),
            Request::Eval { tensor, plan, overrides } => (self.eval(&tensor, &plan, &overrides), Flow::Continue),
        }
    }

    fn eval(&mut self, tensor: &str, plan: &str, o: &Overrides) -> Response {
        if tensor != self.info.tensor {
            return error_result(&self.env, format!("unknown tensor {tensor:?}, serving {:?}", self.info.tensor));
        }
        let i = &self.info;
        let mismatch = [("rank", o.rank, i.rank), ("repeats", o.repeats, i.repeats), ("warmup", o.warmup, i.warmup), ("threads", o.threads, i.threads)]
            .into_iter()
            .find(|&(_, asked, have)| asked.is_some_and(|a| a != have));
        if let Some((name, asked, have)) = mismatch {
            return error_result(&self.env, format!("{name}={} differs from the server's {have}", asked.unwrap_or(0)));
        }
        let plan = match EncodingPlan::parse(plan, self.env.budget()) {
            Ok(p) => p,
            Err(e) => return error_result(&self.env, e.to_string()),
        };
        match self.env.terminal_reward(&plan) {
            Ok(r) => Response::Result {
                candidate_seconds: r.seconds,
                baseline_seconds: self.env.baseline_seconds(),
                speedup: r.speedup,
                status: if r.timed_out { Status::Timeout } else { Status::Ok },
                message: String::new(),
                cached: r.origin == RewardOrigin::Cached,
            },
            Err(e) => error_result(&self.env, e.to_string()),
        }
    }
}

fn error_result<S: RewardSource>(env: &Environment<S>, message: String) -> Response {
    Response::Result {
        candidate_seconds: 0.0,
        baseline_seconds: env.baseline_seconds(),
        speedup: 0.0,
        status: Status::Error,
        message,
        cached: false,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("connect: {0}")]
    Io(#[from] io::Error),
    #[error("protocol: {0}")]
    Protocol(String),
}

/// Handshake data from the server.
#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub tensor: String,
    pub dims: Vec<usize>,
    pub bits: Vec<u32>,
    pub baseline_seconds: f64,
    pub baseline_plan: Option<String>,
}

/// Blocking client; implements [`RewardSource`] so an [`Environment`] can
/// wrap it exactly like a local benchmark.
pub struct RemoteReward {
    addr: String,
    stream: Option<TcpStream>,
    hello: Hello,
    budget: BitBudget,
    next_id: u64,
    overrides: Overrides,
    response_timeout: Option<Duration>,
    retries: u32,
    reconnects: u64,
}

impl RemoteReward {
    pub fn connect(addr: impl Into<String>) -> Result<Self, ClientError> {
        let addr = addr.into();
        let mut stream = open(&addr, None)?;
        let mut next_id = 1;
        let hello = handshake(&mut stream, &mut next_id)?;
        let budget = BitBudget::from_bits(hello.bits.clone());
        Ok(Self {
            addr,
            stream: Some(stream),
            hello,
            budget,
            next_id,
            overrides: Overrides::default(),
            response_timeout: None,
            retries: 5,
            reconnects: 0,
        })
    }

    /// Waits at most `t` for each response; a late answer counts as a
    /// timed-out evaluation.
    pub fn with_response_timeout(mut self, t: Duration) -> Self {
        self.response_timeout = Some(t);
        self
    }

    pub fn with_overrides(mut self, o: Overrides) -> Self {
        self.overrides = o;
        self
    }

    pub fn with_retries(mut self, n: u32) -> Self {
        self.retries = n;
        self
    }

    pub fn hello(&self) -> &Hello {
        &self.hello
    }

    pub fn budget(&self) -> &BitBudget {
        &self.budget
    }

    pub fn reconnects(&self) -> u64 {
        self.reconnects
    }

    /// Reopens the connection and checks the server still describes the
    /// same tensor and baseline.
    fn reconnect(&mut self) -> Result<(), ClientError> {
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(25 << attempt.min(6)));
            }
            let next_id = &mut self.next_id;
            let attempt = open(&self.addr, self.response_timeout)
                .map_err(ClientError::from)
                .and_then(|mut s| handshake(&mut s, next_id).map(|h| (s, h)));
            match attempt {
                Ok((s, h)) => {
                    if h.tensor != self.hello.tensor || h.dims != self.hello.dims || h.bits != self.hello.bits {
                        return Err(ClientError::Protocol(format!("server now serves {:?} {:?}", h.tensor, h.dims)));
                    }
                    // a restarted server re-measures its baseline; use the new one
                    self.hello = h;
                    self.stream = Some(s);
                    self.reconnects += 1;
                    return Ok(());
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    /// One EVAL round trip, reconnecting on broken connections.
    pub fn evaluate(&mut self, plan: &EncodingPlan) -> Result<Envelope<Response>, ClientError> {
        let body = Request::Eval { tensor: self.hello.tensor.clone(), plan: plan.to_text(), overrides: self.overrides.clone() };
        let mut attempts = 0;
        loop {
            if self.stream.is_none() {
                self.reconnect()?;
            }
            let id = self.next_id;
            self.next_id += 1;
            let stream = self.stream.as_mut().expect("connected");
            stream.set_read_timeout(self.response_timeout)?;
            let sent = write_frame(stream, &Envelope { v: PROTOCOL_VERSION, id, body: body.clone() })
                .and_then(|_| read_frame::<_, Envelope<Response>>(stream));
            match sent {
                Ok(Some(resp)) => {
                    if resp.id != id {
                        self.stream = None;
                        return Err(ClientError::Protocol(format!("response id {} for request {id}", resp.id)));
                    }
                    return Ok(resp);
                }
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                    self.stream = None;
                    return Err(ClientError::Io(e));
                }
                Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                    self.stream = None;
                    return Err(ClientError::Protocol(e.to_string()));
                }
                // end of stream or reset: the server went away
                _ if attempts < self.retries => {
                    attempts += 1;
                    self.stream = None;
                }
                Ok(None) => return Err(ClientError::Protocol("server closed the connection".into())),
                Err(e) => return Err(ClientError::Io(e)),
            }
        }
    }

    /// Asks the server to stop.
    pub fn shutdown(mut self) -> Result<(), ClientError> {
        let stream = match self.stream.as_mut() {
            Some(s) => s,
            None => return Ok(()),
        };
        write_frame(stream, &Envelope { v: PROTOCOL_VERSION, id: self.next_id, body: Request::Shutdown })?;
        read_frame::<_, Envelope<Response>>(stream)?;
        Ok(())
    }
}

fn open(addr: &str, timeout: Option<Duration>) -> io::Result<TcpStream> {
    let mut last = io::Error::new(io::ErrorKind::NotFound, format!("{addr} resolves to nothing"));
    for a in addr.to_socket_addrs()? {
        match TcpStream::connect(a) {
            Ok(s) => {
                s.set_nodelay(true)?;
                s.set_read_timeout(timeout)?;
                return Ok(s);
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn handshake(stream: &mut TcpStream, next_id: &mut u64) -> Result<Hello, ClientError> {
    let id = *next_id;
    *next_id += 1;
    write_frame(stream, &Envelope { v: PROTOCOL_VERSION, id, body: Request::Hello })?;
    match read_frame::<_, Envelope<Response>>(stream)? {
        Some(Envelope { id: got, .. }) if got != id => {
            Err(ClientError::Protocol(format!("response id {got} for request {id}")))
        }
        Some(Envelope { body: Response::Hello { tensor, dims, bits, baseline_seconds, baseline_plan }, .. }) => {
            Ok(Hello { tensor, dims, bits, baseline_seconds, baseline_plan })
        }
        Some(other) => Err(ClientError::Protocol(format!("expected HELLO, got {other:?}"))),
        None => Err(ClientError::Protocol("server closed the connection".into())),
    }
}

impl RewardSource for RemoteReward {
    fn baseline_seconds(&self) -> f64 {
        self.hello.baseline_seconds
    }

    fn baseline_plan(&self) -> Option<EncodingPlan> {
        self.hello.baseline_plan.as_deref().and_then(|p| EncodingPlan::parse(p, &self.budget).ok())
    }

    fn measure(&mut self, plan: &EncodingPlan) -> bitweave_core::Result<Measurement> {
        let resp = match self.evaluate(plan) {
            Ok(r) => r,
            Err(ClientError::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {
                let waited = self.response_timeout.map_or(0.0, |d| d.as_secs_f64());
                return Ok(Measurement { seconds: waited, speedup: 0.0, status: EvalStatus::TimedOut });
            }
            Err(e) => return Err(bitweave_core::Error::Evaluation(e.to_string())),
        };
        match resp.body {
            Response::Result { candidate_seconds, speedup, status, message, .. } => match status {
                Status::Ok => Ok(Measurement { seconds: candidate_seconds, speedup, status: EvalStatus::Ok }),
                Status::Timeout => Ok(Measurement { seconds: candidate_seconds, speedup, status: EvalStatus::TimedOut }),
                Status::Error => Err(bitweave_core::Error::Evaluation(message)),
            },
            other => Err(bitweave_core::Error::Evaluation(format!("expected RESULT, got {other:?}"))),
        }
    }
}
