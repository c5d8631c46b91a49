//! Serves any [`LanguageModel`] over the `/v1` protocol.
//!
//! Used to expose the built-in models to remote clients and as the
//! reference peer for protocol conformance tests.

use std::net::ToSocketAddrs;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;
use socket2::{Domain, Protocol, Socket, Type};
use tiny_http::{Header, Method, Request, Response, Server};

use super::protocol::{
    DistributionRequest, ErrorBody, LogprobsResponse, ModelInfo, ScoreRequest, TokenizeRequest,
    TokenizeResponse,
};
use super::{BackendError, LanguageModel};

pub struct ServerHandle {
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    url: String,
}

impl ServerHandle {
    /// Base URL, e.g. `http://127.0.0.1:40123`.
    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and answers requests on
/// `workers` threads until the handle is dropped.
pub fn serve(
    model: Arc<dyn LanguageModel>,
    addr: &str,
    workers: usize,
) -> Result<ServerHandle, Box<dyn std::error::Error + Send + Sync>> {
    let server = Arc::new(Server::from_listener(listen(addr)?, None)?);
    let url = match server.server_addr().to_ip() {
        Some(a) => format!("http://{a}"),
        None => return Err("server is not bound to an IP address".into()),
    };
    let workers = (0..workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let model = Arc::clone(&model);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle(model.as_ref(), request);
                }
            })
        })
        .collect();
    Ok(ServerHandle { server, workers, url })
}

/// Listener whose accepted connections inherit `TCP_NODELAY`. Without it
/// a response larger than the write buffer goes out as two segments and
/// the second waits for the client's delayed ACK.
fn listen(addr: &str) -> std::io::Result<std::net::TcpListener> {
    let addr = addr
        .to_socket_addrs()?
        .next()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "no address"))?;
    let socket = Socket::new(Domain::for_address(addr), Type::STREAM, Some(Protocol::TCP))?;
    socket.set_reuse_address(true)?;
    socket.set_tcp_nodelay(true)?;
    socket.bind(&addr.into())?;
    socket.listen(128)?;
    Ok(socket.into())
}

fn model_info(model: &dyn LanguageModel) -> ModelInfo {
    let d = model.descriptor();
    ModelInfo {
        name: d.name.clone(),
        vocab: d.vocabulary.tokens().to_vec(),
        eos_id: d.vocabulary.eos_id(),
        tokenizer_kind: d.vocabulary.kind(),
        continuation_marker_prefix: d.vocabulary.continuation_prefix().map(str::to_string),
        unk_id: d.vocabulary.unk_id(),
        max_context: (d.max_context != usize::MAX).then_some(d.max_context),
    }
}

fn json_response<T: Serialize>(status: u16, body: &T) -> Response<std::io::Cursor<Vec<u8>>> {
    let bytes = serde_json::to_vec(body).expect("serializable body");
    Response::from_data(bytes)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").unwrap())
}

fn error(status: u16, error: &str, reason: String) -> Response<std::io::Cursor<Vec<u8>>> {
    json_response(status, &ErrorBody { error: error.into(), reason })
}

fn backend_error(e: BackendError) -> Response<std::io::Cursor<Vec<u8>>> {
    match e {
        BackendError::EmptyContext
        | BackendError::ContextTooLong { .. }
        | BackendError::UnknownTokenId(_)
        | BackendError::SequenceTooShort(_)
        | BackendError::Tokenize(_)
        | BackendError::WordAlignment { .. } => error(400, "bad_request", e.to_string()),
        _ => error(500, "backend_failure", e.to_string()),
    }
}

fn parse_body<T: DeserializeOwned>(request: &mut Request) -> Result<T, Response<std::io::Cursor<Vec<u8>>>> {
    let mut raw = Vec::new();
    request
        .as_reader()
        .read_to_end(&mut raw)
        .map_err(|e| error(400, "bad_request", e.to_string()))?;
    serde_json::from_slice(&raw).map_err(|e| error(400, "bad_json", e.to_string()))
}

fn route(model: &dyn LanguageModel, request: &mut Request) -> Response<std::io::Cursor<Vec<u8>>> {
    let path = request.url().split('?').next().unwrap_or("").to_string();
    match (request.method(), path.as_str()) {
        (Method::Get, "/v1/model") => json_response(200, &model_info(model)),
        (Method::Post, "/v1/distribution") => {
            let body: DistributionRequest = match parse_body(request) {
                Ok(b) => b,
                Err(r) => return r,
            };
            match model.next_distribution(&body.context_ids) {
                Ok(d) => json_response(200, &LogprobsResponse { logprobs: d.into_logprobs() }),
                Err(e) => backend_error(e),
            }
        }
        (Method::Post, "/v1/score") => {
            let body: ScoreRequest = match parse_body(request) {
                Ok(b) => b,
                Err(r) => return r,
            };
            match model.score_logprobs(&body.token_ids) {
                Ok(l) => json_response(200, &LogprobsResponse { logprobs: l }),
                Err(e) => backend_error(e),
            }
        }
        (Method::Post, "/v1/tokenize") => {
            let body: TokenizeRequest = match parse_body(request) {
                Ok(b) => b,
                Err(r) => return r,
            };
            match model.tokenize(&body.text) {
                Ok(t) => json_response(
                    200,
                    &TokenizeResponse { token_ids: t.ids, word_spans: t.word_spans },
                ),
                Err(e) => backend_error(e),
            }
        }
        _ => error(404, "not_found", format!("no route for {path}")),
    }
}

fn handle(model: &dyn LanguageModel, mut request: Request) {
    let response = route(model, &mut request);
    if let Err(e) = request.respond(response) {
        log::warn!("failed to send response: {e}");
    }
}
