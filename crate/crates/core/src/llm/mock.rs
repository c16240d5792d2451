use std::collections::VecDeque;

use parking_lot::Mutex;

use super::{BackendKind, ChatBackend, ChatRequest, Completion, GatewayError, TokenUsage};

type Responder = dyn Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync;

/// Scripted backend for tests and offline runs.
pub struct MockBackend {
    responder: Box<Responder>,
}

impl MockBackend {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        Self { responder: Box::new(f) }
    }

    /// Replies from a fixed queue, in order, regardless of the request.
    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue: Mutex<VecDeque<String>> = Mutex::new(replies.into_iter().map(Into::into).collect());
        Self::new(move |req| {
            queue
                .lock()
                .pop_front()
                .ok_or(GatewayError::MockExhausted(req.purpose))
        })
    }
}

impl ChatBackend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn call(&self, req: &ChatRequest) -> Result<Completion, GatewayError> {
        let text = (self.responder)(req)?;
        Ok(Completion {
            usage: TokenUsage::estimate(req, &text),
            text,
            latency_ms: 0,
        })
    }
}
