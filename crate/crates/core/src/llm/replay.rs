use std::collections::HashMap;

use parking_lot::Mutex;

use super::{BackendKind, ChatBackend, ChatRecord, ChatRequest, Completion, FixtureEntry, GatewayError};

/// Answers from recorded fixtures keyed by canonical request hash.
///
/// A hash recorded several times is answered in recording order; once its
/// responses run out the last one repeats.
pub struct ReplayBackend {
    entries: HashMap<String, Vec<FixtureEntry>>,
    cursors: Mutex<HashMap<String, usize>>,
}

impl ReplayBackend {
    pub fn new(entries: impl IntoIterator<Item = FixtureEntry>) -> Self {
        let mut map: HashMap<String, Vec<FixtureEntry>> = HashMap::new();
        for e in entries {
            map.entry(e.hash.clone()).or_default().push(e);
        }
        Self {
            entries: map,
            cursors: Mutex::new(HashMap::new()),
        }
    }

    pub fn from_records(records: &[ChatRecord]) -> Self {
        Self::new(records.iter().map(FixtureEntry::from))
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Replay
    }

    fn call(&self, req: &ChatRequest) -> Result<Completion, GatewayError> {
        let hash = req.canonical_hash();
        let Some(list) = self.entries.get(&hash) else {
            return Err(GatewayError::ReplayMiss {
                purpose: req.purpose,
                hash,
            });
        };
        let idx = {
            let mut cursors = self.cursors.lock();
            let c = cursors.entry(hash).or_insert(0);
            let idx = (*c).min(list.len() - 1);
            *c += 1;
            idx
        };
        let e = &list[idx];
        Ok(Completion {
            text: e.response.clone(),
            latency_ms: e.latency_ms,
            usage: e.usage,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{LlmClient, PurposeTag};

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", PurposeTag::Reflection, 0.0).system("s").user(text)
    }

    fn entry(r: &ChatRequest, response: &str) -> FixtureEntry {
        FixtureEntry {
            hash: r.canonical_hash(),
            request: r.clone(),
            response: response.into(),
            latency_ms: 12,
            usage: Default::default(),
        }
    }

    #[test]
    fn hit_returns_recorded_text_verbatim() {
        let r = req("a");
        let client = LlmClient::from_backend(ReplayBackend::new([entry(&r, "  exact\ntext ")]));
        assert_eq!(client.complete(&r).unwrap(), "  exact\ntext ");
        assert_eq!(client.records()[0].latency_ms, 12);
    }

    #[test]
    fn miss_names_the_purpose() {
        let client = LlmClient::from_backend(ReplayBackend::new([]));
        let err = client.complete(&req("zzz")).unwrap_err();
        assert!(matches!(err, GatewayError::ReplayMiss { purpose: PurposeTag::Reflection, .. }));
        assert!(err.to_string().contains("reflection"));
    }

    #[test]
    fn repeated_hashes_play_back_in_order() {
        let r = req("same");
        let backend = ReplayBackend::new([entry(&r, "first"), entry(&r, "second")]);
        let client = LlmClient::from_backend(backend);
        assert_eq!(client.complete(&r).unwrap(), "first");
        assert_eq!(client.complete(&r).unwrap(), "second");
        assert_eq!(client.complete(&r).unwrap(), "second");
    }
}
