use std::fmt;
use std::sync::{Arc, Mutex};

use super::{
    check_embeddings, ChatExchange, EmbeddingVector, GenerationParams, LlmBackend, LlmError,
};

pub const MOCK_EMBEDDING_MODEL: &str = "mock-feature-hash";
pub const DEFAULT_MOCK_DIM: usize = 256;
pub const DEFAULT_MOCK_SEED: u64 = 0x5eed_cafe;

/// One recorded call against a [`MockBackend`].
#[derive(Debug, Clone)]
pub struct MockRequest {
    pub call_index: usize,
    pub exchange: ChatExchange,
    pub params: GenerationParams,
}

pub type Responder = Arc<dyn Fn(&MockRequest) -> Result<String, LlmError> + Send + Sync>;

#[derive(Clone)]
enum Script {
    Sequence(Arc<Vec<String>>),
    Responder(Responder),
}

/// Deterministic backend for tests and offline runs.
///
/// Completions come either from a fixed sequence (one entry per call) or a
/// responder closure fed the call index and the request. Embeddings are a
/// seeded feature hash of character trigrams and word tokens, so similar
/// strings land close together.
///
/// Cloning yields a fresh instance: same script, cursor rewound, no history.
pub struct MockBackend {
    script: Script,
    cursor: Mutex<usize>,
    calls: Mutex<Vec<MockRequest>>,
    dim: usize,
    seed: u64,
    fail_embeddings: bool,
}

impl fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockBackend")
            .field("dim", &self.dim)
            .field("calls", &self.call_count())
            .finish()
    }
}

impl Clone for MockBackend {
    fn clone(&self) -> Self {
        Self {
            script: self.script.clone(),
            cursor: Mutex::new(0),
            calls: Mutex::new(Vec::new()),
            dim: self.dim,
            seed: self.seed,
            fail_embeddings: self.fail_embeddings,
        }
    }
}

impl MockBackend {
    pub fn scripted<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_script(Script::Sequence(Arc::new(
            responses.into_iter().map(Into::into).collect(),
        )))
    }

    pub fn with_responder<F>(responder: F) -> Self
    where
        F: Fn(&MockRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self::with_script(Script::Responder(Arc::new(responder)))
    }

    pub fn from_responder(responder: Responder) -> Self {
        Self::with_script(Script::Responder(responder))
    }

    /// Replies with the last user message verbatim.
    pub fn echo() -> Self {
        Self::with_responder(|req| {
            Ok(req
                .exchange
                .last_user_content()
                .unwrap_or_default()
                .to_string())
        })
    }

    fn with_script(script: Script) -> Self {
        Self {
            script,
            cursor: Mutex::new(0),
            calls: Mutex::new(Vec::new()),
            dim: DEFAULT_MOCK_DIM,
            seed: DEFAULT_MOCK_SEED,
            fail_embeddings: false,
        }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        self.dim = dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Makes every `embed` call fail with a transport error.
    pub fn failing_embeddings(mut self) -> Self {
        self.fail_embeddings = true;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().expect("mock call log poisoned").len()
    }

    pub fn calls(&self) -> Vec<MockRequest> {
        self.calls.lock().expect("mock call log poisoned").clone()
    }
}

impl LlmBackend for MockBackend {
    fn complete(
        &self,
        exchange: &ChatExchange,
        params: &GenerationParams,
    ) -> Result<String, LlmError> {
        exchange.validate()?;
        params.validate()?;
        let call_index = {
            let mut cursor = self.cursor.lock().expect("mock cursor poisoned");
            let idx = *cursor;
            *cursor += 1;
            idx
        };
        let request = MockRequest {
            call_index,
            exchange: exchange.clone(),
            params: params.clone(),
        };
        self.calls
            .lock()
            .expect("mock call log poisoned")
            .push(request.clone());
        match &self.script {
            Script::Sequence(items) => items.get(call_index).cloned().ok_or_else(|| {
                LlmError::Config(format!(
                    "mock script exhausted after {} response(s)",
                    items.len()
                ))
            }),
            Script::Responder(f) => f(&request),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::Precondition("embed called with no texts".into()));
        }
        if self.fail_embeddings {
            return Err(LlmError::Transport {
                attempts: 1,
                message: "mock embedding endpoint unavailable".into(),
            });
        }
        let vectors: Vec<_> = texts
            .iter()
            .map(|t| EmbeddingVector {
                values: hash_embedding(t, self.dim, self.seed),
                source_model_id: MOCK_EMBEDDING_MODEL.to_string(),
            })
            .collect();
        check_embeddings(texts.len(), &vectors)?;
        Ok(vectors)
    }
}

fn fnv1a64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Unit-normalized feature hash of lowercase word tokens and their padded
/// character trigrams. Text without any alphanumeric content maps to zero.
pub fn hash_embedding(text: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    let lower = text.to_lowercase();
    for token in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let word = format!("w:{token}");
        v[(fnv1a64(seed, word.as_bytes()) % dim as u64) as usize] += 1.0;
        let padded: Vec<char> = std::iter::once('<')
            .chain(token.chars())
            .chain(std::iter::once('>'))
            .collect();
        for tri in padded.windows(3) {
            let gram: String = tri.iter().collect();
            v[(fnv1a64(seed, gram.as_bytes()) % dim as u64) as usize] += 1.0;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::cosine;

    fn ex(text: &str) -> ChatExchange {
        ChatExchange::single("sys", text)
    }

    #[test]
    fn scripted_sequence_in_order() {
        let mock = MockBackend::scripted(["A", "B"]);
        let p = GenerationParams::greedy();
        assert_eq!(mock.complete(&ex("q"), &p).unwrap(), "A");
        assert_eq!(mock.complete(&ex("q"), &p).unwrap(), "B");
        assert!(matches!(
            mock.complete(&ex("q"), &p),
            Err(LlmError::Config(_))
        ));
    }

    #[test]
    fn empty_messages_rejected() {
        let mock = MockBackend::scripted(["A"]);
        let exchange = ChatExchange {
            system_prompt: "sys".into(),
            messages: vec![],
        };
        let err = mock
            .complete(&exchange, &GenerationParams::greedy())
            .unwrap_err();
        assert!(matches!(err, LlmError::Precondition(_)));
        // the cursor must not advance on a rejected call
        assert_eq!(
            mock.complete(&ex("q"), &GenerationParams::greedy())
                .unwrap(),
            "A"
        );
    }

    #[test]
    fn clone_rewinds_cursor() {
        let mock = MockBackend::scripted(["A", "B"]);
        mock.complete(&ex("q"), &GenerationParams::greedy())
            .unwrap();
        let fresh = mock.clone();
        assert_eq!(
            fresh
                .complete(&ex("q"), &GenerationParams::greedy())
                .unwrap(),
            "A"
        );
        assert_eq!(fresh.call_count(), 1);
    }

    #[test]
    fn embedding_shape_and_determinism() {
        let mock = MockBackend::scripted(Vec::<String>::new()).with_dim(8);
        let out = mock.embed(&["a".to_string()]).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].dim(), 8);
        let again = mock.embed(&["a".to_string()]).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn identical_texts_have_unit_cosine() {
        let mock = MockBackend::scripted(Vec::<String>::new());
        let v = mock
            .embed(&[
                "error timeout".to_string(),
                "error timeout".to_string(),
                "hello".to_string(),
            ])
            .unwrap();
        let same = cosine(&v[0].values, &v[1].values).unwrap();
        let other = cosine(&v[0].values, &v[2].values).unwrap();
        assert!((same - 1.0).abs() < 1e-12);
        assert!(other < 1.0);
    }

    #[test]
    fn empty_embed_input_rejected() {
        let mock = MockBackend::scripted(Vec::<String>::new());
        assert!(matches!(mock.embed(&[]), Err(LlmError::Precondition(_))));
    }
}
