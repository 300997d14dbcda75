use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{GroupingError, Result};
use crate::http::{field, EndpointConfig, JsonClient, TransportError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Maps a batch of texts to vectors, one per text, in order.
pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> &str;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Embed `texts`, calling the provider once per distinct string so that
/// duplicates always share a vector.
pub fn embed_texts(texts: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<EmbeddingVector>> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
        return Err(GroupingError::InvalidInput(format!("text {i} is empty")));
    }
    let mut slot: HashMap<&str, usize> = HashMap::new();
    let mut unique: Vec<String> = Vec::new();
    for t in texts {
        slot.entry(t.as_str()).or_insert_with(|| {
            unique.push(t.clone());
            unique.len() - 1
        });
    }
    let vectors = provider.embed_batch(&unique)?;
    if vectors.len() != unique.len() {
        return Err(GroupingError::Dimension(format!(
            "provider returned {} vectors for {} texts",
            vectors.len(),
            unique.len()
        )));
    }
    let dim = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != dim {
            return Err(GroupingError::Dimension(format!("vector {i} has dim {}, expected {dim}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(GroupingError::InvalidVector { index: i, reason: "non-finite entry".into() });
        }
    }
    Ok(texts
        .iter()
        .map(|t| EmbeddingVector {
            values: vectors[slot[t.as_str()]].clone(),
            provider_id: provider.id().to_string(),
        })
        .collect())
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const HASH_SEED: u64 = 0x5eed_ade5_0000_0001;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Character-trigram feature hashing.
///
/// The text is lowercased and padded with one space on each side; each
/// trigram is hashed (seeded FNV-1a) into one of `dim` buckets and the
/// count vector is L2-normalized. Text with no trigrams maps to zero.
pub fn hashing_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 8, "hashing dimension must be at least 8");
    let padded: Vec<char> = std::iter::once(' ')
        .chain(text.to_lowercase().chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut values = vec![0.0; dim];
    let mut buf = String::new();
    for w in padded.windows(3) {
        buf.clear();
        buf.extend(w);
        values[(fnv1a(HASH_SEED, buf.as_bytes()) % dim as u64) as usize] += 1.0;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector { values, provider_id: HashingProvider::id_for(dim) }
}

/// Offline provider backed by [`hashing_embed`].
#[derive(Debug, Clone)]
pub struct HashingProvider {
    dim: usize,
    id: String,
}

impl HashingProvider {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(GroupingError::Dimension(format!("hashing dimension {dim} < 8")));
        }
        Ok(HashingProvider { dim, id: Self::id_for(dim) })
    }

    fn id_for(dim: usize) -> String {
        format!("hashing-trigram-{dim}")
    }
}

impl Default for HashingProvider {
    fn default() -> Self {
        HashingProvider::new(Self::DEFAULT_DIM).expect("valid default")
    }
}

impl EmbeddingProvider for HashingProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts.iter().map(|t| hashing_embed(t, self.dim).values).collect())
    }
}

/// `POST {"texts": [..]}` → `{"vectors": [[..], ..]}`, in batches.
#[derive(Debug, Clone)]
pub struct HttpEmbeddingProvider {
    id: String,
    client: JsonClient,
    batch_size: usize,
}

impl HttpEmbeddingProvider {
    pub fn new(id: impl Into<String>, config: EndpointConfig) -> Self {
        HttpEmbeddingProvider { id: id.into(), client: JsonClient::new(config), batch_size: 128 }
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }
}

fn malformed(message: &str) -> TransportError {
    TransportError { message: message.into(), retryable: false }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let response = self.client.post(&json!({ "texts": chunk }))?;
            let vectors = field(&response, "vectors")?
                .as_array()
                .ok_or_else(|| malformed("`vectors` is not an array"))?;
            for v in vectors {
                let row = v
                    .as_array()
                    .ok_or_else(|| malformed("vector is not an array"))?
                    .iter()
                    .map(Value::as_f64)
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| malformed("vector entry is not a number"))?;
                out.push(row);
            }
        }
        Ok(out)
    }
}
