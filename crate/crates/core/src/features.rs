//! Node feature vectors: TSV-backed embedding stores, a deterministic
//! hash-based test embedder, and binding features to a graph's node order.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Warning};
use crate::graph::ConversationGraph;
use crate::nn::{DetRng, Mat};
use crate::thread::ConversationThread;

/// Comment-id keyed embedding vectors of a fixed dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    map: HashMap<String, Vec<f64>>,
    pub dim: usize,
    pub source: String,
}

/// Node-aligned feature rows for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub data: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    Error,
    Zero,
}

impl EmbeddingStore {
    pub fn new(dim: usize, source: impl Into<String>) -> Self {
        EmbeddingStore {
            map: HashMap::new(),
            dim,
            source: source.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.map.get(id).map(|v| v.as_slice())
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding of length {} in a dim-{} store",
                vector.len(),
                self.dim
            )));
        }
        self.map.insert(id.into(), vector);
        Ok(())
    }
}

/// Load an embedding TSV: `id<TAB>v0<TAB>...<TAB>v{d-1}` per row, optional
/// `#dim=<d>` header. Duplicate ids keep the last row and warn.
pub fn load_embeddings(path: &Path) -> Result<(EmbeddingStore, Vec<Warning>)> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut warnings = Vec::new();
    let mut dim: Option<usize> = None;
    let mut map: HashMap<String, Vec<f64>> = HashMap::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#dim=") {
            let d: usize = rest.trim().parse().map_err(|_| Error::Format {
                line: lineno,
                message: format!("bad dimension header {:?}", line),
            })?;
            if d == 0 {
                return Err(Error::Format {
                    line: lineno,
                    message: "dimension header must be positive".into(),
                });
            }
            if let Some(existing) = dim {
                if existing != d {
                    return Err(Error::Format {
                        line: lineno,
                        message: format!("dimension header {} conflicts with {}", d, existing),
                    });
                }
            }
            dim = Some(d);
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let id = parts.next().unwrap_or("");
        if id.is_empty() {
            return Err(Error::Format {
                line: lineno,
                message: "empty comment id".into(),
            });
        }
        let mut vector = Vec::new();
        for part in parts {
            let v: f64 = part.parse().map_err(|_| Error::Format {
                line: lineno,
                message: format!("bad float {:?}", part),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    line: lineno,
                    message: format!("non-finite value {}", v),
                });
            }
            vector.push(v);
        }
        if vector.is_empty() {
            return Err(Error::Format {
                line: lineno,
                message: "row has no values".into(),
            });
        }
        match dim {
            None => dim = Some(vector.len()),
            Some(d) if d != vector.len() => {
                return Err(Error::Format {
                    line: lineno,
                    message: format!("row has {} values, expected {}", vector.len(), d),
                });
            }
            _ => {}
        }
        if map.insert(id.to_string(), vector).is_some() {
            warnings.push(Warning::new(format!(
                "duplicate embedding for {:?}, keeping the later row (line {})",
                id, lineno
            )));
        }
    }

    let dim = dim.ok_or_else(|| Error::Format {
        line: 0,
        message: "embedding file has no rows".into(),
    })?;
    Ok((
        EmbeddingStore {
            map,
            dim,
            source: path.display().to_string(),
        },
        warnings,
    ))
}

/// Write a store in canonical form: `#dim` header, ids sorted, floats in
/// Rust's shortest round-trip formatting. `save(load(f)) == f` for files
/// already in this form.
pub fn save_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "#dim={}", store.dim)?;
    let mut ids: Vec<&String> = store.map.keys().collect();
    ids.sort();
    for id in ids {
        let row = &store.map[id];
        let values: Vec<String> = row.iter().map(|v| format!("{}", v)).collect();
        writeln!(file, "{}\t{}", id, values.join("\t"))?;
    }
    Ok(())
}

/// Deterministic unit-norm embedding of a text. Empty (or absent) text maps
/// to the zero vector. The (seed, text) pair fully determines the output.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::Argument("hash_embed: dimension must be positive".into()));
    }
    if text.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(text.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = DetRng::from_seed(digest);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return Ok(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

/// Build a hash-embedding store covering every comment of every thread.
/// Comments without text embed to zero.
pub fn build_hash_store(
    threads: &[ConversationThread],
    dim: usize,
    seed: u64,
) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(dim, "hash");
    for thread in threads {
        for c in thread.comments() {
            let v = match &c.text {
                Some(text) => hash_embed(text, dim, seed)?,
                None => vec![0.0; dim],
            };
            store.insert(c.id.clone(), v)?;
        }
    }
    Ok(store)
}

/// Bind store vectors to a graph's node order. Row i corresponds to
/// `graph.nodes[i]`; missing ids follow the policy.
pub fn bind_features(
    graph: &ConversationGraph,
    store: &EmbeddingStore,
    missing: MissingPolicy,
) -> Result<(FeatureMatrix, Vec<Warning>)> {
    let mut warnings = Vec::new();
    let mut data = Mat::zeros(graph.nodes.len(), store.dim);
    for (i, id) in graph.nodes.iter().enumerate() {
        match store.get(id) {
            Some(row) => data.row_mut(i).copy_from_slice(row),
            None => match missing {
                MissingPolicy::Error => return Err(Error::Lookup(id.clone())),
                MissingPolicy::Zero => {
                    warnings.push(Warning::new(format!(
                        "no embedding for {:?}, using zeros",
                        id
                    )));
                }
            },
        }
    }
    Ok((
        FeatureMatrix {
            ids: graph.nodes.clone(),
            data,
        },
        warnings,
    ))
}
