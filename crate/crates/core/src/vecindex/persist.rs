//! Flat-file persistence: one tab-separated line per entry with columns
//! `namespace, id, text, vector, metadata`. The vector is base64 of
//! little-endian f64s; metadata is a JSON object.

use super::index::{EmbeddedEntry, IndexError, Namespace, VectorIndex};
use super::Embedder;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

fn encode_vector(v: &[f64]) -> String {
    let bytes: Vec<u8> = v.iter().flat_map(|x| x.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_vector(s: &str) -> Result<Vec<f64>, IndexError> {
    let bytes = STANDARD.decode(s).map_err(|e| IndexError::Persist(e.to_string()))?;
    if bytes.len() % 8 != 0 {
        return Err(IndexError::Persist("vector byte length is not a multiple of 8".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

impl VectorIndex {
    pub fn save<W: Write>(&self, out: W) -> Result<(), IndexError> {
        let persist = |e: csv::Error| IndexError::Persist(e.to_string());
        let mut wtr = csv::WriterBuilder::new()
            .delimiter(b'\t')
            .has_headers(false)
            .from_writer(out);
        for e in self.entries() {
            let meta = serde_json::to_string(&e.metadata).expect("string map serializes");
            wtr.write_record([
                e.namespace.as_str(),
                e.id.as_str(),
                e.surface_text.as_str(),
                encode_vector(&e.vector).as_str(),
                meta.as_str(),
            ])
            .map_err(persist)?;
        }
        wtr.flush().map_err(|e| IndexError::Persist(e.to_string()))
    }

    pub fn load<R: Read>(input: R, embedder: Arc<dyn Embedder>) -> Result<Self, IndexError> {
        let index = VectorIndex::new(embedder);
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .has_headers(false)
            .from_reader(input);
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| IndexError::Persist(e.to_string()))?;
            if rec.len() != 5 {
                return Err(IndexError::Persist(format!(
                    "line {}: expected 5 fields, got {}",
                    i + 1,
                    rec.len()
                )));
            }
            let metadata: BTreeMap<String, String> =
                serde_json::from_str(&rec[4]).map_err(|e| IndexError::Persist(format!("line {}: {e}", i + 1)))?;
            index.upsert(EmbeddedEntry {
                namespace: rec[0].parse::<Namespace>()?,
                id: rec[1].to_string(),
                surface_text: rec[2].to_string(),
                vector: decode_vector(&rec[3])?,
                metadata,
            })?;
        }
        Ok(index)
    }
}
