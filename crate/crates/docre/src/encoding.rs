//! Input sequence assembly: one flat id sequence per entity pair, with the
//! document as one segment and each entity as a self-contained trailing
//! segment.
//!
//! Layout: `[CLS] doc … [SEP] head … [SEP] tail … [SEP]`, then padding up to
//! `max_len`. Segment 0 covers `[CLS]` and the document tokens; segment 1
//! starts at the first `[SEP]` and covers everything after it. Only document
//! tokens are ever truncated.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PairInstance;
use crate::error::{DocreError, Result};
use crate::tokenizer::{self, Vocab, CLS_ID, PAD_ID, SEP_ID};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub token_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    pub segment_ids: Vec<u8>,
    pub attention_mask: Vec<u8>,
    pub relation_id: usize,
}

impl EncodedInput {
    /// Number of real (unpadded) positions.
    pub fn real_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Assembles the id sequence for one pair instance. The document is
/// right-truncated to fit `max_len`; entity tokens are never truncated.
pub fn assemble(instance: &PairInstance, vocab: &Vocab, max_len: usize) -> Result<EncodedInput> {
    let m1 = instance.head_tokens.len();
    let m2 = instance.tail_tokens.len();
    if max_len < m1 + m2 + 5 {
        return Err(DocreError::Config(format!(
            "max_len {max_len} too small for entities ({m1}+{m2}) plus specials and one document token"
        )));
    }
    let doc_budget = max_len - (m1 + m2 + 4);
    let doc_ids = tokenizer::encode(&instance.doc_tokens, vocab);
    let n_trunc = doc_ids.len().min(doc_budget);

    let real_len = n_trunc + m1 + m2 + 4;
    let mut token_ids = Vec::with_capacity(max_len);
    token_ids.push(CLS_ID);
    token_ids.extend_from_slice(&doc_ids[..n_trunc]);
    token_ids.push(SEP_ID);
    token_ids.extend(tokenizer::encode(&instance.head_tokens, vocab));
    token_ids.push(SEP_ID);
    token_ids.extend(tokenizer::encode(&instance.tail_tokens, vocab));
    token_ids.push(SEP_ID);
    debug_assert_eq!(token_ids.len(), real_len);
    token_ids.resize(max_len, PAD_ID);

    // Segment 0 ends with the last document token; the first [SEP] already
    // belongs to segment 1. Padding keeps segment 1 but is masked out.
    let mut segment_ids = vec![1u8; max_len];
    for s in segment_ids.iter_mut().take(n_trunc + 1) {
        *s = 0;
    }
    let mut attention_mask = vec![0u8; max_len];
    for m in attention_mask.iter_mut().take(real_len) {
        *m = 1;
    }
    Ok(EncodedInput {
        token_ids,
        position_ids: (0..max_len).collect(),
        segment_ids,
        attention_mask,
        relation_id: instance.relation_id,
    })
}

/// Writes encoded instances as line-delimited JSON.
pub fn write_cache(path: &Path, inputs: &[EncodedInput]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for input in inputs {
        serde_json::to_writer(&mut w, input)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a line-delimited cache file back.
pub fn read_cache(path: &Path) -> Result<Vec<EncodedInput>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DocreError::Parse {
            record: i,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
