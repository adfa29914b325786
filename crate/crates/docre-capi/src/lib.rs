//! C ABI over the docre predictor: load a trained checkpoint plus its vocab
//! and schema behind an opaque handle, classify (text, head, tail) triples,
//! and query the last error message.
//!
//! Every function is safe to call from any thread as long as a handle is not
//! used concurrently. Status codes mirror the CLI exit codes: 0 success,
//! 1 invalid argument (null pointer, bad UTF-8, short buffer), 2 input or
//! configuration error, 3 checkpoint error, 4 numeric error.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::path::Path;

use libc::{c_char, c_double, c_int, size_t};

use docre::corpus::{PairInstance, RelationSchema};
use docre::error::DocreError;
use docre::model::{self, ModelConfig, Parameters};
use docre::tokenizer::{self, Vocab};
use docre::{checkpoint, encoding};

pub const DOCRE_OK: c_int = 0;
pub const DOCRE_ERR_ARGUMENT: c_int = 1;
pub const DOCRE_ERR_INPUT: c_int = 2;
pub const DOCRE_ERR_CHECKPOINT: c_int = 3;
pub const DOCRE_ERR_NUMERIC: c_int = 4;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn code_of(err: &DocreError) -> c_int {
    match err {
        DocreError::Checkpoint(_) => DOCRE_ERR_CHECKPOINT,
        DocreError::Numeric(_) => DOCRE_ERR_NUMERIC,
        _ => DOCRE_ERR_INPUT,
    }
}

/// Opaque predictor: a loaded checkpoint with its vocabulary and schema.
pub struct DocrePredictor {
    config: ModelConfig,
    params: Parameters,
    vocab: Vocab,
    schema: RelationSchema,
}

unsafe fn path_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a Path, c_int> {
    str_arg(ptr, name).map(Path::new)
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        set_error(&format!("{name} is null"));
        return Err(DOCRE_ERR_ARGUMENT);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{name} is not valid UTF-8"));
        DOCRE_ERR_ARGUMENT
    })
}

fn load_predictor(
    checkpoint_path: &Path,
    vocab_path: &Path,
    schema_path: &Path,
) -> Result<DocrePredictor, DocreError> {
    let (config, params) = checkpoint::load(checkpoint_path)?;
    let vocab = Vocab::load(vocab_path)?;
    let schema = RelationSchema::load(schema_path)?;
    if config.vocab_size != vocab.len() {
        return Err(DocreError::Checkpoint(format!(
            "checkpoint vocab_size {} does not match vocab file size {}",
            config.vocab_size,
            vocab.len()
        )));
    }
    if config.n_relations != schema.len() {
        return Err(DocreError::Checkpoint(format!(
            "checkpoint n_relations {} does not match schema size {}",
            config.n_relations,
            schema.len()
        )));
    }
    Ok(DocrePredictor {
        config,
        params,
        vocab,
        schema,
    })
}

/// Loads a predictor from a checkpoint, vocabulary file, and schema file.
/// On success writes a new handle to `out` and returns 0; the handle must be
/// released with `docre_predictor_free`.
///
/// # Safety
/// `checkpoint_path`, `vocab_path`, and `schema_path` must be valid
/// NUL-terminated strings; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn docre_predictor_load(
    checkpoint_path: *const c_char,
    vocab_path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut DocrePredictor,
) -> c_int {
    if out.is_null() {
        set_error("out is null");
        return DOCRE_ERR_ARGUMENT;
    }
    let ckpt = match path_arg(checkpoint_path, "checkpoint_path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    let vocab = match path_arg(vocab_path, "vocab_path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    let schema = match path_arg(schema_path, "schema_path") {
        Ok(p) => p,
        Err(c) => return c,
    };
    match load_predictor(ckpt, vocab, schema) {
        Ok(predictor) => {
            *out = Box::into_raw(Box::new(predictor));
            DOCRE_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            code_of(&e)
        }
    }
}

/// Releases a handle returned by `docre_predictor_load`. Null is a no-op.
///
/// # Safety
/// `predictor` must be null or a handle that has not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn docre_predictor_free(predictor: *mut DocrePredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// Number of relation classes the predictor distinguishes (including the
/// explicit no-relation class at id 0).
///
/// # Safety
/// `predictor` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn docre_predictor_n_relations(predictor: *const DocrePredictor) -> size_t {
    if predictor.is_null() {
        return 0;
    }
    (*predictor).schema.len()
}

/// Classifies the relation from `head` to `tail` given the document `text`.
/// Writes the predicted relation id to `out_relation` and, if `out_probs` is
/// non-null, the full probability distribution to `out_probs[0..n_relations]`
/// (`probs_len` must then be at least `n_relations`).
///
/// # Safety
/// `predictor` must be a live handle; string arguments must be valid
/// NUL-terminated strings; `out_relation` must be a valid pointer;
/// `out_probs` must be null or point to at least `probs_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn docre_predict(
    predictor: *const DocrePredictor,
    text: *const c_char,
    head: *const c_char,
    tail: *const c_char,
    out_relation: *mut size_t,
    out_probs: *mut c_double,
    probs_len: size_t,
) -> c_int {
    if predictor.is_null() || out_relation.is_null() {
        set_error("predictor or out_relation is null");
        return DOCRE_ERR_ARGUMENT;
    }
    let p = &*predictor;
    let (text, head, tail) = match (
        str_arg(text, "text"),
        str_arg(head, "head"),
        str_arg(tail, "tail"),
    ) {
        (Ok(t), Ok(h), Ok(l)) => (t, h, l),
        (Err(c), _, _) | (_, Err(c), _) | (_, _, Err(c)) => return c,
    };
    if !out_probs.is_null() && probs_len < p.schema.len() {
        set_error(&format!(
            "probs buffer holds {probs_len} values but {} are needed",
            p.schema.len()
        ));
        return DOCRE_ERR_ARGUMENT;
    }
    let instance = PairInstance {
        doc_id: "capi".into(),
        doc_tokens: tokenizer::tokenize_text(text),
        head_tokens: tokenizer::tokenize_text(head),
        tail_tokens: tokenizer::tokenize_text(tail),
        relation_id: p.schema.na_id,
    };
    if instance.doc_tokens.is_empty() || instance.head_tokens.is_empty() || instance.tail_tokens.is_empty() {
        set_error("text, head, and tail must be non-empty");
        return DOCRE_ERR_INPUT;
    }
    let result = encoding::assemble(&instance, &p.vocab, p.config.max_len)
        .and_then(|enc| model::forward_eval(&enc, &p.params, &p.config))
        .and_then(|logits| model::predict(&logits));
    match result {
        Ok((id, probs)) => {
            *out_relation = id;
            if !out_probs.is_null() {
                std::ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, probs.len());
            }
            DOCRE_OK
        }
        Err(e) => {
            set_error(&e.to_string());
            code_of(&e)
        }
    }
}

/// Writes the label of relation id `relation` as a NUL-terminated string into
/// `buf`. Returns 0, or 1 if the id is out of range or the buffer is too
/// small.
///
/// # Safety
/// `predictor` must be a live handle; `buf` must point to at least `buf_len`
/// bytes.
#[no_mangle]
pub unsafe extern "C" fn docre_relation_label(
    predictor: *const DocrePredictor,
    relation: size_t,
    buf: *mut c_char,
    buf_len: size_t,
) -> c_int {
    if predictor.is_null() || buf.is_null() {
        set_error("predictor or buf is null");
        return DOCRE_ERR_ARGUMENT;
    }
    let schema = &(*predictor).schema;
    let Some(label) = schema.id_to_label.get(relation) else {
        set_error(&format!("relation id {relation} out of range"));
        return DOCRE_ERR_ARGUMENT;
    };
    write_str(label, buf, buf_len)
}

/// Copies the message of the most recent error on this thread into `buf` as a
/// NUL-terminated string. Returns 0, or 1 if the buffer is too small.
///
/// # Safety
/// `buf` must be null or point to at least `buf_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn docre_last_error(buf: *mut c_char, buf_len: size_t) -> c_int {
    if buf.is_null() {
        return DOCRE_ERR_ARGUMENT;
    }
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let msg = msg.to_str().unwrap_or_default().to_string();
        write_str(&msg, buf, buf_len)
    })
}

unsafe fn write_str(s: &str, buf: *mut c_char, buf_len: size_t) -> c_int {
    let bytes = s.as_bytes();
    if buf_len < bytes.len() + 1 {
        set_error(&format!("buffer holds {buf_len} bytes but {} are needed", bytes.len() + 1));
        return DOCRE_ERR_ARGUMENT;
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, bytes.len());
    *buf.add(bytes.len()) = 0;
    DOCRE_OK
}
