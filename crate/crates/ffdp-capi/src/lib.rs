//! C ABI over the ffdp parser: opaque model handles, status codes and
//! a per-thread last-error message. The generated header lives in
//! `include/ffdp.h`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use ffdp::conllu::{parse_conllu, write_conllu, DependencyTree};
use ffdp::eval::score;
use ffdp::experiments::{cmd_train, load_model_dir, ExperimentSpec};
use ffdp::features::{FeatureTemplate, Vocabulary};
use ffdp::nn::ModelParams;
use ffdp::trainer::Parser;
use ffdp::transition::TransitionSystem;

/// Status code returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfdpStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an out-of-range argument.
    InvalidArgument = 1,
    /// File could not be read or written.
    Io = 2,
    /// Input was not valid CoNLL-U or a valid model file.
    Format = 3,
    /// Model/vocabulary mismatch or another internal failure.
    Internal = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn fail(status: FfdpStatus, msg: &str) -> FfdpStatus {
    set_error(msg);
    status
}

/// Message describing the most recent error on the calling thread.
/// Valid until the thread's next failing ffdp call.
#[no_mangle]
pub extern "C" fn ffdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// A trained model bound to its vocabulary. Opaque.
pub struct FfdpModel {
    params: ModelParams,
    vocab: Vocabulary,
}

unsafe fn cstr<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, FfdpStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(FfdpStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        FfdpStatus::InvalidArgument
    })
}

fn parse_system(s: &str) -> Result<TransitionSystem, FfdpStatus> {
    match s {
        "arc-standard" => Ok(TransitionSystem::ArcStandard),
        "swap" => Ok(TransitionSystem::ArcStandardSwap),
        _ => {
            set_error(&format!("unknown system {s:?}"));
            Err(FfdpStatus::InvalidArgument)
        }
    }
}

fn parse_template(s: &str) -> Result<FeatureTemplate, FfdpStatus> {
    match s {
        "standard" => Ok(FeatureTemplate::Standard),
        "no-gd" => Ok(FeatureTemplate::NoGd),
        "no-gd-d" => Ok(FeatureTemplate::NoGdD),
        _ => {
            set_error(&format!("unknown template {s:?}"));
            Err(FfdpStatus::InvalidArgument)
        }
    }
}

/// Trains a model and writes model.bin/vocab.txt plus run metadata
/// into `out_dir`. `system` is "arc-standard" or "swap"; `template` is
/// "standard", "no-gd" or "no-gd-d"; `reduce` is 0..50 in steps of 10.
///
/// # Safety
/// String arguments must be null-terminated and valid for the call.
#[no_mangle]
pub unsafe extern "C" fn ffdp_train(
    train_path: *const c_char,
    system: *const c_char,
    template: *const c_char,
    reduce: u8,
    epochs: u32,
    seed: u64,
    out_dir: *const c_char,
) -> FfdpStatus {
    let inner = || -> Result<(), FfdpStatus> {
        let train_path = cstr(train_path, "train_path")?;
        let system = parse_system(cstr(system, "system")?)?;
        let template = parse_template(cstr(template, "template")?)?;
        let out_dir = cstr(out_dir, "out_dir")?;
        let mut spec =
            ExperimentSpec::new(train_path.into(), system, template, reduce, out_dir.into())
                .map_err(|e| fail(FfdpStatus::InvalidArgument, &e.to_string()))?;
        spec.config.epochs = epochs as usize;
        spec.config.seed = seed;
        cmd_train(&spec).map_err(|e| fail(FfdpStatus::Internal, &e.to_string()))?;
        Ok(())
    };
    match inner() {
        Ok(()) => FfdpStatus::Ok,
        Err(status) => status,
    }
}

/// Loads a model directory written by `ffdp_train`. Returns null on
/// failure; see `ffdp_last_error`. Free with `ffdp_model_free`.
///
/// # Safety
/// `dir` must be a null-terminated string valid for the call.
#[no_mangle]
pub unsafe extern "C" fn ffdp_model_load(dir: *const c_char) -> *mut FfdpModel {
    let dir = match cstr(dir, "dir") {
        Ok(d) => d,
        Err(_) => return ptr::null_mut(),
    };
    match load_model_dir(Path::new(dir)) {
        Ok((params, vocab)) => Box::into_raw(Box::new(FfdpModel { params, vocab })),
        Err(e) => {
            set_error(&e.to_string());
            ptr::null_mut()
        }
    }
}

/// Releases a model handle. Null is a no-op.
///
/// # Safety
/// `model` must have come from `ffdp_model_load` and not been freed.
#[no_mangle]
pub unsafe extern "C" fn ffdp_model_free(model: *mut FfdpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Input dimensionality of the model's first layer.
///
/// # Safety
/// `model` must be a live handle from `ffdp_model_load`.
#[no_mangle]
pub unsafe extern "C" fn ffdp_model_input_dim(model: *const FfdpModel) -> u32 {
    if model.is_null() {
        set_error("model is null");
        return 0;
    }
    (*model).params.input_dim() as u32
}

/// Parses CoNLL-U text with the model and stores a newly allocated
/// CoNLL-U string with predicted HEAD/DEPREL in `*out`. Free the
/// result with `ffdp_string_free`.
///
/// # Safety
/// `model` must be a live handle; `conllu` must be null-terminated;
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn ffdp_parse(
    model: *const FfdpModel,
    conllu: *const c_char,
    out: *mut *mut c_char,
) -> FfdpStatus {
    if out.is_null() {
        return fail(FfdpStatus::InvalidArgument, "out is null");
    }
    *out = ptr::null_mut();
    if model.is_null() {
        return fail(FfdpStatus::InvalidArgument, "model is null");
    }
    let text = match cstr(conllu, "conllu") {
        Ok(t) => t,
        Err(status) => return status,
    };
    let model = &*model;
    let sentences = match parse_conllu(text) {
        Ok(s) => s,
        Err(e) => return fail(FfdpStatus::Format, &e.to_string()),
    };
    let parser = match Parser::new(&model.params, &model.vocab) {
        Ok(p) => p,
        Err(e) => return fail(FfdpStatus::Internal, &e.to_string()),
    };
    let trees: Vec<DependencyTree> = sentences.iter().map(|s| parser.parse(s)).collect();
    let rendered = match write_conllu(&sentences, Some(&trees)) {
        Ok(r) => r,
        Err(e) => return fail(FfdpStatus::Internal, &e.to_string()),
    };
    match CString::new(rendered) {
        Ok(c) => {
            *out = c.into_raw();
            FfdpStatus::Ok
        }
        Err(_) => fail(FfdpStatus::Internal, "output contained a NUL byte"),
    }
}

/// Frees a string returned by this library. Null is a no-op.
///
/// # Safety
/// `s` must have been returned by an ffdp function and not been freed.
#[no_mangle]
pub unsafe extern "C" fn ffdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Scores predicted CoNLL-U against gold CoNLL-U (all tokens count)
/// and writes the labeled and unlabeled attachment scores in percent.
///
/// # Safety
/// The strings must be null-terminated; `las`/`uas` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ffdp_score(
    gold: *const c_char,
    predicted: *const c_char,
    las: *mut f64,
    uas: *mut f64,
) -> FfdpStatus {
    if las.is_null() || uas.is_null() {
        return fail(FfdpStatus::InvalidArgument, "las/uas output is null");
    }
    let inner = || -> Result<(f64, f64), FfdpStatus> {
        let gold = parse_conllu(cstr(gold, "gold")?)
            .map_err(|e| fail(FfdpStatus::Format, &e.to_string()))?;
        let predicted = parse_conllu(cstr(predicted, "predicted")?)
            .map_err(|e| fail(FfdpStatus::Format, &e.to_string()))?;
        let trees: Vec<DependencyTree> = predicted.iter().map(|s| s.gold_tree()).collect();
        let report =
            score(&gold, &trees).map_err(|e| fail(FfdpStatus::InvalidArgument, &e.to_string()))?;
        Ok((report.las, report.uas))
    };
    match inner() {
        Ok((l, u)) => {
            *las = l;
            *uas = u;
            FfdpStatus::Ok
        }
        Err(status) => status,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ffi::CString;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn treebank_text(count: usize, seed: u64) -> String {
        let sents = ffdp::synth::projective_treebank(count, seed);
        write_conllu(&sents, None).unwrap()
    }

    #[test]
    fn train_load_parse_score_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let train_path = tmp.path().join("train.conllu");
        let text = treebank_text(30, 9);
        std::fs::write(&train_path, &text).unwrap();
        let out_dir = tmp.path().join("model");

        let status = unsafe {
            ffdp_train(
                c(train_path.to_str().unwrap()).as_ptr(),
                c("arc-standard").as_ptr(),
                c("no-gd-d").as_ptr(),
                10,
                2,
                1,
                c(out_dir.to_str().unwrap()).as_ptr(),
            )
        };
        assert_eq!(status, FfdpStatus::Ok);

        let model = unsafe { ffdp_model_load(c(out_dir.to_str().unwrap()).as_ptr()) };
        assert!(!model.is_null());
        assert_eq!(unsafe { ffdp_model_input_dim(model) }, 486);

        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { ffdp_parse(model, c(&text).as_ptr(), &mut out) };
        assert_eq!(status, FfdpStatus::Ok);
        assert!(!out.is_null());
        let parsed = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_owned();
        assert_eq!(parsed.matches("\n\n").count(), 30);

        let mut las = -1.0;
        let mut uas = -1.0;
        let status =
            unsafe { ffdp_score(c(&text).as_ptr(), c(&parsed).as_ptr(), &mut las, &mut uas) };
        assert_eq!(status, FfdpStatus::Ok);
        assert!((0.0..=100.0).contains(&las));
        assert!(uas >= las);

        unsafe {
            ffdp_string_free(out);
            ffdp_model_free(model);
        }
    }

    #[test]
    fn errors_set_status_and_message() {
        let model = unsafe { ffdp_model_load(c("/nonexistent-ffdp-dir").as_ptr()) };
        assert!(model.is_null());
        let msg = unsafe { CStr::from_ptr(ffdp_last_error()) }
            .to_str()
            .unwrap();
        assert!(!msg.is_empty());

        let status = unsafe {
            ffdp_train(
                ptr::null(),
                c("arc-standard").as_ptr(),
                c("standard").as_ptr(),
                0,
                1,
                1,
                c("/tmp/x").as_ptr(),
            )
        };
        assert_eq!(status, FfdpStatus::InvalidArgument);

        let mut las = 0.0;
        let mut uas = 0.0;
        let status = unsafe {
            ffdp_score(
                c("not conllu").as_ptr(),
                c("also not").as_ptr(),
                &mut las,
                &mut uas,
            )
        };
        assert_eq!(status, FfdpStatus::Format);

        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { ffdp_parse(ptr::null(), c("x").as_ptr(), &mut out) };
        assert_eq!(status, FfdpStatus::InvalidArgument);
        assert!(out.is_null());
    }

    #[test]
    fn header_is_generated() {
        let header = std::fs::read_to_string(
            std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/ffdp.h"),
        )
        .unwrap();
        assert!(header.contains("FfdpStatus"));
        assert!(header.contains("ffdp_model_load"));
        assert!(header.contains("struct FfdpModel"));
    }
}
