//! C ABI over the dslbench kernels: pass@k, the chi-square test, snippet
//! extraction, well-formedness checking and verdict parsing.
//!
//! Conventions: every fallible function returns a `DslbStatus` code and
//! writes its result through out-pointers. Strings returned through
//! `char **` are NUL-terminated, owned by the caller, and must be released
//! with `dslb_string_free`. Well-formedness results are opaque handles
//! released with `dslb_wf_free`. All functions catch panics and report
//! them as a panic status instead of unwinding across the boundary.

use dslbench::codeproc;
use dslbench::judging;
use dslbench::metrics;
use dslbench::validation::{self, WfResult};
use dslbench::TargetLanguage;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DslbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    DomainError = 3,
    NoCodeFound = 4,
    InvalidLanguage = 5,
    DegenerateTable = 6,
    NoVerdictLine = 7,
    InternalPanic = 8,
}

/// Target languages accepted by the extraction and validation entry points.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum DslbLanguage {
    Ocl = 0,
    Alloy = 1,
    Python = 2,
}

fn language_from(raw: i32) -> Option<TargetLanguage> {
    match raw {
        0 => Some(TargetLanguage::Ocl),
        1 => Some(TargetLanguage::Alloy),
        2 => Some(TargetLanguage::Python),
        _ => None,
    }
}

/// Chi-square test output.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct DslbChiSquare {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: u32,
    pub significant: u8,
}

/// Opaque well-formedness result handle.
pub struct DslbWfResult {
    inner: WfResult,
}

const VERSION: &str = concat!("dslbench ", env!("CARGO_PKG_VERSION"), "\0");

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn dslb_version() -> *const c_char {
    VERSION.as_ptr() as *const c_char
}

fn guarded<F: FnOnce() -> DslbStatus>(f: F) -> DslbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => DslbStatus::InternalPanic,
    }
}

unsafe fn read_utf8<'a>(raw: *const c_char) -> Result<&'a str, DslbStatus> {
    if raw.is_null() {
        return Err(DslbStatus::NullArgument);
    }
    CStr::from_ptr(raw).to_str().map_err(|_| DslbStatus::InvalidUtf8)
}

fn give_string(text: &str, out: *mut *mut c_char) -> DslbStatus {
    match CString::new(text) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            DslbStatus::Ok
        }
        Err(_) => DslbStatus::InvalidUtf8,
    }
}

/// Unbiased pass@k estimator; requires 1 <= k <= n and c <= n.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dslb_pass_at_k(n: u32, c: u32, k: u32, out: *mut f64) -> DslbStatus {
    guarded(|| {
        if out.is_null() {
            return DslbStatus::NullArgument;
        }
        match metrics::pass_at_k(n as usize, c as usize, k as usize) {
            Ok(value) => {
                *out = value;
                DslbStatus::Ok
            }
            Err(_) => DslbStatus::DomainError,
        }
    })
}

/// Pearson chi-square independence test over a row-major `rows` x `cols`
/// table of observed counts.
///
/// # Safety
/// `observed` must point to `rows * cols` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dslb_chi_square(
    observed: *const f64,
    rows: usize,
    cols: usize,
    alpha: f64,
    out: *mut DslbChiSquare,
) -> DslbStatus {
    guarded(|| {
        if observed.is_null() || out.is_null() {
            return DslbStatus::NullArgument;
        }
        if rows == 0 || cols == 0 {
            return DslbStatus::DegenerateTable;
        }
        let flat = std::slice::from_raw_parts(observed, rows * cols);
        let table: Vec<Vec<f64>> = flat.chunks(cols).map(|row| row.to_vec()).collect();
        match metrics::chi_square_test(&table, alpha) {
            Ok(result) => {
                *out = DslbChiSquare {
                    statistic: result.statistic,
                    p_value: result.p_value,
                    dof: result.dof as u32,
                    significant: result.significant as u8,
                };
                DslbStatus::Ok
            }
            Err(metrics::MetricsError::DegenerateTable(_)) => DslbStatus::DegenerateTable,
            Err(_) => DslbStatus::DomainError,
        }
    })
}

/// Extract the code snippet from a raw completion. On success `*out` holds
/// a newly allocated string; free it with `dslb_string_free`.
///
/// # Safety
/// `raw` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dslb_extract_code(
    raw: *const c_char,
    language: i32,
    out: *mut *mut c_char,
) -> DslbStatus {
    guarded(|| {
        if out.is_null() {
            return DslbStatus::NullArgument;
        }
        let text = match read_utf8(raw) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let Some(language) = language_from(language) else {
            return DslbStatus::InvalidLanguage;
        };
        match codeproc::extract_code(text, language) {
            Ok(snippet) => give_string(&snippet, out),
            Err(_) => DslbStatus::NoCodeFound,
        }
    })
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dslb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Run the built-in well-formedness validator; `*out` receives an opaque
/// handle released with `dslb_wf_free`.
///
/// # Safety
/// `code` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dslb_check_wf(
    code: *const c_char,
    language: i32,
    out: *mut *mut DslbWfResult,
) -> DslbStatus {
    guarded(|| {
        if out.is_null() {
            return DslbStatus::NullArgument;
        }
        let text = match read_utf8(code) {
            Ok(text) => text,
            Err(status) => return status,
        };
        let Some(language) = language_from(language) else {
            return DslbStatus::InvalidLanguage;
        };
        let result = validation::check_builtin(text, language);
        *out = Box::into_raw(Box::new(DslbWfResult { inner: result }));
        DslbStatus::Ok
    })
}

/// 1 when the checked snippet was well-formed, 0 otherwise (or on NULL).
///
/// # Safety
/// `result` must be a live handle from `dslb_check_wf`.
#[no_mangle]
pub unsafe extern "C" fn dslb_wf_passed(result: *const DslbWfResult) -> i32 {
    if result.is_null() {
        return 0;
    }
    (*result).inner.passed as i32
}

/// Number of diagnostics carried by a failed result.
///
/// # Safety
/// `result` must be a live handle from `dslb_check_wf`.
#[no_mangle]
pub unsafe extern "C" fn dslb_wf_diagnostic_count(result: *const DslbWfResult) -> usize {
    if result.is_null() {
        return 0;
    }
    (*result).inner.diagnostics.len()
}

/// Copy the message of diagnostic `index` into a new string; free it with
/// `dslb_string_free`.
///
/// # Safety
/// `result` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dslb_wf_diagnostic_message(
    result: *const DslbWfResult,
    index: usize,
    out: *mut *mut c_char,
) -> DslbStatus {
    guarded(|| {
        if result.is_null() || out.is_null() {
            return DslbStatus::NullArgument;
        }
        let diagnostics = &(*result).inner.diagnostics;
        match diagnostics.get(index) {
            Some(diagnostic) => give_string(&diagnostic.message, out),
            None => DslbStatus::DomainError,
        }
    })
}

/// 1-based line of diagnostic `index`, or -1 when it carries none.
///
/// # Safety
/// `result` must be a live handle from `dslb_check_wf`.
#[no_mangle]
pub unsafe extern "C" fn dslb_wf_diagnostic_line(
    result: *const DslbWfResult,
    index: usize,
) -> i64 {
    if result.is_null() {
        return -1;
    }
    let diagnostics = &(*result).inner.diagnostics;
    diagnostics
        .get(index)
        .and_then(|d| d.line)
        .map(|line| line as i64)
        .unwrap_or(-1)
}

/// Release a well-formedness handle.
///
/// # Safety
/// `result` must come from `dslb_check_wf` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dslb_wf_free(result: *mut DslbWfResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Parse a judge reply: `*out_correct` gets 1/0 and `*out_feedback` the
/// remainder after the verdict line (free with `dslb_string_free`).
///
/// # Safety
/// `raw` must be a NUL-terminated string; both out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn dslb_parse_verdict(
    raw: *const c_char,
    out_correct: *mut u8,
    out_feedback: *mut *mut c_char,
) -> DslbStatus {
    guarded(|| {
        if out_correct.is_null() || out_feedback.is_null() {
            return DslbStatus::NullArgument;
        }
        let text = match read_utf8(raw) {
            Ok(text) => text,
            Err(status) => return status,
        };
        match judging::parse_verdict(text) {
            Ok((correct, feedback)) => {
                *out_correct = correct as u8;
                give_string(&feedback, out_feedback)
            }
            Err(_) => DslbStatus::NoVerdictLine,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    unsafe fn take_string(ptr: *mut c_char) -> String {
        let text = CStr::from_ptr(ptr).to_str().unwrap().to_string();
        dslb_string_free(ptr);
        text
    }

    #[test]
    fn version_is_static() {
        let raw = dslb_version();
        let text = unsafe { CStr::from_ptr(raw) }.to_str().unwrap();
        assert!(text.starts_with("dslbench "));
    }

    #[test]
    fn pass_at_k_through_the_abi() {
        let mut out = 0.0f64;
        let status = unsafe { dslb_pass_at_k(5, 2, 3, &mut out) };
        assert_eq!(status, DslbStatus::Ok);
        assert!((out - 0.9).abs() < 1e-12);

        let status = unsafe { dslb_pass_at_k(3, 1, 0, &mut out) };
        assert_eq!(status, DslbStatus::DomainError);

        let status = unsafe { dslb_pass_at_k(3, 1, 1, ptr::null_mut()) };
        assert_eq!(status, DslbStatus::NullArgument);
    }

    #[test]
    fn chi_square_through_the_abi() {
        let observed = [12.0, 8.0, 8.0, 12.0];
        let mut out = DslbChiSquare { statistic: 0.0, p_value: 0.0, dof: 0, significant: 0 };
        let status = unsafe { dslb_chi_square(observed.as_ptr(), 2, 2, 0.05, &mut out) };
        assert_eq!(status, DslbStatus::Ok);
        assert_eq!(out.statistic, 1.6);
        assert_eq!(out.dof, 1);
        assert_eq!(out.significant, 0);

        let degenerate = [1.0, 0.0, 1.0, 0.0];
        let status = unsafe { dslb_chi_square(degenerate.as_ptr(), 2, 2, 0.05, &mut out) };
        assert_eq!(status, DslbStatus::DegenerateTable);
    }

    #[test]
    fn extraction_and_wf_through_the_abi() {
        let raw = CString::new("```ocl\ncontext A inv: self.x = 1\n```").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        let status =
            unsafe { dslb_extract_code(raw.as_ptr(), DslbLanguage::Ocl as i32, &mut out) };
        assert_eq!(status, DslbStatus::Ok);
        let code = unsafe { take_string(out) };
        assert_eq!(code, "context A inv: self.x = 1");

        let code_c = CString::new(code).unwrap();
        let mut handle: *mut DslbWfResult = ptr::null_mut();
        let status =
            unsafe { dslb_check_wf(code_c.as_ptr(), DslbLanguage::Ocl as i32, &mut handle) };
        assert_eq!(status, DslbStatus::Ok);
        unsafe {
            assert_eq!(dslb_wf_passed(handle), 1);
            assert_eq!(dslb_wf_diagnostic_count(handle), 0);
            dslb_wf_free(handle);
        }
    }

    #[test]
    fn wf_diagnostics_through_the_abi() {
        let bad = CString::new("fact F { no A").unwrap();
        let mut handle: *mut DslbWfResult = ptr::null_mut();
        let status =
            unsafe { dslb_check_wf(bad.as_ptr(), DslbLanguage::Alloy as i32, &mut handle) };
        assert_eq!(status, DslbStatus::Ok);
        unsafe {
            assert_eq!(dslb_wf_passed(handle), 0);
            assert!(dslb_wf_diagnostic_count(handle) >= 1);
            let mut message: *mut c_char = ptr::null_mut();
            assert_eq!(dslb_wf_diagnostic_message(handle, 0, &mut message), DslbStatus::Ok);
            let text = take_string(message);
            assert!(text.contains("unbalanced"));
            assert_eq!(dslb_wf_diagnostic_line(handle, 0), 1);
            dslb_wf_free(handle);
        }
    }

    #[test]
    fn refusal_is_no_code_found() {
        let raw = CString::new("I cannot help with that.").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        let status =
            unsafe { dslb_extract_code(raw.as_ptr(), DslbLanguage::Ocl as i32, &mut out) };
        assert_eq!(status, DslbStatus::NoCodeFound);
    }

    #[test]
    fn invalid_language_rejected() {
        let raw = CString::new("anything").unwrap();
        let mut out: *mut c_char = ptr::null_mut();
        let status = unsafe { dslb_extract_code(raw.as_ptr(), 42, &mut out) };
        assert_eq!(status, DslbStatus::InvalidLanguage);
    }

    #[test]
    fn verdict_parsing_through_the_abi() {
        let raw = CString::new("VERDICT: INCORRECT\nWrong operator.").unwrap();
        let mut correct = 9u8;
        let mut feedback: *mut c_char = ptr::null_mut();
        let status = unsafe { dslb_parse_verdict(raw.as_ptr(), &mut correct, &mut feedback) };
        assert_eq!(status, DslbStatus::Ok);
        assert_eq!(correct, 0);
        assert_eq!(unsafe { take_string(feedback) }, "Wrong operator.");

        let raw = CString::new("The code is fine.").unwrap();
        let status = unsafe { dslb_parse_verdict(raw.as_ptr(), &mut correct, &mut feedback) };
        assert_eq!(status, DslbStatus::NoVerdictLine);
    }
}
