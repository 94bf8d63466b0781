//! Compiles and runs a real C program against the generated header and the
//! staticlib, exercising the ABI end to end from outside Rust.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include "dslbench.h"
#include <assert.h>
#include <math.h>
#include <stdio.h>
#include <string.h>

int main(void) {
    double p = 0.0;
    assert(dslb_pass_at_k(5, 2, 3, &p) == DSLB_STATUS_OK);
    assert(fabs(p - 0.9) < 1e-12);
    assert(dslb_pass_at_k(3, 1, 9, &p) == DSLB_STATUS_DOMAIN_ERROR);

    double observed[4] = {12.0, 8.0, 8.0, 12.0};
    DslbChiSquare chi;
    assert(dslb_chi_square(observed, 2, 2, 0.05, &chi) == DSLB_STATUS_OK);
    assert(chi.statistic == 1.6);
    assert(chi.dof == 1);
    assert(!chi.significant);

    char *code = NULL;
    assert(dslb_extract_code("```ocl\ncontext A inv: self.x = 1\n```",
                             DSLB_LANGUAGE_OCL, &code) == DSLB_STATUS_OK);
    assert(strcmp(code, "context A inv: self.x = 1") == 0);

    DslbWfResult *wf = NULL;
    assert(dslb_check_wf(code, DSLB_LANGUAGE_OCL, &wf) == DSLB_STATUS_OK);
    assert(dslb_wf_passed(wf) == 1);
    dslb_wf_free(wf);
    dslb_string_free(code);

    assert(dslb_check_wf("fact F { no A", DSLB_LANGUAGE_ALLOY, &wf) == DSLB_STATUS_OK);
    assert(dslb_wf_passed(wf) == 0);
    assert(dslb_wf_diagnostic_count(wf) >= 1);
    char *message = NULL;
    assert(dslb_wf_diagnostic_message(wf, 0, &message) == DSLB_STATUS_OK);
    assert(strstr(message, "unbalanced") != NULL);
    dslb_string_free(message);
    dslb_wf_free(wf);

    unsigned char correct = 0;
    char *feedback = NULL;
    assert(dslb_parse_verdict("VERDICT: CORRECT\nlooks right",
                              &correct, &feedback) == DSLB_STATUS_OK);
    assert(correct == 1);
    dslb_string_free(feedback);

    printf("c smoke ok: %s\n", dslb_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps/...; the staticlib sits one up.
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs_against_the_abi() {
    let Ok(cc) = which_cc() else {
        eprintln!("skipping: no C compiler available");
        return;
    };

    let staticlib = target_dir().join("libdslbench_capi.a");
    assert!(staticlib.exists(), "staticlib not built at {}", staticlib.display());
    let include_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");

    let work = tempdir();
    let source = work.join("smoke.c");
    std::fs::write(&source, C_PROGRAM).unwrap();
    let binary = work.join("smoke");

    // Workspace-wide builds unify features and pull the HTTP stack into the
    // staticlib; retry with the TLS libraries when the plain link fails.
    let mut compiled = false;
    let mut last_stderr = String::new();
    for extra in [&[][..], &["-lssl", "-lcrypto"][..]] {
        let compile = Command::new(&cc)
            .arg(&source)
            .arg(&staticlib)
            .arg(format!("-I{}", include_dir.display()))
            .args(["-lpthread", "-ldl", "-lm"])
            .args(extra)
            .arg("-o")
            .arg(&binary)
            .output()
            .unwrap();
        if compile.status.success() {
            compiled = true;
            break;
        }
        last_stderr = String::from_utf8_lossy(&compile.stderr).into_owned();
    }
    assert!(compiled, "cc failed:\n{last_stderr}");

    let run = Command::new(&binary).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("c smoke ok: dslbench"), "{stdout}");

    std::fs::remove_dir_all(&work).ok();
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok() {
            return Ok(cc.to_string());
        }
    }
    Err(())
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dslbench-capi-smoke-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
