use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use dpto::cli::config::BUNDLED_CONFIG;
use dpto_ffi::*;

fn last_error() -> String {
    let p = dpto_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn load(text: &str) -> Result<*mut DptoExperiment, (DptoStatus, String)> {
    let c = CString::new(text).unwrap();
    let mut exp = ptr::null_mut();
    match unsafe { dpto_experiment_from_toml(c.as_ptr(), &mut exp) } {
        DptoStatus::Ok => Ok(exp),
        s => Err((s, last_error())),
    }
}

fn short(text: &str) -> String {
    text.replace("t_end = 2.0", "t_end = 0.8")
}

#[test]
fn bound_synthesis_and_run() {
    let exp = load(&short(BUNDLED_CONFIG)).unwrap();
    unsafe {
        let mut bound = 0.0;
        assert_eq!(dpto_experiment_beta_bound(exp, &mut bound), DptoStatus::Ok);
        assert!((bound - 10.404_782_558).abs() < 1e-8);

        let mut g = [0.0; 3];
        assert_eq!(dpto_experiment_synthesize(exp, 1.05, 1.0, 1.0, g.as_mut_ptr()), DptoStatus::Ok);
        assert_eq!(g[0], 1.05);
        assert_eq!(g[1], bound);
        assert_eq!(g[2], 0.125);

        let mut res = ptr::null_mut();
        assert_eq!(dpto_run(exp, &mut res), DptoStatus::Ok);
        let n = dpto_result_sample_count(res);
        assert_eq!(n, 801);
        assert_eq!(dpto_result_order(res), 3);
        assert_eq!(dpto_result_follower_count(res), 3);

        let mut t = 0.0;
        assert_eq!(dpto_result_time(res, n - 1, &mut t), DptoStatus::Ok);
        assert_eq!(t, 0.8);
        let mut e = 0.0;
        assert_eq!(dpto_result_error(res, 0, 1, 1, &mut e), DptoStatus::Ok);
        assert!((e - (0.4 - 1.0)).abs() < 1e-15);
        assert_eq!(dpto_result_error(res, n - 1, 3, 1, &mut e), DptoStatus::Ok);
        assert!(e.abs() < 0.01);
        assert_eq!(dpto_result_error(res, 0, 4, 1, &mut e), DptoStatus::InvalidArgument);
        assert_eq!(dpto_result_error(res, 0, 0, 1, &mut e), DptoStatus::InvalidArgument);

        let mut v = 0.0;
        assert_eq!(dpto_result_lyapunov(res, 0, 3, &mut v), DptoStatus::Ok);
        assert!(v > 0.0);
        let mut tau = 0.0;
        assert_eq!(dpto_result_convergence_time(res, 3, &mut tau), DptoStatus::Ok);
        assert!(tau > 0.0 && tau < 0.25);

        dpto_result_free(res);
        dpto_experiment_free(exp);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let (s, msg) = load("not = [valid").unwrap_err();
    assert_eq!(s, DptoStatus::ConfigError);
    assert!(!msg.is_empty());

    let cut = BUNDLED_CONFIG.replace("    [1.0, 0.0, 0.0],\n    [1.0, 0.0, 0.0],\n]", "    [1.0, 0.0, 0.0],\n    [0.0, 0.0, 0.0],\n]");
    let (s, msg) = load(&cut).unwrap_err();
    assert_eq!(s, DptoStatus::Infeasible);
    assert!(msg.contains("no leader-rooted spanning tree"), "{msg}");

    let exp = load(&short(BUNDLED_CONFIG).replace("[sim]\n", "[sim]\ndivergence_threshold = 1.0\n")).unwrap();
    unsafe {
        let mut res = ptr::null_mut();
        assert_eq!(dpto_run(exp, &mut res), DptoStatus::Diverged);
        assert!(res.is_null());
        assert!(last_error().contains("diverg"));
        assert_eq!(dpto_experiment_set_gains(exp, -1.0, 1.0, 1.0), DptoStatus::ConfigError);
        dpto_experiment_free(exp);
    }
}

#[test]
fn header_declares_the_api() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/dpto.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "typedef struct DptoExperiment DptoExperiment;",
        "typedef struct DptoResult DptoResult;",
        "DPTO_STATUS_DIVERGED = 3",
        "dpto_experiment_from_toml(",
        "dpto_run(",
        "dpto_result_error(",
        "dpto_last_error(void)",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    // Compile-check the header as C when a compiler is present.
    if let Ok(o) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() {
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
}
