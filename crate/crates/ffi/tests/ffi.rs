use std::ffi::{c_char, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use bandit_oco::engine::{comparator, regret, run, RunConfig};
use bandit_oco_ffi::*;

const SPEC: &str = r#"{"dim": 3, "horizon": 200, "body": {"kind": "ball", "radius": 1.0},
  "adversary": {"kind": "fixed", "center_scale": 2.0}, "seed": 4}"#;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    let n = unsafe { boc_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(511)].iter().map(|c| *c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn config(json: &str) -> (BocStatus, *mut BocConfig) {
    let c = CString::new(json).unwrap();
    let mut out = ptr::null_mut();
    let s = unsafe { boc_config_from_json(c.as_ptr(), &mut out) };
    (s, out)
}

#[test]
fn run_matches_the_rust_api() {
    let (s, cfg) = config(SPEC);
    assert_eq!(s, BocStatus::Ok);
    assert_eq!(unsafe { boc_config_dim(cfg) }, 3);
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { boc_run(cfg, &mut trace) }, BocStatus::Ok);
    assert_eq!(unsafe { boc_trace_rounds(trace) }, 200);
    assert_eq!(unsafe { boc_trace_dim(trace) }, 3);

    let reference = run(&serde_json::from_str::<RunConfig>(SPEC).unwrap()).unwrap();
    let mut round = BocRound::default();
    assert_eq!(unsafe { boc_trace_round(trace, 9, &mut round) }, BocStatus::Ok);
    assert_eq!(round.t, 10);
    assert_eq!(round.value_plus, reference.rounds[9].value_plus);
    assert_eq!(round.eta, reference.rounds[9].eta);

    let mut x = [0.0; 3];
    for (which, expected) in [
        (BocVector::Iterate, &reference.rounds[9].x),
        (BocVector::Direction, &reference.rounds[9].u),
        (BocVector::Gradient, &reference.rounds[9].g),
    ] {
        assert_eq!(unsafe { boc_trace_vector(trace, 9, which as u32, x.as_mut_ptr(), 3) }, BocStatus::Ok);
        assert_eq!(&x[..], &expected[..]);
    }

    let x_star = comparator(&reference).unwrap();
    assert_eq!(unsafe { boc_trace_comparator(trace, x.as_mut_ptr(), 3) }, BocStatus::Ok);
    assert_eq!(x.to_vec(), x_star);
    let mut reg = BocRegret::default();
    assert_eq!(unsafe { boc_trace_regret(trace, ptr::null(), &mut reg) }, BocStatus::Ok);
    assert_eq!(reg.regret, regret(&reference, &x_star).unwrap().regret);
    let origin = [0.0; 3];
    assert_eq!(unsafe { boc_trace_regret(trace, origin.as_ptr(), &mut reg) }, BocStatus::Ok);
    assert_eq!(reg.regret, regret(&reference, &origin).unwrap().regret);

    unsafe {
        boc_trace_free(trace);
        boc_config_free(cfg);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let (s, cfg) = config("{\"dim\": 2}");
    assert_eq!(s, BocStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("missing field"));

    let (s, _) = config(&SPEC.replace("\"horizon\": 200", "\"horizon\": 0"));
    assert_eq!(s, BocStatus::Parameter);

    let mut out = ptr::null_mut();
    assert_eq!(unsafe { boc_config_from_json(ptr::null(), &mut out) }, BocStatus::NullPointer);
    assert_eq!(unsafe { boc_run(ptr::null(), &mut ptr::null_mut()) }, BocStatus::NullPointer);

    let bad = [0xffu8, 0];
    assert_eq!(unsafe { boc_config_from_json(bad.as_ptr().cast(), &mut out) }, BocStatus::InvalidUtf8);

    let (_, cfg) = config(SPEC);
    let mut trace = ptr::null_mut();
    unsafe { boc_run(cfg, &mut trace) };
    let mut x = [0.0; 2];
    assert_eq!(unsafe { boc_trace_comparator(trace, x.as_mut_ptr(), 2) }, BocStatus::BufferTooSmall);
    assert_eq!(unsafe { boc_trace_vector(trace, 0, 7, x.as_mut_ptr(), 2) }, BocStatus::OutOfRange);
    assert_eq!(unsafe { boc_trace_round(trace, 200, &mut BocRound::default()) }, BocStatus::OutOfRange);
    assert!(last_error().contains("200"));
    let outside = [2.0, 0.0, 0.0];
    assert_eq!(unsafe { boc_trace_regret(trace, outside.as_ptr(), &mut BocRegret::default()) }, BocStatus::Parameter);
    unsafe {
        boc_trace_free(trace);
        boc_config_free(cfg);
        boc_trace_free(ptr::null_mut());
        boc_config_free(ptr::null_mut());
    }
}

#[test]
fn config_json_round_trip_and_seed() {
    let (_, cfg) = config(SPEC);
    let mut needed = 0;
    assert_eq!(unsafe { boc_config_to_json(cfg, ptr::null_mut(), 0, &mut needed) }, BocStatus::Ok);
    let mut buf = vec![0 as c_char; needed];
    assert_eq!(unsafe { boc_config_to_json(cfg, buf.as_mut_ptr(), needed, ptr::null_mut()) }, BocStatus::Ok);
    let text: String = buf[..needed - 1].iter().map(|c| *c as u8 as char).collect();
    let resolved: RunConfig = serde_json::from_str(&text).unwrap();
    assert!(resolved.alpha.is_some() && resolved.xi.is_some());
    assert_eq!(unsafe { boc_config_to_json(cfg, buf.as_mut_ptr(), needed - 1, ptr::null_mut()) }, BocStatus::BufferTooSmall);

    assert_eq!(unsafe { boc_config_set_seed(cfg, 77, 3) }, BocStatus::Ok);
    let mut trace = ptr::null_mut();
    unsafe { boc_run(cfg, &mut trace) };
    let reference = run(&resolved.with_seed(77, 3)).unwrap();
    let mut round = BocRound::default();
    unsafe { boc_trace_round(trace, 0, &mut round) };
    assert_eq!(round.value_minus, reference.rounds[0].value_minus);
    unsafe {
        boc_trace_free(trace);
        boc_config_free(cfg);
    }
}

#[test]
fn projection_and_sphere_helpers() {
    let (_, cfg) = config(SPEC);
    let x = [3.0, 4.0, 0.0];
    let mut p = [0.0; 3];
    assert_eq!(unsafe { boc_config_project(cfg, 0.5, x.as_ptr(), p.as_mut_ptr(), 3) }, BocStatus::Ok);
    assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] - 0.4).abs() < 1e-12);
    assert_eq!(unsafe { boc_config_project(cfg, 1.0, x.as_ptr(), p.as_mut_ptr(), 3) }, BocStatus::Parameter);
    assert_eq!(unsafe { boc_config_project(cfg, 0.0, x.as_ptr(), p.as_mut_ptr(), 2) }, BocStatus::Dimension);
    unsafe { boc_config_free(cfg) };

    let mut rng = ptr::null_mut();
    assert_eq!(unsafe { boc_random_new(1, 2, &mut rng) }, BocStatus::Ok);
    let mut u = [0.0; 5];
    assert_eq!(unsafe { boc_random_sphere(rng, u.as_mut_ptr(), 5) }, BocStatus::Ok);
    assert!((u.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-12);
    assert_eq!(unsafe { boc_random_sphere(rng, u.as_mut_ptr(), 0) }, BocStatus::Parameter);
    unsafe { boc_random_free(rng) };
    assert_eq!(boc_format_version(), bandit_oco::FORMAT_VERSION);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/bandit_oco.h")).unwrap();
    for name in [
        "boc_format_version",
        "boc_last_error",
        "boc_config_from_json",
        "boc_config_to_json",
        "boc_config_set_seed",
        "boc_config_dim",
        "boc_config_project",
        "boc_config_free",
        "boc_run",
        "boc_trace_rounds",
        "boc_trace_dim",
        "boc_trace_round",
        "boc_trace_vector",
        "boc_trace_comparator",
        "boc_trace_regret",
        "boc_trace_free",
        "boc_random_new",
        "boc_random_sphere",
        "boc_random_free",
        "BOC_STATUS_FEASIBILITY",
        "BOC_VECTOR_GRADIENT",
        "typedef struct BocTrace BocTrace;",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

fn static_lib() -> Option<PathBuf> {
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().ok()?.parent()?.parent()?.to_path_buf();
    let lib = profile_dir.join("libbandit_oco_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_against_the_static_library() {
    let Some(lib) = static_lib() else {
        eprintln!("static library not built; skipping C link test");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping C link test");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("regret "));
}
