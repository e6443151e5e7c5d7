use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use vdc_ffi::*;

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 1024];
    let mut needed = 0;
    unsafe {
        assert_eq!(vdc_last_error(buf.as_mut_ptr(), buf.len(), &mut needed), VdcStatus::Ok);
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn steps_a_chain_simulation_through_handles() {
    let path = CString::new(config("contact_3dof.toml").to_str().unwrap()).unwrap();
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(vdc_simulation_from_path(path.as_ptr(), &mut sim), VdcStatus::Ok);
        assert!(!sim.is_null());
        let mut n = 0;
        assert_eq!(vdc_simulation_state_len(sim, &mut n), VdcStatus::Ok);
        assert_eq!(n, 3);
        for _ in 0..250 {
            assert_eq!(vdc_simulation_step(sim), VdcStatus::Ok);
        }
        let mut t = 0.0;
        vdc_simulation_time(sim, &mut t);
        assert!((t - 0.25).abs() < 1e-12);
        let (mut q, mut qd) = (vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(vdc_simulation_state(sim, q.as_mut_ptr(), qd.as_mut_ptr(), 3), VdcStatus::Ok);
        assert!((q[0] + 0.6).abs() < 0.05);
        let mut short = [0.0; 2];
        assert_eq!(
            vdc_simulation_state(sim, short.as_mut_ptr(), short.as_mut_ptr(), 2),
            VdcStatus::BufferTooSmall
        );
        let mut ups = [1.0; 6];
        vdc_simulation_upsilon(sim, ups.as_mut_ptr());
        assert!(ups.iter().all(|u| u.is_finite()));

        assert_eq!(vdc_simulation_run(sim), VdcStatus::Ok);
        let mut done = 0;
        vdc_simulation_is_finished(sim, &mut done);
        assert_eq!(done, 1);
        assert_eq!(vdc_simulation_step(sim), VdcStatus::Finished);

        let mut needed = 0;
        assert_eq!(
            vdc_simulation_summary_json(sim, ptr::null_mut(), 0, &mut needed),
            VdcStatus::BufferTooSmall
        );
        let mut buf = vec![0 as std::ffi::c_char; needed];
        assert_eq!(vdc_simulation_summary_json(sim, buf.as_mut_ptr(), needed, &mut needed), VdcStatus::Ok);
        let json: serde_json::Value =
            serde_json::from_str(CStr::from_ptr(buf.as_ptr()).to_str().unwrap()).unwrap();
        assert_eq!(json["fallback_count"], 0);
        assert!(json["passive"].as_bool().unwrap());
        vdc_simulation_free(sim);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(vdc_simulation_from_toml(ptr::null(), &mut sim), VdcStatus::NullPointer);
        let bad = CString::new("[run]\ndt = -1.0\nduration = 1.0").unwrap();
        assert_eq!(vdc_simulation_from_toml(bad.as_ptr(), &mut sim), VdcStatus::ConfigError);
        assert!(sim.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(vdc_simulation_step(ptr::null_mut()), VdcStatus::NullPointer);
        vdc_simulation_free(ptr::null_mut());

        let text = std::fs::read_to_string(config("free_3dof.toml")).unwrap();
        let fast = CString::new(text.replace("[run]", "[run]\nvelocity_limit = 1e-3")).unwrap();
        assert_eq!(vdc_simulation_from_toml(fast.as_ptr(), &mut sim), VdcStatus::Ok);
        assert_eq!(vdc_simulation_run(sim), VdcStatus::Diverged);
        assert!(last_error().contains("diverged"));
        vdc_simulation_free(sim);

        let name = CStr::from_ptr(vdc_status_name(VdcStatus::Diverged));
        assert_eq!(name.to_str().unwrap(), "simulation diverged");
    }
}

#[test]
fn gains_match_the_reference_z_channel() {
    let text = CString::new(std::fs::read_to_string(config("ideal_step.toml")).unwrap()).unwrap();
    let (mut p, mut v, mut f) = ([0.0; 36], [0.0; 36], [0.0; 36]);
    unsafe {
        assert_eq!(
            vdc_gains_from_toml(text.as_ptr(), p.as_mut_ptr(), v.as_mut_ptr(), f.as_mut_ptr()),
            VdcStatus::Ok
        );
    }
    // Diagonal entry (2, 2) in column-major order.
    let k = 2 * 6 + 2;
    assert!((p[k] + 13.139).abs() < 1e-3);
    assert!((v[k] + 0.5091).abs() < 1e-3);
    assert!((f[k] - 0.030303).abs() < 1e-5);
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/vdc_ffi.h")).unwrap();
    for name in [
        "vdc_simulation_from_toml",
        "vdc_simulation_from_path",
        "vdc_simulation_free",
        "vdc_simulation_step",
        "vdc_simulation_run",
        "vdc_simulation_summary_json",
        "vdc_gains_from_toml",
        "vdc_last_error",
        "typedef struct VdcSimulation VdcSimulation",
        "VDC_STATUS_DIVERGED = 4",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

/// Compiles the C smoke program against the static library when a C
/// compiler is on the path.
#[test]
fn c_program_links_against_the_static_library() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let profile_dir = target.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libvdc_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let exe = target.join("vdc_smoke");
    let status = Command::new("cc")
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(config("free_3dof.toml")).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("t=0.100"), "{stdout}");
}
