use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ivmaps_ffi::*;

fn cstr(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn map(spec: &str) -> *mut IvmMap {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ivm_map_new(cstr(spec).as_ptr(), &mut m) }, IvmStatus::Ok);
    m
}

#[test]
fn map_handle_round_trip() {
    let m = map("vssv:0.4:30");
    let mut n = 0;
    let mut y = 0.0;
    unsafe {
        assert_eq!(ivm_map_branch_count(m, &mut n), IvmStatus::Ok);
        assert_eq!(ivm_map_apply(m, 0.7, &mut y), IvmStatus::Ok);
        ivm_map_free(m);
    }
    assert_eq!(n, 30);
    // first branch (0.4, 1] is x ↦ (x − 0.4)/0.6
    assert!((y - 0.5).abs() < 1e-12);
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut m = ptr::null_mut();
    let status = unsafe { ivm_map_new(cstr("not-a-map").as_ptr(), &mut m) };
    assert_eq!(status, IvmStatus::InvalidInput);
    assert!(m.is_null());
    let msg = unsafe { CStr::from_ptr(ivm_last_error()) }.to_str().unwrap();
    assert!(msg.contains("not-a-map"));
    assert_eq!(unsafe { ivm_map_new(ptr::null(), &mut m) }, IvmStatus::NullPointer);

    let d = map("doubling");
    let mut theta = 0.0;
    let status = unsafe { ivm_h1_theta0(d, 2.0, 0.1, &mut theta, ptr::null_mut()) };
    assert_eq!(status, IvmStatus::InvalidInput);
    unsafe { ivm_map_free(d) };
}

#[test]
fn h1_and_density() {
    let m = map("vssv:0.4:60");
    let mut theta = 0.0;
    let mut pass = 0;
    let mut h = ptr::null_mut();
    let mut mass = 0.0;
    unsafe {
        assert_eq!(ivm_h1_theta0(m, 0.3, 0.1, &mut theta, &mut pass), IvmStatus::Ok);
        assert_eq!(ivm_density_invariant(m, &mut h), IvmStatus::Ok);
        assert_eq!(ivm_density_mass_on(h, 0.4, 1.0, &mut mass), IvmStatus::Ok);
    }
    assert!((theta - ivmaps::checks::vssv_h1_closed_form(0.4, 0.3)).abs() < 1e-12);
    assert_eq!(pass, 1);
    // v_1 = (1 − 2λ)/(1 − λ) = 1/3
    assert!((mass - 1.0 / 3.0).abs() < 1e-9);

    let mut len = 0;
    unsafe {
        assert_eq!(
            ivm_density_pieces(h, ptr::null_mut(), ptr::null_mut(), ptr::null_mut(), 0, &mut len),
            IvmStatus::BufferTooSmall
        );
    }
    let (mut l, mut r, mut v) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    unsafe {
        assert_eq!(
            ivm_density_pieces(h, l.as_mut_ptr(), r.as_mut_ptr(), v.as_mut_ptr(), len, &mut len),
            IvmStatus::Ok
        );
        ivm_density_free(h);
        ivm_map_free(m);
    }
    let total: f64 = (0..len).map(|i| (r[i] - l[i]) * v[i]).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn tower_and_statistics() {
    let m = map("doubling");
    let mut t = ptr::null_mut();
    let mut n = 0;
    let mut json = ptr::null_mut();
    unsafe {
        assert_eq!(ivm_tower_build(m, 50, 1000, &mut t), IvmStatus::Ok);
        assert_eq!(ivm_tower_node_count(t, &mut n), IvmStatus::Ok);
        assert_eq!(ivm_tower_to_json(t, &mut json), IvmStatus::Ok);
    }
    assert_eq!(n, 1);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_string();
    assert!(text.contains("\"edges\""));
    unsafe {
        ivm_string_free(json);
        ivm_tower_free(t);
    }

    let f = cstr(r#"{"kind":"polynomial","coefficients":[0.0,1.0]}"#);
    let mut cov = [0.0; 6];
    let mut sigma2 = 0.0;
    unsafe {
        assert_eq!(ivm_correlation_series(m, f.as_ptr(), ptr::null(), cov.as_mut_ptr(), 6), IvmStatus::Ok);
        assert_eq!(ivm_green_kubo(m, f.as_ptr(), 60, &mut sigma2), IvmStatus::Ok);
        ivm_map_free(m);
    }
    for (n, c) in cov.iter().enumerate() {
        assert!((c - 0.5f64.powi(n as i32) / 12.0).abs() < 1e-15);
    }
    assert!((sigma2 - 0.25).abs() < 1e-12);
}

#[test]
fn repro_through_abi() {
    let dir = tempfile_dir();
    let mut passed = 0;
    let mut table = ptr::null_mut();
    let status = unsafe {
        ivm_repro_run(
            cstr("unbounded-corr").as_ptr(),
            cstr(dir.to_str().unwrap()).as_ptr(),
            0,
            &mut passed,
            &mut table,
        )
    };
    assert_eq!(status, IvmStatus::Ok);
    assert_eq!(passed, 1);
    let text = unsafe { CStr::from_ptr(table) }.to_str().unwrap().to_string();
    unsafe { ivm_string_free(table) };
    assert!(text.contains("PASS"));
    assert!(dir.join("unbounded_cov.csv").is_file());
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("ivmaps-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

/// Compiles the C example against the generated header and static library.
#[test]
fn c_program_links_against_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libivmaps_ffi.a");
    if !lib.is_file() {
        eprintln!("static library not built at {}; skipping", lib.display());
        return;
    }
    let exe = tempfile_dir().join("smoke");
    let status = Command::new(cc)
        .arg(crate_dir.join("examples/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields.len(), 5);
    let theta: f64 = fields[0].parse().unwrap();
    assert!((theta - 0.962715070330).abs() < 1e-9);
    assert_eq!(fields[1], "1");
    assert!((fields[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(fields[3], "59");
    assert_eq!(fields[4], "1");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
