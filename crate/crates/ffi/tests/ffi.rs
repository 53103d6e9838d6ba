use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use qrouter_ffi::*;

fn last_error() -> String {
    let p = qr_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn lambdas_and_qbers() {
    let mut lam = [0.0; 5];
    assert_eq!(unsafe { qr_ghz_lambdas(0.25, 0.25, 0.25, lam.as_mut_ptr()) }, QrStatus::Ok);
    assert_eq!(lam, [0.125; 5]);
    let mut q = [0.0; 3];
    assert_eq!(unsafe { qr_qbers3(1.0, 1.0, 1.0, q.as_mut_ptr()) }, QrStatus::Ok);
    assert_eq!(q, [0.0; 3]);
    assert_eq!(
        unsafe { qr_ghz_lambdas(1.5, 1.0, 1.0, lam.as_mut_ptr()) },
        QrStatus::Validation
    );
    assert!(last_error().contains("fidelity"));
    assert_eq!(unsafe { qr_ghz_lambdas(1.0, 1.0, 1.0, ptr::null_mut()) }, QrStatus::NullPointer);
}

#[test]
fn secret_fraction() {
    let mut r = -1.0;
    let qab = [0.0, 0.0];
    assert_eq!(unsafe { qr_secret_fraction(0.0, qab.as_ptr(), 2, &mut r) }, QrStatus::Ok);
    assert_eq!(r, 1.0);
    assert_eq!(unsafe { qr_secret_fraction(0.5, qab.as_ptr(), 2, &mut r) }, QrStatus::Ok);
    assert_eq!(r, 0.0);
    assert_eq!(
        unsafe { qr_secret_fraction(1.5, qab.as_ptr(), 2, &mut r) },
        QrStatus::InvalidArgument
    );
}

#[test]
fn matching_cardinality() {
    // 1010 / 1101 / 0011
    let mask = 0x5u64 | 0xB << 4 | 0xC << 8;
    let expected = [0, 1, 2, 2];
    for (w, &l) in expected.iter().enumerate() {
        let mut out = usize::MAX;
        assert_eq!(unsafe { qr_matching_cardinality(3, 4, w, mask, &mut out) }, QrStatus::Ok);
        assert_eq!(out, l, "w = {w}");
    }
    let mut out = 0;
    assert_eq!(
        unsafe { qr_matching_cardinality(3, 4, 4, mask, &mut out) },
        QrStatus::Validation
    );
}

#[test]
fn params_and_simulation() {
    let p = qr_params_new();
    let set = |k: &str, v: &str| {
        let (k, v) = (CString::new(k).unwrap(), CString::new(v).unwrap());
        unsafe { qr_params_set(p, k.as_ptr(), v.as_ptr()) }
    };
    assert_eq!(set("samples", "300"), QrStatus::Ok);
    assert_eq!(set("total_rounds", "12"), QrStatus::Ok);
    assert_eq!(set("transmittivity", "abc"), QrStatus::InvalidArgument);
    assert_eq!(unsafe { qr_params_validate(p) }, QrStatus::Ok);

    let mut e = ptr::null_mut();
    assert_eq!(unsafe { qr_simulate(p, &mut e) }, QrStatus::Ok);
    assert_eq!(unsafe { qr_ensemble_rounds(e) }, 12);

    let mut buf = vec![0.0; 12];
    let mut len = 0;
    assert_eq!(
        unsafe { qr_ensemble_mean_l(e, buf.as_mut_ptr(), buf.len(), &mut len) },
        QrStatus::Ok
    );
    assert_eq!(len, 12);
    assert!(buf.iter().all(|&x| (0.0..=4.0).contains(&x)));

    assert_eq!(
        unsafe { qr_ensemble_router_rate(e, buf.as_mut_ptr(), 5, &mut len) },
        QrStatus::BufferTooSmall
    );
    assert_eq!(len, 12);
    for mode in [QrQberMode::Joint as i32, QrQberMode::Marginal as i32] {
        assert_eq!(
            unsafe { qr_ensemble_key_rate(e, 100, mode, buf.as_mut_ptr(), 12, &mut len) },
            QrStatus::Ok
        );
    }
    assert_eq!(
        unsafe { qr_ensemble_key_rate(e, 100, 7, buf.as_mut_ptr(), 12, &mut len) },
        QrStatus::InvalidArgument
    );

    assert_eq!(set("n_parties", "1"), QrStatus::Ok);
    assert_eq!(unsafe { qr_params_validate(p) }, QrStatus::Validation);
    assert!(last_error().contains("n_parties"));

    unsafe {
        qr_ensemble_free(e);
        qr_params_free(p);
    }
}

#[test]
fn analytic_rate_guard() {
    let p = qr_params_new();
    let (k, v) = (CString::new("mem_per_party").unwrap(), CString::new("5").unwrap());
    unsafe { qr_params_set(p, k.as_ptr(), v.as_ptr()) };
    let mut buf = vec![0.0; 50];
    let mut len = 0;
    assert_eq!(
        unsafe { qr_analytic_router_rate(p, false, buf.as_mut_ptr(), buf.len(), &mut len) },
        QrStatus::TooLarge
    );
    let v = CString::new("2").unwrap();
    unsafe { qr_params_set(p, k.as_ptr(), v.as_ptr()) };
    assert_eq!(
        unsafe { qr_analytic_router_rate(p, false, buf.as_mut_ptr(), buf.len(), &mut len) },
        QrStatus::Ok
    );
    assert_eq!(len, 50);
    assert!(buf.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    unsafe { qr_params_free(p) };
}

#[test]
fn null_handles() {
    let mut len = 0;
    assert_eq!(
        unsafe { qr_ensemble_mean_l(ptr::null(), ptr::null_mut(), 0, &mut len) },
        QrStatus::NullPointer
    );
    assert_eq!(unsafe { qr_ensemble_rounds(ptr::null()) }, 0);
    unsafe {
        qr_params_free(ptr::null_mut());
        qr_ensemble_free(ptr::null_mut());
    }
    let v = unsafe { CStr::from_ptr(qr_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include/qrouter.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    for item in ["typedef struct QrParams QrParams", "typedef struct QrEnsemble QrEnsemble", "QR_STATUS_OK = 0"] {
        assert!(text.contains(item), "{item} missing from header");
    }
}

#[test]
fn c_program_links_against_the_library() {
    let Some(cc) = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
    else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    assert!(lib_dir.join("libqrouter_ffi.a").exists(), "static library not found in {lib_dir:?}");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let exe = Path::new(env!("CARGO_TARGET_TMPDIR")).join("qrouter_smoke");
    let status = Command::new(cc)
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(lib_dir.join("libqrouter_ffi.a"))
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
