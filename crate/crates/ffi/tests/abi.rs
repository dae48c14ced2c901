use std::ffi::{c_char, CStr};
use std::ptr;

use coopgame_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 512];
    unsafe {
        cg_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(cg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn solve_two_player_deltas() {
    let pi = [1.0, 0.0, 0.0, 1.0];
    let alpha = [0.5, 0.5, 0.5, 0.5];
    let mut p = [0.0; 4];
    let mut m = [0.0; 4];
    let mut residual = f64::NAN;
    let st = unsafe {
        cg_solve_exact(
            pi.as_ptr(),
            2,
            2,
            alpha.as_ptr(),
            0,
            p.as_mut_ptr(),
            m.as_mut_ptr(),
            &mut residual,
        )
    };
    assert_eq!(st, CgStatus::CgOk);
    let expect = [2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0];
    for (a, b) in p.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
    // Column i of M holds the weights of each target in p_i.
    assert!((m[0] - 2.0 / 3.0).abs() < 1e-12 && (m[2] - 1.0 / 3.0).abs() < 1e-12);
    assert!(residual < 1e-12);
}

#[test]
fn optional_outputs_may_be_null() {
    let pi = [0.25, 0.75];
    let alpha = [1.0];
    let mut p = [0.0; 2];
    let st = unsafe {
        cg_solve_exact(
            pi.as_ptr(),
            1,
            2,
            alpha.as_ptr(),
            0,
            p.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, CgStatus::CgOk);
    assert_eq!(p, [0.25, 0.75]);
}

#[test]
fn bound_and_validation_errors() {
    let alpha = [0.8, 0.2, 0.4, 0.6];
    let mut b = 0.0;
    assert_eq!(
        unsafe { cg_spectral_radius_bound(alpha.as_ptr(), 2, 0, &mut b) },
        CgStatus::CgOk
    );
    assert!((b - 0.4).abs() < 1e-15);

    let bad = [0.8, 0.3, 0.4, 0.6];
    assert_eq!(
        unsafe { cg_spectral_radius_bound(bad.as_ptr(), 2, 0, &mut b) },
        CgStatus::CgErrValidation
    );
    assert!(!last_error().is_empty());

    let zero_diag = [0.0, 1.0, 1.0, 0.0];
    assert_eq!(
        unsafe { cg_spectral_radius_bound(zero_diag.as_ptr(), 2, 0, &mut b) },
        CgStatus::CgErrValidation
    );
    assert_eq!(
        unsafe { cg_spectral_radius_bound(zero_diag.as_ptr(), 2, 1, &mut b) },
        CgStatus::CgOk
    );
    assert_eq!(b, 1.0);
}

#[test]
fn singular_system_is_reported() {
    let pi = [1.0, 0.0, 0.0, 1.0];
    let alpha = [0.0, 1.0, 1.0, 0.0];
    let mut p = [0.0; 4];
    let st = unsafe {
        cg_solve_exact(
            pi.as_ptr(),
            2,
            2,
            alpha.as_ptr(),
            1,
            p.as_mut_ptr(),
            ptr::null_mut(),
            ptr::null_mut(),
        )
    };
    assert_eq!(st, CgStatus::CgErrSingular);
    assert!(last_error().contains("singular"));
}

#[test]
fn null_pointers_are_rejected() {
    let mut out = 0.0;
    assert_eq!(
        unsafe { cg_spectral_radius_bound(ptr::null(), 2, 0, &mut out) },
        CgStatus::CgErrNullPointer
    );
    assert!(last_error().contains("alpha"));
    assert_eq!(
        unsafe { cg_model_new_tabular(ptr::null(), 3, ptr::null_mut()) },
        CgStatus::CgErrNullPointer
    );
    unsafe { cg_model_free(ptr::null_mut()) };
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut out = 0.0;
    unsafe { cg_spectral_radius_bound(ptr::null(), 2, 0, &mut out) };
    let mut buf = [0x7f as c_char; 6];
    let full = unsafe { cg_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(full > 5);
    assert_eq!(buf[5], 0);
    assert_eq!(unsafe { cg_last_error_message(ptr::null_mut(), 0) }, full);
}

#[test]
fn tabular_model_lifecycle() {
    let mut m: *mut CgModel = ptr::null_mut();
    unsafe {
        assert_eq!(cg_model_new_tabular(ptr::null(), 4, &mut m), CgStatus::CgOk);
        let mut size = 0usize;
        assert_eq!(cg_model_size(m, &mut size), CgStatus::CgOk);
        assert_eq!(size, 4);

        let target = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(
            cg_model_fit_step(m, target.as_ptr(), 4, 0.5),
            CgStatus::CgOk
        );
        let mut p = [0.0; 4];
        assert_eq!(cg_model_distribution(m, p.as_mut_ptr(), 4), CgStatus::CgOk);
        assert_eq!(p, [0.625, 0.125, 0.125, 0.125]);

        let mut lp = 0.0;
        assert_eq!(cg_model_log_prob(m, 0, &mut lp), CgStatus::CgOk);
        assert!((lp - 0.625f64.ln()).abs() < 1e-12);
        assert_eq!(cg_model_log_prob(m, 4, &mut lp), CgStatus::CgErrRange);

        // A rejected step leaves the model untouched.
        assert_eq!(
            cg_model_fit_step(m, target.as_ptr(), 4, -0.5),
            CgStatus::CgErrRange
        );
        assert_eq!(cg_model_distribution(m, p.as_mut_ptr(), 4), CgStatus::CgOk);
        assert_eq!(p, [0.625, 0.125, 0.125, 0.125]);
        assert_eq!(
            cg_model_distribution(m, p.as_mut_ptr(), 3),
            CgStatus::CgErrRange
        );

        let mut a = [0u32; 1000];
        let mut b = [0u32; 1000];
        assert_eq!(cg_model_sample(m, 1000, 9, a.as_mut_ptr()), CgStatus::CgOk);
        assert_eq!(cg_model_sample(m, 1000, 9, b.as_mut_ptr()), CgStatus::CgOk);
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x < 4));
        let zeros = a.iter().filter(|&&x| x == 0).count();
        assert!((550..700).contains(&zeros), "{zeros}");
        cg_model_free(m);
    }
}

#[test]
fn loglinear_model_moves_toward_target() {
    // One-hot features make the family cover the whole simplex.
    let features = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let mut m: *mut CgModel = ptr::null_mut();
    unsafe {
        assert_eq!(
            cg_model_new_loglinear(features.as_ptr(), 3, 3, ptr::null(), &mut m),
            CgStatus::CgOk
        );
        let mut p = [0.0; 3];
        cg_model_distribution(m, p.as_mut_ptr(), 3);
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-12);
        }
        let target = [0.7, 0.2, 0.1];
        for _ in 0..2000 {
            assert_eq!(
                cg_model_fit_step(m, target.as_ptr(), 3, 0.5),
                CgStatus::CgOk
            );
        }
        cg_model_distribution(m, p.as_mut_ptr(), 3);
        for (a, b) in p.iter().zip(target) {
            assert!((a - b).abs() < 1e-6, "{p:?}");
        }
        cg_model_free(m);
    }
}

#[test]
fn run_config_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"mode":"simulate","space":{"variables":[{"name":"x","card":2}]},
            "players":[{"data":{"probs":[1,0]},"batch_size":64},{"data":{"probs":[0,1]},"batch_size":64}],
            "alpha":[[0.5,0.5],[0.5,0.5]],"rounds":5,"master_seed":4}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let c = |p: &std::path::Path| std::ffi::CString::new(p.to_str().unwrap()).unwrap();
    let st = unsafe { cg_run_config(c(&cfg).as_ptr(), c(&out).as_ptr(), 1, 7) };
    assert_eq!(st, CgStatus::CgOk, "{}", last_error());
    assert!(out.join("history.csv").exists());

    std::fs::write(&cfg, r#"{"mode":"simulate"}"#).unwrap();
    let st = unsafe { cg_run_config(c(&cfg).as_ptr(), ptr::null(), 0, 0) };
    assert_eq!(st, CgStatus::CgErrValidation);
}
