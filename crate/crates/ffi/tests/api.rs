use std::ffi::CStr;
use std::ptr;

use homlab_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 256];
    unsafe {
        homlab_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

#[test]
fn environment_round_trip() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(homlab_env_new(3, 0.05, 3.0, 1.0, 1.0, 7, &mut env), HomlabStatus::Ok);
        assert_eq!(homlab_env_dim(env), 3);
        let (mut a, mut b) = ([0.0; 9], [0.0; 3]);
        assert_eq!(homlab_env_coeffs(env, [0.3, 1.2, -4.0].as_ptr(), a.as_mut_ptr(), b.as_mut_ptr()), HomlabStatus::Ok);
        assert!((a[1] - a[3]).abs() < 1e-15);
        assert!(b.iter().map(|v| v * v).sum::<f64>().sqrt() <= 0.05);
        let (mut m, mut s) = (0.0, 0.0);
        let st = homlab_mean_exit_time_ball(env, 5.0, [0.0; 3].as_ptr(), 400, 0.1, 1e4, 3, &mut m, &mut s);
        assert_eq!(st, HomlabStatus::Ok);
        assert!((m - 25.0 / 3.0).abs() < 0.15 * 25.0 / 3.0, "{m}");
        homlab_env_free(env);
        homlab_env_free(ptr::null_mut());
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut env = ptr::null_mut();
        assert_eq!(homlab_env_new(3, 2.0, 3.0, 1.0, 1.0, 7, &mut env), HomlabStatus::InvalidSpec);
        assert!(env.is_null());
        assert!(!last_error().is_empty());
        assert_eq!(homlab_env_new(3, 0.05, 3.0, 1.0, 1.0, 7, ptr::null_mut()), HomlabStatus::NullPointer);
        assert_eq!(last_error(), "out is null");
        let mut v = 0.0;
        assert_eq!(homlab_annulus_mean_exit(2.0, 1.0, 1.0, 3, 1.5, &mut v), HomlabStatus::InvalidParams);
        let mut buf = [0 as std::ffi::c_char; 4];
        let full = homlab_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(full > 3);
        assert_eq!(buf[3], 0);
    }
}

#[test]
fn schedule_and_alpha() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(homlab_schedule_new(3, 0.5, 0.5, 25, 0.5, 1, 3, &mut s), HomlabStatus::Ok);
        assert_eq!(homlab_schedule_len(s), 4);
        let mut row = HomlabScaleRow::default();
        assert_eq!(homlab_schedule_row(s, 2, &mut row), HomlabStatus::Ok);
        assert_eq!((row.l, row.ell), (1250.0, 35.0));
        assert_eq!(homlab_schedule_row(s, 9, &mut row), HomlabStatus::OutOfRange);
        let mut n = 0;
        assert_eq!(homlab_schedule_locate(s, 1.0 / 125.0, &mut n), HomlabStatus::Ok);
        assert_eq!(n, 1);
        assert_eq!(homlab_schedule_locate(s, 1.0, &mut n), HomlabStatus::OutOfRange);

        let mut env = ptr::null_mut();
        assert_eq!(homlab_env_new(3, 0.0, 3.0, 1.0, 1.0, 1, &mut env), HomlabStatus::Ok);
        let (mut a, mut se) = (0.0, 0.0);
        assert_eq!(homlab_estimate_alpha(env, s, 0, 1000, 0.1, 5, &mut a, &mut se), HomlabStatus::Ok);
        assert!((a - 1.0).abs() < 4.0 * se);
        homlab_env_free(env);
        homlab_schedule_free(s);

        let mut bad = ptr::null_mut();
        assert_eq!(homlab_schedule_new(3, 0.5, 0.01, 25, 0.5, 1, 3, &mut bad), HomlabStatus::DegenerateSchedule);
    }
}

#[test]
fn annulus_and_version() {
    unsafe {
        let mut v = 1.0;
        assert_eq!(homlab_annulus_mean_exit(1.0, 2.0, 1.0, 3, 1.0, &mut v), HomlabStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(homlab_annulus_mean_exit(1.0, 2.0, 1.0, 3, 1.5, &mut v), HomlabStatus::Ok);
        assert!((v - 0.25).abs() < 1e-14);
        let ver = CStr::from_ptr(homlab_version()).to_str().unwrap();
        assert_eq!(ver, env!("CARGO_PKG_VERSION"));
    }
}
