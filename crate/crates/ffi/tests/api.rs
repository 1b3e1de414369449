use std::ffi::{CStr, CString};
use std::ptr;

use opcraft_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(opcraft_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn env(name: &str) -> *mut OpcraftEnv {
    let name = CString::new(name).unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(unsafe { opcraft_env_new(name.as_ptr(), &mut env) }, OpcraftStatus::Ok);
    env
}

#[test]
fn unknown_env_and_null_arguments_are_reported() {
    let name = CString::new("nowhere").unwrap();
    let mut env = ptr::null_mut();
    assert_eq!(
        unsafe { opcraft_env_new(name.as_ptr(), &mut env) },
        OpcraftStatus::UnknownEnv
    );
    assert!(env.is_null());
    assert!(last_error().contains("nowhere"));
    assert_eq!(
        unsafe { opcraft_env_new(ptr::null(), &mut env) },
        OpcraftStatus::NullPointer
    );
    assert_eq!(
        unsafe { opcraft_env_new(name.as_ptr(), ptr::null_mut()) },
        OpcraftStatus::NullPointer
    );
    let mut n = 0;
    assert_eq!(
        unsafe { opcraft_model_operator_count(ptr::null(), &mut n) },
        OpcraftStatus::NullPointer
    );
    unsafe {
        opcraft_env_free(ptr::null_mut());
        opcraft_model_free(ptr::null_mut());
    }
}

#[test]
fn learn_inspect_evaluate_and_save() {
    let env = env("screws");
    let method = CString::new("ours").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { opcraft_learn(env, method.as_ptr(), 10, 0, &mut model) },
        OpcraftStatus::Ok
    );
    assert_eq!(last_error(), "");

    let mut count = 0;
    assert_eq!(
        unsafe { opcraft_model_operator_count(model, &mut count) },
        OpcraftStatus::Ok
    );
    assert!(count > 0);
    let mut coverage = -1.0;
    assert_eq!(
        unsafe { opcraft_model_coverage(model, &mut coverage) },
        OpcraftStatus::Ok
    );
    assert!((0.0..=1.0).contains(&coverage));

    let mut needed = 0;
    let status = unsafe { opcraft_model_operators_text(model, ptr::null_mut(), 0, &mut needed) };
    assert_eq!(status, OpcraftStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; needed];
    assert_eq!(
        unsafe { opcraft_model_operators_text(model, buf.as_mut_ptr(), buf.len(), ptr::null_mut()) },
        OpcraftStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(text.len() + 1, needed);
    assert_eq!(text.matches("Controller:").count(), count);

    let mut rate = -1.0;
    assert_eq!(
        unsafe { opcraft_model_evaluate(model, 3, 0, 10.0, &mut rate) },
        OpcraftStatus::Ok
    );
    assert!((0.0..=100.0).contains(&rate));
    assert_eq!(
        unsafe { opcraft_model_evaluate(model, 3, 0, 0.0, &mut rate) },
        OpcraftStatus::InvalidArgument
    );

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    assert_eq!(unsafe { opcraft_model_save(model, path.as_ptr()) }, OpcraftStatus::Ok);
    assert!(dir.path().join("operators.json").exists());

    unsafe {
        opcraft_model_free(model);
        opcraft_env_free(env);
    }
}

#[test]
fn bad_method_is_an_invalid_argument() {
    let env = env("screws");
    let method = CString::new("guess").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(
        unsafe { opcraft_learn(env, method.as_ptr(), 5, 0, &mut model) },
        OpcraftStatus::InvalidArgument
    );
    assert!(model.is_null());
    unsafe { opcraft_env_free(env) };
}
