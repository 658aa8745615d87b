//! Exercises the extern "C" surface through raw pointers, the way a
//! foreign caller would.

use ama_ffi::*;
use std::ffi::{CStr, CString};
use std::fs;
use std::ptr;

fn write_toy_dataset(path: &std::path::Path) {
    let mut rows = String::new();
    for i in 0..8 {
        let x = 0.5 + 0.1 * i as f64;
        rows.push_str(&format!(
            "{{\"task\":\"a\",\"prompt_features\":[0.0,0.0],\"chosen_features\":[{x},0.1],\"rejected_features\":[-{x},-0.1]}}\n"
        ));
    }
    fs::write(path, rows).unwrap();
}

#[test]
fn run_from_config_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dataset = dir.path().join("data.jsonl");
    write_toy_dataset(&dataset);
    let out = dir.path().join("run");
    let config = dir.path().join("config.json");
    fs::write(
        &config,
        serde_json::json!({
            "algorithm": "standard",
            "dataset": dataset,
            "output": out,
            "batch_size": 4,
            "steps": 10,
            "model_step_size": 0.1,
            "seed": 7,
        })
        .to_string(),
    )
    .unwrap();

    let config_c = CString::new(config.to_str().unwrap()).unwrap();
    let mut result: *mut AmaTrainResult = ptr::null_mut();
    let status = unsafe { ama_run_from_config(config_c.as_ptr(), &mut result) };
    assert_eq!(status, AmaStatus::AmaOk);
    assert!(!result.is_null());

    unsafe {
        assert_eq!(ama_train_result_num_tasks(result), 1);
        assert_eq!(ama_train_result_sample_count(result, 0), 40);
        assert_eq!(ama_train_result_sample_count(result, 1), -1);

        let mut params: *mut AmaParams = ptr::null_mut();
        assert_eq!(
            ama_train_result_final_params(result, &mut params),
            AmaStatus::AmaOk
        );
        assert_eq!(ama_params_dim(params), 2);
        let mut buf = [0.0f64; 2];
        assert_eq!(
            ama_params_copy_values(params, buf.as_mut_ptr(), 2),
            AmaStatus::AmaOk
        );
        assert!(buf.iter().all(|v| v.is_finite()));
        assert_eq!(
            ama_params_copy_values(params, buf.as_mut_ptr(), 1),
            AmaStatus::AmaInvalidArgument
        );

        // The exported artifact reloads to the same vector.
        let exported = out.join("params.bin");
        let exported_c = CString::new(exported.to_str().unwrap()).unwrap();
        let mut reloaded: *mut AmaParams = ptr::null_mut();
        assert_eq!(
            ama_params_load(exported_c.as_ptr(), &mut reloaded),
            AmaStatus::AmaOk
        );
        let mut buf2 = [0.0f64; 2];
        ama_params_copy_values(reloaded, buf2.as_mut_ptr(), 2);
        assert_eq!(buf, buf2);

        let mut acc = -1.0f64;
        let dataset_c = CString::new(dataset.to_str().unwrap()).unwrap();
        assert_eq!(
            ama_evaluate(exported_c.as_ptr(), dataset_c.as_ptr(), &mut acc),
            AmaStatus::AmaOk
        );
        assert!((0.0..=1.0).contains(&acc));

        ama_params_free(reloaded);
        ama_params_free(params);
        ama_train_result_free(result);
    }
}

#[test]
fn errors_set_message_and_code() {
    let missing = CString::new("/nonexistent/config.json").unwrap();
    let mut result: *mut AmaTrainResult = ptr::null_mut();
    let status = unsafe { ama_run_from_config(missing.as_ptr(), &mut result) };
    assert_eq!(status, AmaStatus::AmaIoError);
    assert!(result.is_null());
    let msg = unsafe { CStr::from_ptr(ama_last_error_message()) };
    assert!(msg.to_str().unwrap().contains("config.json"));

    let status = unsafe { ama_run_from_config(ptr::null(), &mut result) };
    assert_eq!(status, AmaStatus::AmaInvalidArgument);
}

#[test]
fn null_handles_are_inert() {
    unsafe {
        ama_train_result_free(ptr::null_mut());
        ama_params_free(ptr::null_mut());
        assert_eq!(ama_params_dim(ptr::null()), 0);
        assert_eq!(ama_train_result_num_tasks(ptr::null()), 0);
        assert_eq!(ama_train_result_sample_count(ptr::null(), 0), -1);
    }
}
