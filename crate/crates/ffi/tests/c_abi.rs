use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use corrbench::pipeline::GenerationConfig;
use corrbench::toy::{write_toy_dataset, ToySpec};
use corrbench_ffi::*;

fn generate(root: &Path) -> PathBuf {
    let data = root.join("data");
    write_toy_dataset(&data, ToySpec::default()).unwrap();
    let out = root.join("out");
    let text = format!(
        "data_dir = {}\noutput_dir = {}\nsetting = partial_partial\ncount_range = 300,400\nresolution = 96\nmax_instances = 1\n",
        data.display(),
        out.display()
    );
    let cfg = CString::new(text).unwrap();
    let (mut generated, mut failed) = (0usize, 0usize);
    assert_eq!(unsafe { cb_run_generation(cfg.as_ptr(), &mut generated, &mut failed) }, CbStatus::Ok);
    assert_eq!((generated, failed), (1, 0));
    assert!(GenerationConfig::load(out.join("config.cfg")).is_ok());
    out.join("train-000000")
}

#[test]
fn evaluate_ground_truth_through_the_abi() {
    let dir = tempfile::tempdir().unwrap();
    let inst_dir = CString::new(generate(dir.path()).display().to_string()).unwrap();
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(cb_instance_load(inst_dir.as_ptr(), &mut inst), CbStatus::Ok);
        let n = cb_instance_source_vertices(inst);
        assert!(n > 0);
        let mut gt = vec![0i64; n];
        assert_eq!(cb_instance_ground_truth(inst, gt.as_mut_ptr(), n), CbStatus::Ok);
        assert!(gt.contains(&-1), "partial pairs have unmatched vertices");

        let (mut auc, mut json) = (0.0, ptr::null_mut());
        assert_eq!(cb_instance_evaluate(inst, gt.as_ptr(), n, &mut auc, &mut json), CbStatus::Ok);
        assert!((auc - 100.0).abs() < 1e-9);
        let text: String = CStr::from_ptr(json).to_str().unwrap().split_whitespace().collect();
        assert!(text.contains("\"iou\":100.0") && text.contains("\"f1\":100.0"));
        cb_string_free(json);

        let bad = vec![-7i64; n];
        assert_eq!(cb_instance_evaluate(inst, bad.as_ptr(), n, ptr::null_mut(), &mut json), CbStatus::InvalidArgument);
        assert_eq!(cb_instance_evaluate(inst, gt.as_ptr(), n - 1, ptr::null_mut(), &mut json), CbStatus::InvalidArgument);
        cb_instance_free(inst);
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "corrbench.h"

int main(int argc, char **argv) {
    CbMesh *m = NULL;
    if (cb_mesh_load(argv[1], &m) != CB_STATUS_OK) return 1;
    size_t n = cb_mesh_vertex_count(m);
    double d[3];
    if (cb_geodesic_distances(m, 0, d, n) != CB_STATUS_OK) return 2;
    CbMesh *bad = NULL;
    CbStatus s = cb_mesh_load("/nonexistent.off", &bad);
    char msg[128];
    size_t len = cb_last_error(msg, sizeof msg);
    printf("%zu %.1f %.1f %d %d\n", n, d[1], d[2], (int)s, len > 0);
    cb_mesh_free(m);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libcorrbench_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if !lib.exists() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let mesh = dir.path().join("tri.off");
    std::fs::write(&mesh, "OFF\n3 1 0\n0 0 0\n3 0 0\n0 4 0\n3 0 1 2\n").unwrap();
    let exe = dir.path().join("smoke");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let o = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(&exe).arg(&mesh).output().unwrap();
    assert!(o.status.success());
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "3 3.0 4.0 3 1");
}
