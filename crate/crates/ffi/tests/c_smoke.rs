//! Compiles and runs the bundled C example against the generated header and
//! the static library, proving the ABI from the consumer side. Skips when no
//! C compiler is available.

use std::path::PathBuf;
use std::process::Command;

fn find_compiler() -> Option<&'static str> {
    for cc in ["cc", "clang", "gcc"] {
        if Command::new(cc)
            .arg("--version")
            .output()
            .is_ok_and(|out| out.status.success())
        {
            return Some(cc);
        }
    }
    None
}

#[test]
fn c_example_compiles_and_runs() {
    let Some(cc) = find_compiler() else {
        eprintln!("skipping: no C compiler found");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/debug/deps/<test-bin> -> target/debug
    let lib_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let staticlib = lib_dir.join("libprivmap_ffi.a");
    assert!(
        staticlib.exists(),
        "static library missing at {}",
        staticlib.display()
    );
    let out_dir = tempfile::tempdir().unwrap();
    let binary = out_dir.path().join("smoke");
    let compile = Command::new(cc)
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("examples/smoke.c"))
        .arg(&staticlib)
        .args(["-lm", "-lpthread", "-ldl"])
        .arg("-o")
        .arg(&binary)
        .output()
        .expect("compiler invocation");
    assert!(
        compile.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = Command::new(&binary).output().expect("smoke binary runs");
    assert!(
        run.status.success(),
        "smoke run failed: {}",
        String::from_utf8_lossy(&run.stderr)
    );
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(stdout.contains("C ABI smoke test passed"), "{}", stdout);
}
