use std::env;
use std::path::PathBuf;
use std::process::Command;

const VERSION: &str = "3.30.1";

fn main() {
    let out_dir = PathBuf::from(env::var("OUT_DIR").expect("OUT_DIR"));
    let source = PathBuf::from("sqlite3/sqlite3.c");
    println!("cargo:rerun-if-changed={}", source.display());
    println!("cargo:rerun-if-changed=build.rs");

    let lib_name = if cfg!(target_os = "macos") {
        format!("libsqlite3-{VERSION}.dylib")
    } else {
        format!("libsqlite3-{VERSION}.so")
    };
    let target = out_dir.join(&lib_name);

    // cc only produces static archives, so drive the configured compiler
    // directly to get a shared object that can be loaded at runtime.
    let compiler = cc::Build::new().opt_level(2).get_compiler();
    let mut cmd: Command = compiler.to_command();
    cmd.arg("-shared")
        .arg("-fPIC")
        .arg("-O2")
        .arg("-DSQLITE_THREADSAFE=1")
        .arg("-DSQLITE_OMIT_LOAD_EXTENSION")
        .arg("-DSQLITE_DEFAULT_MEMSTATUS=0")
        .arg("-w")
        .arg(&source)
        .arg("-o")
        .arg(&target);
    if cfg!(target_os = "linux") {
        cmd.arg("-Wl,-Bsymbolic").arg("-lpthread").arg("-lm");
    }
    let status = cmd.status().expect("failed to spawn C compiler");
    assert!(status.success(), "compiling SQLite {VERSION} failed");

    println!("cargo:rustc-env=CODDTEST_LEGACY_SQLITE_PATH={}", target.display());
    println!("cargo:rustc-env=CODDTEST_LEGACY_SQLITE_VERSION={VERSION}");
}
