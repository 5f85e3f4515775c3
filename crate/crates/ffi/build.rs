fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();

    let result = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(cbindgen::Config {
            language: cbindgen::Language::C,
            cpp_compat: true,
            include_guard: Some("PRIVMAP_H".into()),
            include_version: true,
            documentation: true,
            usize_is_size_t: true,
            ..Default::default()
        })
        .generate()
        .map(|bindings| {
            bindings.write_to_file(format!("{}/include/privmap.h", crate_dir));
        });

    if result.is_ok() {
        println!("cargo:rerun-if-changed=src/lib.rs");
        println!("cargo:rerun-if-changed=build.rs");
    }
}
