fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let out = std::path::Path::new(&crate_dir)
        .join("include")
        .join("swarm_init.h");
    std::fs::create_dir_all(out.parent().unwrap()).unwrap();
    let config = cbindgen::Config {
        language: cbindgen::Language::C,
        include_guard: Some("SWARM_INIT_H".into()),
        cpp_compat: true,
        enumeration: cbindgen::EnumConfig {
            prefix_with_name: true,
            ..Default::default()
        },
        ..Default::default()
    };
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation failed")
        .write_to_file(out);
    println!("cargo:rerun-if-changed=src/lib.rs");
}
