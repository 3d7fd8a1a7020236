fn main() {
    // LAPACK is provided by the system OpenBLAS (which bundles the reference
    // LAPACK routines). Override the library name with CFL_LAPACK_LIB.
    let lib = std::env::var("CFL_LAPACK_LIB").unwrap_or_else(|_| "openblas".to_string());
    println!("cargo:rerun-if-env-changed=CFL_LAPACK_LIB");
    println!("cargo:rustc-link-lib=dylib={lib}");
}
