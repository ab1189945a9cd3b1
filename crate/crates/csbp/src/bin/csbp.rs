fn main() {
    let code = csbp::harness::cli_main(std::env::args_os());
    std::process::exit(code);
}
