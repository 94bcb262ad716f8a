fn main() {
    std::process::exit(hbf_harness::cli::main_with_args(std::env::args_os()));
}
