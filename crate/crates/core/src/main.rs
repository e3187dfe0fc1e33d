fn main() {
    std::process::exit(fbsde_control::harness::cli::run(std::env::args_os()));
}
