fn main() {
    std::process::exit(lpbic::cli::run_from(std::env::args_os()));
}
