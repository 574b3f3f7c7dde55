fn main() {
    std::process::exit(didiag::cli::run_from_args(std::env::args_os()));
}
