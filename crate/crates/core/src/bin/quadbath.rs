fn main() {
    std::process::exit(quadbath::cli::run_from_args(std::env::args_os()));
}
