fn main() {
    std::process::exit(nctl::cli::run_cli(std::env::args_os()));
}
