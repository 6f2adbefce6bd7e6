fn main() {
    std::process::exit(gasflow::cli::run_cli(std::env::args_os()));
}
