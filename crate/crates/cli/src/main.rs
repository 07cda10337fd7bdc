fn main() {
    std::process::exit(autobcs_cli::run_cli(std::env::args_os()));
}
