fn main() {
    std::process::exit(vinet::cli::run_cli(std::env::args_os()));
}
