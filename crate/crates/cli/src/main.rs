fn main() {
    std::process::exit(ausn_cli::run_cli(std::env::args_os()))
}
