fn main() {
    std::process::exit(efcp_cli::run(std::env::args_os()));
}
