fn main() {
    std::process::exit(lyap_cli::run(std::env::args_os()));
}
