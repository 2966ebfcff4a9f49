fn main() {
    std::process::exit(cftp::cli::run(std::env::args_os()));
}
