fn main() {
    std::process::exit(sbfd::cli::run(std::env::args_os()));
}
