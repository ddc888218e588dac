fn main() {
    std::process::exit(pkde::cli::run(std::env::args_os()));
}
