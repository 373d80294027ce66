fn main() {
    std::process::exit(autoion::cli::run(std::env::args_os()));
}
