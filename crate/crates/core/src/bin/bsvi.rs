fn main() {
    std::process::exit(bsvi::cli::run(std::env::args_os()));
}
