fn main() {
    std::process::exit(stirap::cli::run(std::env::args_os()));
}
