fn main() {
    std::process::exit(rdlab::cli::run(std::env::args_os()));
}
