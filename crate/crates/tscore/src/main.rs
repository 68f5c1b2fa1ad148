fn main() {
    std::process::exit(tscore::cli::run(std::env::args_os()));
}
