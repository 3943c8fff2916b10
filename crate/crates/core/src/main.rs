fn main() {
    std::process::exit(spinberry::cli::run(std::env::args_os()));
}
