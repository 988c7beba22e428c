fn main() {
    std::process::exit(ragseg::cli::run(std::env::args_os()));
}
