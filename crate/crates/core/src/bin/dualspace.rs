fn main() {
    std::process::exit(dualspace::cli::run(std::env::args_os()));
}
