fn main() {
    std::process::exit(cinecam::cli::main_with_args(std::env::args_os()));
}
