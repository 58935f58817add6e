fn main() {
    std::process::exit(tutor::cli::main_with_args(std::env::args_os()));
}
