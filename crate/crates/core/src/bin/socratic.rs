fn main() {
    std::process::exit(socratic_core::cli::main_with_args(std::env::args_os()));
}
