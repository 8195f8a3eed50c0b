fn main() {
    std::process::exit(tailcut::cli::main_with_args(std::env::args_os()));
}
