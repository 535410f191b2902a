fn main() {
    std::process::exit(korteweg::cli::main_with_args(std::env::args_os()));
}
