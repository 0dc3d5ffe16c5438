fn main() {
    std::process::exit(topsom::cli::main_with_args(std::env::args_os()));
}
