fn main() {
    std::process::exit(codecomp::cli::main_with_args(std::env::args_os()));
}
