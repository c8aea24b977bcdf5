fn main() {
    std::process::exit(lvglasso::cli::main_with_args(std::env::args_os()));
}
