fn main() {
    std::process::exit(stiv::cli::main_with_args(std::env::args_os()));
}
