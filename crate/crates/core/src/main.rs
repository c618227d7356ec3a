fn main() {
    std::process::exit(frechet_core::cli::main_with_args(std::env::args_os()));
}
