fn main() {
    std::process::exit(perturbex::cli::main_with_args(std::env::args_os()));
}
