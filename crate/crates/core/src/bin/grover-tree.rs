fn main() {
    std::process::exit(grover_tree::cli::main_with_args(std::env::args_os()));
}
