fn main() {
    std::process::exit(neurologic::cli::main_with_args(std::env::args_os()));
}
