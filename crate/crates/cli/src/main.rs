fn main() {
    std::process::exit(affctl_cli::main_with_args(std::env::args_os()));
}
