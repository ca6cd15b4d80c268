fn main() {
    std::process::exit(testfix_cli::main_with_args(std::env::args_os()));
}
