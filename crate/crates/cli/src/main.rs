fn main() {
    std::process::exit(pmufault_cli::main_with_args(std::env::args_os()));
}
