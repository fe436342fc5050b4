fn main() {
    std::process::exit(modalpf_cli::main_with_args(std::env::args_os()));
}
