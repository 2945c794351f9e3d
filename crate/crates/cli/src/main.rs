fn main() {
    std::process::exit(hesn_cli::main_with_args(std::env::args_os()));
}
