fn main() {
    std::process::exit(transeig_cli::main_with_args(std::env::args_os()));
}
