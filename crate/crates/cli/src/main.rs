fn main() {
    std::process::exit(vhil_cli::main_with_args(std::env::args_os()));
}
