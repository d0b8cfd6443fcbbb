fn main() {
    std::process::exit(secucode::cli::main_with_args(std::env::args_os()));
}
