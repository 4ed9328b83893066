fn main() {
    std::process::exit(privdac::cli::main_with_args(std::env::args_os()));
}
