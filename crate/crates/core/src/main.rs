fn main() {
    std::process::exit(ssn::cli::main_with_args(std::env::args_os()));
}
