fn main() {
    std::process::exit(dflm::cli::main_with_args(std::env::args_os()));
}
