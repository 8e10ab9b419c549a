fn main() {
    std::process::exit(mbdeform::cli::main_with(std::env::args_os()));
}
