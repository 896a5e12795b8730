fn main() {
    std::process::exit(meanfield::cli::main_with(std::env::args_os()));
}
