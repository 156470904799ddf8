fn main() {
    std::process::exit(esle::cli::main_with(std::env::args_os()));
}
