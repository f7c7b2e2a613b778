fn main() {
    std::process::exit(marginlab_cli::cli::main_with(std::env::args().collect()));
}
