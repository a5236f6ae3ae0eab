fn main() {
    std::process::exit(shapecomp::cli::main_with_args(std::env::args().collect()));
}
