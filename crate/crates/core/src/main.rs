fn main() {
    std::process::exit(mbcsma::cli::main_with(std::env::args_os()));
}
