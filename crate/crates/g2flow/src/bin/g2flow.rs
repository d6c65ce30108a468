fn main() {
    std::process::exit(g2flow::cli::main_with_args(std::env::args_os()));
}
