fn main() {
    std::process::exit(fragsolve::cli::main_with_args(std::env::args()));
}
