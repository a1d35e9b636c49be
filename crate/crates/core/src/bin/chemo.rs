fn main() {
    std::process::exit(chemotaxis_control::cli::run_from(std::env::args_os()));
}
