fn main() {
    std::process::exit(hilbert_forest::cli::run(std::env::args_os()));
}
