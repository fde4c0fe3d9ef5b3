fn main() {
    std::process::exit(ensemblekit::cli::run(std::env::args_os()));
}
