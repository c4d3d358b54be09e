fn main() {
    std::process::exit(subdiffusion::cli::run(std::env::args_os()));
}
