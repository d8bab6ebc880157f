fn main() {
    std::process::exit(layerplace::cli::run(std::env::args_os()));
}
