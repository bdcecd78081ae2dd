fn main() {
    std::process::exit(lar_core::cli::run(std::env::args_os()));
}
