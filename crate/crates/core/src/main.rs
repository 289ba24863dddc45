fn main() {
    std::process::exit(autofocus_core::harness::cli::run(std::env::args_os()));
}
