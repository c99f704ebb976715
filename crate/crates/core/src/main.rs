fn main() {
    std::process::exit(handover::cli::run(std::env::args_os()));
}
