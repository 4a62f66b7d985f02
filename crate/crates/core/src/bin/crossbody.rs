fn main() {
    std::process::exit(crossbody::harness::cli::run(std::env::args_os()));
}
