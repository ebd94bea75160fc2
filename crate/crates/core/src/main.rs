fn main() {
    std::process::exit(lorafix::cli::run(std::env::args_os()));
}
