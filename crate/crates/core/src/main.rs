fn main() {
    std::process::exit(fnls::cli::run(std::env::args_os()));
}
