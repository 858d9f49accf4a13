fn main() {
    std::process::exit(gocart::cli::run(std::env::args_os()));
}
