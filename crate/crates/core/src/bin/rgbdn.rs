fn main() {
    std::process::exit(rgbdn::cli::run(std::env::args_os()));
}
