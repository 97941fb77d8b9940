fn main() {
    std::process::exit(tdcedn::cli::run(std::env::args_os()));
}
