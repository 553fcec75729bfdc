fn main() {
    std::process::exit(fedbuff::harness::cli::cli_main(std::env::args_os()));
}
