fn main() {
    std::process::exit(mcvar::cli::cli_main(std::env::args_os()));
}
