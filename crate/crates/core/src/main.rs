fn main() {
    std::process::exit(songmeaning::cli::cli_main(std::env::args_os()));
}
