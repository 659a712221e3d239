fn main() {
    std::process::exit(acmptc::cli::cli_main(std::env::args_os()));
}
