fn main() {
    std::process::exit(glfit::cli::parse_and_dispatch(std::env::args_os()));
}
