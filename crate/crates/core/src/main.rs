fn main() {
    std::process::exit(mtdc::cli::dispatch(std::env::args_os()));
}
