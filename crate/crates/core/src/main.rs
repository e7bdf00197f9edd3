fn main() {
    std::process::exit(stormkit::cli::dispatch(std::env::args_os()));
}
