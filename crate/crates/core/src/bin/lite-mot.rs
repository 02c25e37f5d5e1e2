fn main() {
    std::process::exit(lite_mot::cli::run(std::env::args_os()));
}
