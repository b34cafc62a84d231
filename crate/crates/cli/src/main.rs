fn main() {
    std::process::exit(mixedgibbs_cli::run(std::env::args_os()));
}
