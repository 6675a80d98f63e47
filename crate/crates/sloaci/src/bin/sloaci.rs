fn main() {
    std::process::exit(sloaci::harness::cli(std::env::args_os()));
}
