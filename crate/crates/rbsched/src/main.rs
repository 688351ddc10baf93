fn main() {
    std::process::exit(rbsched::harness::cli_main(std::env::args_os()));
}
