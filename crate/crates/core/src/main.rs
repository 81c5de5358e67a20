fn main() {
    std::process::exit(lumen_scan::harness::cli_main(std::env::args_os()));
}
