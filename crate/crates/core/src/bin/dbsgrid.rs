fn main() {
    std::process::exit(dbsgrid::scenario_io::cli_main(std::env::args_os()));
}
