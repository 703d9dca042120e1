fn main() {
    std::process::exit(uwstyle_cli::run(std::env::args_os()));
}
