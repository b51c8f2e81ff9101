fn main() {
    std::process::exit(gridmarl::cli::run(std::env::args_os()));
}
