fn main() {
    std::process::exit(grouprec::cli::run(std::env::args_os()));
}
