fn main() {
    std::process::exit(ricci_lab::cli::run(std::env::args_os()));
}
