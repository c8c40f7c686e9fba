fn main() {
    std::process::exit(merge_spectrum::cli::run(std::env::args_os()));
}
