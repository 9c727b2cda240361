fn main() {
    std::process::exit(avaface_app::cli::main());
}
