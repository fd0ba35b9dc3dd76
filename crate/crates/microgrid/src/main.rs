fn main() {
    std::process::exit(microgrid::run());
}
