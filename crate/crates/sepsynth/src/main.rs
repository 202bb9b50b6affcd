fn main() {
    eprintln!("CLI under construction");
    std::process::exit(3);
}
