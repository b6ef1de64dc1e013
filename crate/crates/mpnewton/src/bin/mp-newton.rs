fn main() {
    eprintln!("mp-newton: not yet wired up");
    std::process::exit(2);
}
