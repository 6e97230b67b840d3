fn main() {
    println!("unigest");
}
