fn main() {
    println!("flab");
}
