extern "C" {
    fn abs(input: i32) -> i32;
}

fn main() {
    let magnitude = unsafe {
        abs(-6)
        //~UB calling a function with calling convention "C" using calling convention "Rust"
    };
    println!("magnitude={magnitude}");
}
