fn checked_div(num: i32, den: i32) -> i32 {
    if den == 0 {
        panic!("division by zero");
    }
    num / den
}

fn main() {
    let twelve = 12i32;
    let ratio = unsafe {
        let ptr = &twelve as *const i32;
        checked_div(*ptr, 3)
        //~UB unwinding past the topmost frame of the stack
    };
    println!("ratio={ratio}");
}
