fn main() {
    let value = 9i32;
    let addr = &value as *const i32 as usize;
    let read = unsafe {
        let ptr = addr as *const i32;
        *ptr
        //~UB attempting to use a pointer with wildcard provenance created from an integer-to-pointer cast
    };
    println!("read={read}");
}
