fn main() {
    let data = [0u8; 8];
    let ptr = data.as_ptr();
    let value = unsafe {
        let cast = ptr as *const u32;
        cast.read_unaligned() //~UB accessing memory based on pointer with alignment 1, but alignment 4 is required
    };
    println!("value={value}");
}
