fn main() {
    let buf = vec![1u8, 2, 3, 4];
    let ptr = buf.as_ptr();
    let last = unsafe {
        *ptr.add(3) //~UB out-of-bounds memory access: expected a pointer to 4 bytes of memory, but alloc1750 has size 2
    };
    println!("last={last}");
}
