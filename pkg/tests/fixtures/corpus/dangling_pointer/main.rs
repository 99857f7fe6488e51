fn main() {
    let boxed = Box::new(7i32);
    let ptr = &*boxed as *const i32;
    let value = unsafe {
        let copy = *ptr;
        //~UB memory access failed: alloc1768 has been freed, so this pointer is dangling
        copy
    };
    drop(boxed);
    println!("value={value}");
}
