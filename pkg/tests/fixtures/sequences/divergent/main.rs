fn main() {
    let mut level = 5i32;
    let outcome = unsafe {
        let gauge = &mut level as *mut i32;
        *gauge -= 1;
        //~UB attempting a write access using <77> at alloc800[0x0], but that tag does not exist in the borrow stack for this location
        level
    };
    println!("outcome={outcome}");
}
