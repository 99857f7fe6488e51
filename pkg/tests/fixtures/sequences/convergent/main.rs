fn main() {
    let mut slots = [1i32, 2, 3];
    let sum = unsafe {
        let probe = slots.len() as i32;
        let ptr = &mut slots[0] as *mut i32;
        *ptr += probe;
        //~UB attempting a read access using <91> at alloc900[0x0], but that tag does not exist in the borrow stack for this location
        //~UB attempting a write access using <92> at alloc900[0x4], but that tag does not exist in the borrow stack for this location
        //~UB attempting a read access using <93> at alloc900[0x8], but that tag does not exist in the borrow stack for this location
        slots[0] + slots[1] + slots[2]
    };
    println!("sum={sum}");
}
