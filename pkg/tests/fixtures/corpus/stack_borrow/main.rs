fn main() {
    let mut value = [10i32, 20, 30];
    let first = &mut value[0] as *mut i32;
    let total = unsafe {
        *first += 1;
        //~UB attempting a read access using <2472> at alloc1374[0x0], but that tag does not exist in the borrow stack for this location
        value[0] + value[1]
    };
    println!("total={total}");
}
