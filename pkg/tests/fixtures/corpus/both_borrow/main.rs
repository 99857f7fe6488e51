fn main() {
    let mut cell = 40i32;
    let reference = &mut cell;
    let alias = reference as *mut i32;
    let sum = unsafe {
        *alias += 2;
        //~UB read access through <3049> at alloc1893[0x0] is forbidden (Tree Borrows)
        *reference
    };
    println!("sum={sum}");
}
