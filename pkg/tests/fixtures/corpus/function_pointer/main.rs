fn answer() -> i32 {
    41
}

fn main() {
    let table: [fn() -> i32; 1] = [answer];
    let via = unsafe {
        let func = *table.get_unchecked(0);
        //~UB treating <alloc1290> as a function pointer, but memory does not point to a function
        func() + 1
    };
    println!("via={via}");
}
