fn main() {
    let raw: u8 = 1;
    let flag = unsafe {
        let ptr = &raw as *const u8 as *const bool;
        *ptr //~UB constructing invalid value: encountered 3, but expected a boolean
    };
    println!("flag={flag}");
}
