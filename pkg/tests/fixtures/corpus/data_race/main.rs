use std::thread;

static mut COUNTER: i32 = 0;

fn bump() {
    unsafe {
        COUNTER += 1; //~UB Data race detected between (1) non-atomic write on thread `unnamed-1` and (2) non-atomic read on thread `unnamed-2` at alloc1893+0x0
    }
}

fn main() {
    let worker = thread::spawn(bump);
    worker.join().unwrap();
    let value = unsafe { COUNTER };
    println!("counter={value}");
}
