use std::sync::Mutex;

fn main() {
    let lock = Mutex::new(5i32);
    let guard = lock.lock().unwrap();
    let peek = unsafe {
        let ptr = &*guard as *const i32;
        *ptr
        //~UB deadlock: the evaluated program deadlocked
    };
    drop(guard);
    println!("peek={peek}");
}
