pub mod abe;
pub mod b64;
pub mod codec;
pub mod crypto;
pub mod key_schedule;
pub mod protocol;
pub mod registration;
pub mod time;
pub mod vectors;
