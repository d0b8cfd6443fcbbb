//! Secure firmware updates for batteryless RFID-powered sensor tokens.

pub mod bch;
pub mod bits;
pub mod cli;
pub mod fuzzy;
pub mod gen2;
pub mod enroll;
pub mod layout;
pub mod mac;
pub mod powersim;
pub mod protocol;
pub mod puf;
