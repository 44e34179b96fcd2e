pub mod bench;
pub mod mask;
pub mod modulate;
pub mod segment;
pub mod sim;
pub mod viz;
