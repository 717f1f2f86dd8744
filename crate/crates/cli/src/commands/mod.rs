pub mod consistency;
pub mod eval;
pub mod make_data;
pub mod reconstruct;
pub mod train;
pub mod train_ae;
