pub mod cli;
pub mod data;
pub mod ddpf;
pub mod network;
pub mod powerflow;
pub mod reduction;
pub mod socp;
