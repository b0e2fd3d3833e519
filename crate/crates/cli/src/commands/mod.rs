pub mod certify;
pub mod export_env;
pub mod improve;
pub mod train;
