pub mod embed;
pub mod metrics;
pub mod render;
pub mod serve;
pub mod stylize;
pub mod toy;
pub mod train;
