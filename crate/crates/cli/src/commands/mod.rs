pub mod gradcheck;
pub mod inspect;
pub mod oneshot;
pub mod represent;
pub mod synthetic;
pub mod train;
