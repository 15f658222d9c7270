pub mod error;
pub mod groups;
pub mod space;
pub mod actions;
pub mod rohlin;
pub mod good_partition;
pub mod rewiring;
pub mod harness;
