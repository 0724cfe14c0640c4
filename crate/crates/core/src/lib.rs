pub mod community;
pub mod corpus;
pub mod events;
pub mod marketstudy;
pub mod network;
pub mod sentiment;
pub mod statkit;
pub mod synthetic;
