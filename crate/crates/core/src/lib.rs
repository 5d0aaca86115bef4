pub mod agent;
pub mod llm;
pub mod obsk;
pub mod structured;
pub mod text;
pub mod tools;
pub mod trajectory;
