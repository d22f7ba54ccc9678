pub mod aug_icl;
pub mod aug_question_replace;
pub mod aug_reverse;
pub mod aug_synonym;
pub mod corpus;
pub mod llm_client;
pub mod mathexpr;
pub mod pipeline;
pub mod verbs;
