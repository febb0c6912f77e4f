//! Offline pipeline for reranking retrieval candidates with a
//! language-model ranker: corpus preparation, matrix-factorization
//! retrieval, adaptive user sampling, prompt and instruction-dataset
//! construction, completion backends, hybrid utility fusion and evaluation.
//!
//! Numeric code is generic over the scalar type. The aliases below fix it to
//! `f64`, which is what the command-line tool uses.

pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod num;
pub mod prompting;
pub mod rerank;
pub mod retrieval;
pub mod sampling;
pub mod seed;

pub type FactorModelF64 = retrieval::FactorModel<f64>;
pub type CandidateListF64 = retrieval::CandidateList<f64>;
pub type RerankConfigF64 = rerank::RerankConfig<f64>;
pub type RerankResultF64 = rerank::RerankResult<f64>;
pub type UtilityVectorF64 = rerank::UtilityVector<f64>;
pub type RerankerF64<'a> = rerank::Reranker<'a, f64>;
pub type EnhancerF64<'a> = prompting::Enhancer<'a, f64>;
pub type OracleBackendF64<'a> = gateway::OracleBackend<'a, f64>;
