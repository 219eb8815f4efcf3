//! End-to-end orchestration: an in-process deployment, the simulated user
//! agent that carries requests between RPs and the IdP, scenario scripts,
//! benchmarks and attack drills.

pub mod agent;
pub mod attack;
pub mod bench;
pub mod deploy;
pub mod scenario;

pub use agent::{AgentError, UserAgent};
pub use bench::BenchReport;
pub use deploy::{Deployment, DeploymentConfig, Setup};
pub use scenario::{ScenarioScript, Step};
