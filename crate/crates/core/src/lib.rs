pub mod engine;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod storage;
pub mod workload;

pub use engine::{
    compute_plan, diff_idb, identify_dihn_delete, identify_dihn_insert, Engine, IdbDiff,
    MaterializeReport, NodeAction, NodeUpdate, UpdateKind, UpdateReport,
};
pub use error::{Error, Result};
pub use graph::{Hrdg, NodeId, Rdg};
pub use model::*;
pub use storage::{DataStore, DataStoreBag, Pattern, StoreArena, StoreId};
