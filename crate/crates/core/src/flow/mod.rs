//! Control flow and data flow over a statement list.
//!
//! Graphs are intraprocedural: a function declaration is a single opaque
//! statement of the enclosing code and its body gets a separate graph.
//! Arrays are tracked by base variable name only.

mod cfg;
mod defuse;
mod path;

pub use cfg::{
    build_cfg, build_cfg_function, build_cfg_stmts, covered_statements, Block, BlockId, Cfg, Edge,
    EdgeKind,
};
pub use defuse::{
    accesses, def_use, expr_accesses, stmt_def_use, target_accesses, Access, AccessKind, DefUse,
    StmtDefUse,
};
pub use path::{random_path, random_path_capped, CfPath, DEFAULT_MAX_PATH_BLOCKS};
