//! File formats and JSON document schemas.

pub mod docs;
pub mod pfm;
pub mod png;

pub use docs::{
    export_scene_bundle, fit_config_from_json, load_fit_config, load_rig, rig_from_json,
    rig_to_json, save_rig, save_trace, trace_to_jsonl, SceneDocument,
};
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};
pub use png::{read_png, write_png};
