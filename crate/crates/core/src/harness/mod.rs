//! Run configuration, metrics, checkpoints, evaluation and the training driver.

mod checkpoint;
mod config;
mod eval;
mod metrics;
mod play;
mod run;

pub use checkpoint::{digest_hex, Checkpoint, VERSION as CHECKPOINT_VERSION};
pub use config::{ActionMode, Algorithm, NetworkConfig, RunConfig, DEFAULTS_TOML};
pub use eval::{evaluate_agent, Agent, EvalSummary, SOLVE_EPISODES, SOLVE_THRESHOLD};
pub use metrics::{read_metrics, JsonlSink, MemorySink, MetricKind, MetricRecord, MetricSink, Tee};
pub use play::{
    append_recordings, human_bench, read_recordings, replay_recording, CarView, ClientMessage, EntryKind,
    EpisodeRecording, HumanBench, Leaderboard, LeaderboardEntry, PlayMode, PlaySession, ServerMessage, TrackGeometry,
    HUMAN_REFERENCE, TICK_HZ,
};
pub use run::{
    eval_seed, evaluate_trainer, new_trainer, record_eval, restore_trainer, run_training, train_loop, RunDir, Trainer,
};
