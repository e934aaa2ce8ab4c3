//! Transfer strategies over a frozen backbone: full fine-tuning (FT),
//! linear probing (LP), input prompt (IP), embedding prompt (EP), adapter,
//! and their combination IPET (EP + adapter).

mod adapter;
mod attach;
mod frozen;
mod input_prompt;
mod ledger;
mod prompt;
mod spec;

pub use adapter::{adapter_forward, AdapterVars};
pub use attach::attach;
pub use frozen::{assert_frozen, FrozenReport, FrozenSnapshot};
pub use input_prompt::{apply_input_prompt, input_prompt_index, input_prompt_shape};
pub use ledger::{count_params, LedgerGroup, ParamLedger};
pub use prompt::ep_layer_forward;
pub use spec::{Method, TuningSpec};
