//! Network and brain checkpoints share the JSON decoder.

#![no_main]

use libfuzzer_sys::fuzz_target;
use stigmergy::agent::AgentBrain;
use stigmergy::neuralcore::Mlp;

fuzz_target!(|text: &str| {
    if let Ok(net) = Mlp::parse_checkpoint(text) {
        let back = Mlp::parse_checkpoint(&net.checkpoint_json()).expect("round trip");
        assert_eq!(back, net);
    }
    let _ = AgentBrain::parse_checkpoint(text);
});
