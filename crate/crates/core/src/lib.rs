//! Coverage-closure engine for Verilog designs.
//!
//! The pieces, bottom-up:
//! * [`hdl`] parses design sources into a structural [`hdl::DesignModel`];
//! * [`tbgen`] builds the DUT testbench template and splices testcases in;
//! * [`sim`] drives a simulator (Verilator or a scripted mock);
//! * [`coverage`] parses, merges, scores and annotates line coverage;
//! * [`llm`] holds conversations and talks to chat-completion backends;
//! * [`prompt`] renders prompts and decodes completions;
//! * [`engine`] runs the generate → simulate → feedback loop;
//! * [`report`] computes metrics and writes the results tree;
//! * [`app`] runs a manifest end to end.

pub mod app;
pub mod coverage;
pub mod engine;
pub mod hdl;
pub mod llm;
pub mod prompt;
pub mod report;
pub mod sim;
pub mod tbgen;
