pub mod data;
pub mod eval;
pub mod model;

use crate::Command;

pub fn dispatch(cmd: Command, threads: usize) -> anyhow::Result<()> {
    match cmd {
        Command::BuildDataset(a) => data::build_dataset(a),
        Command::Perturb(a) => data::perturb(a),
        Command::Synth(a) => data::synth(a),
        Command::TrainHead(a) => model::train_head(a),
        Command::Probe(a) => model::probe(a),
        Command::Calibrate(a) => model::calibrate(a),
        Command::InitEncoder(a) => model::init_encoder(a),
        Command::Detect(a) => eval::detect(a),
        Command::Eval(a) => eval::eval(a),
        Command::CrossEval(a) => eval::cross_eval(a),
        Command::Retention(a) => eval::retention(a),
        Command::Bench(a) => eval::bench(a, threads),
    }
}
