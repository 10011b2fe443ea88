//! HMM-LSTM hybrids: HMM state distributions feed the LSTM's output layer.

mod joint;
mod sequential;

pub use joint::{
    eval_joint_hybrid, joint_hybrid_forward, joint_loss_grad, train_joint_hybrid, JointForward,
    JointHybridParams, JointObjective, JointState,
};
pub use sequential::{
    eval_hybrid, hybrid_forward, hybrid_loss_grad, precompute_hmm_track, train_sequential_hybrid,
    train_sequential_hybrid_on_track, HmmFeatureTrack, HybridForward, HybridParams,
    SequentialObjective,
};
