//! Dense networks with analytic gradients, the losses used for training,
//! gradient reversal, and momentum SGD with INV annealing.

mod loss;
mod net;
mod optim;

pub use loss::{argmax, binary_xent, grl_backward, l1_loss, softmax, softmax_xent};
pub use net::{Dense, DenseNet, Gradients, Trace};
pub use optim::{adaptation_ramp, inv_lr, OptimState, SgdConfig};
