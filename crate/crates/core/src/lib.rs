//! Critic-guided policy reuse (CUP) on a from-scratch soft actor-critic.
//!
//! * [`tensor`]: flat-parameter MLPs, Adam, gradient checking.
//! * [`distributions`]: squashed Gaussian policy heads.
//! * [`envs`]: point-mass transfer tasks and random tabular MDPs.
//! * [`replay`]: replay buffer caching source-policy heads.
//! * [`sac`]: twin-critic soft actor-critic.
//! * [`checkpoint`]: binary agent snapshots.
//! * [`cup`]: guidance formation, adaptive weights and the regularized actor loss.
//! * [`tabular`]: exact soft/hard evaluation and improvement-bound verification.

pub mod checkpoint;
pub mod cup;
pub mod distributions;
pub mod envs;
pub mod replay;
pub mod sac;
pub mod tabular;
pub mod tensor;
