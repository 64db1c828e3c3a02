"""lagkit: learning and simulating dynamics through black-box Lagrangians."""

from . import autodiff, dynamics, grid, mlp, simulate, systems, training
from .autodiff import ScalarFn
from .dynamics import PinvConfig, State, energy, hnn_rhs, lnn_accel
from .errors import (
    DegenerateHessianWarning,
    InvalidArgumentError,
    NumericError,
)
from .grid import GridState, flgn_accel, grid_energy, total_lagrangian
from .mlp import InitSpec, NetParams, as_scalar_fn, forward, init_params
from .simulate import Sample, Trajectory, generate_dataset, rk4_step, rollout
from .training import TrainConfig, adam_step, train

__version__ = "0.1.0"
