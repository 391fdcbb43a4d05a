"""Minimal deterministic dense-tensor engine (forward and backward)."""

from scarlet_kit.engine.checkpoint import load_checkpoint, save_checkpoint
from scarlet_kit.engine.functional import activation, batchnorm, classifier_head, conv2d, conv2d_backward
from scarlet_kit.engine.optim import sgd_step
from scarlet_kit.engine.tape import Tape
from scarlet_kit.engine.tensor import DTYPE, Parameter, Rng, as_tensor
