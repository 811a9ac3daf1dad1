from .layers import CondBatchNorm, LinearLayer, ResBlock, relu
from .network import (
    Gradients,
    Network,
    ScoreNetwork,
    Tape,
    backward,
    forward,
)
from .optim import AdamState, adam_step
from .serialization import read_tensors, write_tensors
